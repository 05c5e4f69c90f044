"""Deep feedforward classifiers for malware, incident and fraud detection."""

from deepnet.errors import (
    ConfigError,
    DataError,
    DivergenceError,
    ParseError,
    SchemaError,
    ShapeError,
    StateError,
    StratificationError,
    TrainingBatchError,
    UnsupportedOperationError,
    UnsupportedVersionError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "ParseError",
    "SchemaError",
    "ShapeError",
    "StateError",
    "StratificationError",
    "TrainingBatchError",
    "UnsupportedOperationError",
    "UnsupportedVersionError",
]
