"""Exception hierarchy shared by every module."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DataError(ValueError):
    """Input data violates a contract (labels, emptiness, dimensions)."""


class ParseError(DataError):
    """A file could not be parsed."""


class SchemaError(DataError):
    """A file parsed but a required field or column is missing."""


class UnsupportedVersionError(ParseError):
    pass


class StratificationError(DataError):
    pass


class TrainingBatchError(ValueError):
    """Batch too small for training-mode batch normalization."""


class StateError(RuntimeError):
    """Operation called in the wrong lifecycle state (e.g. no cache)."""


class UnsupportedOperationError(NotImplementedError):
    pass


class DivergenceError(ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class ConfigError(ValueError):
    """Run configuration failed schema validation."""
