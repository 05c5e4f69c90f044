"""Network assembly, parameter accounting and the ``deepnet-v1`` model file.

Every hidden block is ``Dense(+ReLU) -> BatchNorm -> Dropout(0.01)``. The head
is a single sigmoid unit for two classes and a softmax layer otherwise. The
The full network uses the width pyramid 1024, 768, 512, 256, 128; the DNN-k family
uses its first k widths.

Model file layout (UTF-8 JSON, one layer object per line)::

    {"format": "deepnet-v1",
     "config": {input_dim, num_classes, hidden, dropout, batchnorm, faithful_trailing_bn, seed},
     "provenance": {...free-form, e.g. the run config...},
     "layers": [
    {"kind": "dense", "activation": "relu", "weights": [[...], ...], "bias": [...]},
    {"kind": "batchnorm", "epsilon": 1e-05, "momentum": 0.99, "gamma": [...], "beta": [...],
     "running_mean": [...], "running_var": [...]},
    {"kind": "dropout", "rate": 0.01}
    ]}

Floats are written with Python's shortest round-trip repr, so loading
reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from deepnet.errors import ParseError, ShapeError, StateError, UnsupportedVersionError
from deepnet.layers import ActivationKind, BatchNormLayer, DenseLayer, DropoutLayer, Layer
from deepnet.numerics import Matrix, RngState, as_matrix, derive

DEEPNET_WIDTHS = (1024, 768, 512, 256, 128)
DROPOUT_RATE = 0.01
FORMAT_VERSION = "deepnet-v1"

BINARY_CROSS_ENTROPY = "binary_cross_entropy"
CATEGORICAL_CROSS_ENTROPY = "categorical_cross_entropy"


@dataclass
class NetworkConfig:
    input_dim: int
    num_classes: int
    hidden: tuple[int, ...] = DEEPNET_WIDTHS
    dropout: float = DROPOUT_RATE
    batchnorm: bool = True
    faithful_trailing_bn: bool = False
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden plan must be non-empty positive widths, got {self.hidden}")

    @property
    def output_dim(self) -> int:
        return 1 if self.num_classes == 2 else self.num_classes

    @property
    def output_activation(self) -> ActivationKind:
        return ActivationKind.SIGMOID if self.num_classes == 2 else ActivationKind.SOFTMAX

    @property
    def loss(self) -> str:
        return BINARY_CROSS_ENTROPY if self.num_classes == 2 else CATEGORICAL_CROSS_ENTROPY

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class Sequential:
    """Ordered layer stack with a train/eval mode.

    ``forward`` in eval mode touches no state. In train mode each layer keeps
    the cache its backward needs, and dropout draws from ``self.rng``.
    """

    def __init__(self, layers: list[Layer], config: NetworkConfig | None = None, rng: RngState | None = None):
        if not layers:
            raise ValueError("a network needs at least one layer")
        self.layers = list(layers)
        self.config = config
        self.rng = rng if rng is not None else RngState(0)
        self.mode = "eval"
        self._have_caches = False
        self._check_dims()

    def _check_dims(self):
        width = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, DenseLayer):
                if width is not None and layer.in_dim != width:
                    raise ShapeError(f"layer {i}: dense expects {layer.in_dim} inputs, previous layer gives {width}")
                width = layer.out_dim
            elif isinstance(layer, BatchNormLayer):
                if width is not None and layer.dim != width:
                    raise ShapeError(f"layer {i}: batch norm over {layer.dim} features, previous layer gives {width}")
                width = layer.dim

    @property
    def input_dim(self) -> int:
        return next(l for l in self.layers if isinstance(l, DenseLayer)).in_dim

    @property
    def output_dim(self) -> int:
        return next(l for l in reversed(self.layers) if isinstance(l, DenseLayer)).out_dim

    @property
    def head(self) -> DenseLayer:
        return next(l for l in reversed(self.layers) if isinstance(l, DenseLayer))

    @property
    def has_trailing_bn(self) -> bool:
        return not isinstance(self.layers[-1], DenseLayer)

    def train(self) -> "Sequential":
        self.mode = "train"
        return self

    def eval(self) -> "Sequential":
        self.mode = "eval"
        return self

    def forward(self, x: Matrix, mode: str | None = None) -> Matrix:
        mode = mode or self.mode
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = as_matrix(x, "x")
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"input has {x.shape[1]} columns, network expects {self.input_dim}")
        training = mode == "train"
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=self.rng)
        if training:
            self._have_caches = True
        return x

    __call__ = forward

    def backward(self, loss_grad: Matrix) -> list[dict[str, np.ndarray]]:
        """Back-propagate a gradient taken w.r.t. the output head's logits.

        Returns one dict of parameter gradients per layer, aligned with
        ``self.layers`` (empty for parameter-free layers).
        """
        if not self._have_caches:
            raise StateError("backward needs a preceding train-mode forward")
        if self.has_trailing_bn:
            raise StateError(
                "the trailing batch norm after the output activation has no fused loss gradient; "
                "build with faithful_trailing_bn=False to train"
            )
        grads: list[dict[str, np.ndarray]] = [{} for _ in self.layers]
        g = as_matrix(loss_grad, "loss_grad")
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            g, grads[i] = self.layers[i].backward(g, fused_head=(i == last))
        return grads

    def clear_caches(self):
        for layer in self.layers:
            layer.clear_cache()
        self._have_caches = False

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def param_table(self) -> list[dict[str, Any]]:
        """Per-layer rows in the shape of the architecture table."""
        rows = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, DenseLayer):
                kind, units, act = "Fully-connected", layer.out_dim, layer.activation.value
            elif isinstance(layer, BatchNormLayer):
                kind, units, act = "Batch Normalization", layer.dim, ""
            else:
                kind, units, act = f"Dropout ({layer.rate:g})", None, ""
            rows.append({"layers": f"{i}-{i + 1}", "type": kind, "units": units,
                         "activation": act, "parameters": layer.param_count()})
        return rows


def build_network(config: NetworkConfig) -> Sequential:
    init_rng = derive(config.seed, 0)
    layers: list[Layer] = []
    width = config.input_dim
    for units in config.hidden:
        layers.append(DenseLayer.glorot(width, units, init_rng, ActivationKind.RELU))
        if config.batchnorm:
            layers.append(BatchNormLayer.fresh(units))
        layers.append(DropoutLayer(config.dropout))
        width = units
    layers.append(DenseLayer.glorot(width, config.output_dim, init_rng, config.output_activation))
    if config.faithful_trailing_bn:
        layers.append(BatchNormLayer.fresh(config.output_dim))
    return Sequential(layers, config, derive(config.seed, 1))


def build_deepnet(input_dim: int, num_classes: int, faithful_trailing_bn: bool = False,
                  seed: int = 0, batchnorm: bool = True) -> Sequential:
    return build_network(NetworkConfig(input_dim, num_classes, DEEPNET_WIDTHS,
                                       batchnorm=batchnorm, faithful_trailing_bn=faithful_trailing_bn, seed=seed))


def build_topology(depth: int, input_dim: int, num_classes: int, seed: int = 0, batchnorm: bool = True) -> Sequential:
    """DNN-k: the first ``depth`` widths of the full pyramid, no trailing BN."""
    if not 1 <= depth <= len(DEEPNET_WIDTHS):
        raise ValueError(f"depth must be in 1..{len(DEEPNET_WIDTHS)}, got {depth}")
    return build_network(NetworkConfig(input_dim, num_classes, DEEPNET_WIDTHS[:depth], batchnorm=batchnorm, seed=seed))


def param_count(net: Sequential) -> int:
    return net.param_count()


def forward(net: Sequential, x: Matrix, mode: str = "eval") -> Matrix:
    return net.forward(x, mode)


def backward(net: Sequential, loss_grad: Matrix) -> list[dict[str, np.ndarray]]:
    return net.backward(loss_grad)


# ---------------------------------------------------------------------------
# persistence


def _layer_to_dict(layer: Layer) -> dict[str, Any]:
    if isinstance(layer, DenseLayer):
        return {"kind": "dense", "activation": layer.activation.value,
                "weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
    if isinstance(layer, BatchNormLayer):
        return {"kind": "batchnorm", "epsilon": layer.epsilon, "momentum": layer.momentum,
                "gamma": layer.gamma.tolist(), "beta": layer.beta.tolist(),
                "running_mean": layer.running_mean.tolist(), "running_var": layer.running_var.tolist()}
    return {"kind": "dropout", "rate": layer.rate}


def dumps(net: Sequential, provenance: dict[str, Any] | None = None) -> str:
    for i, layer in enumerate(net.layers):
        for name, arr in layer.state().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"layers[{i}].{name} contains non-finite values; refusing to save")
    head = {"format": FORMAT_VERSION,
            "config": net.config.to_dict() if net.config else None,
            "provenance": provenance or {}}
    lines = [json.dumps(head)[:-1] + ', "layers": [']
    body = [json.dumps(_layer_to_dict(layer)) for layer in net.layers]
    lines.append(",\n".join(body))
    lines.append("]}")
    return "\n".join(lines) + "\n"


def save(net: Sequential, path: str | Path, provenance: dict[str, Any] | None = None) -> None:
    Path(path).write_text(dumps(net, provenance), encoding="utf-8")


def _field(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}.{key}: missing field")
    return obj[key]


def _vector(value, where: str, length: int | None = None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a numeric vector ({exc})") from None
    if arr.ndim != 1 or (length is not None and arr.shape[0] != length):
        raise ParseError(f"{where}: expected vector of length {length}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{where}: non-finite value")
    return arr


def _matrix(value, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a numeric matrix ({exc})") from None
    if arr.ndim != 2 or 0 in arr.shape:
        raise ParseError(f"{where}: expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{where}: non-finite value")
    return arr


def _layer_from_dict(d: dict, where: str) -> Layer:
    kind = _field(d, "kind", where)
    if kind == "dense":
        w = _matrix(_field(d, "weights", where), f"{where}.weights")
        b = _vector(_field(d, "bias", where), f"{where}.bias", w.shape[1])
        try:
            act = ActivationKind(_field(d, "activation", where))
        except ValueError:
            raise ParseError(f"{where}.activation: unknown activation {d['activation']!r}") from None
        return DenseLayer(w, b, act)
    if kind == "batchnorm":
        gamma = _vector(_field(d, "gamma", where), f"{where}.gamma")
        n = gamma.shape[0]
        vecs = {k: _vector(_field(d, k, where), f"{where}.{k}", n) for k in ("beta", "running_mean", "running_var")}
        try:
            return BatchNormLayer(gamma, vecs["beta"], vecs["running_mean"], vecs["running_var"],
                                  float(_field(d, "epsilon", where)), float(_field(d, "momentum", where)))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}: {exc}") from None
    if kind == "dropout":
        try:
            return DropoutLayer(float(_field(d, "rate", where)))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}.rate: {exc}") from None
    raise ParseError(f"{where}.kind: unknown layer kind {kind!r}")


def loads(text: str) -> tuple[Sequential, dict[str, Any]]:
    """Parse a model document; returns (network, provenance)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("$: expected an object")
    version = _field(doc, "format", "$")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"$.format: unsupported model format {version!r}, expected {FORMAT_VERSION!r}")
    raw_layers = _field(doc, "layers", "$")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ParseError("$.layers: expected a non-empty list")
    layers = [_layer_from_dict(d, f"$.layers[{i}]") for i, d in enumerate(raw_layers)]
    config = None
    raw_cfg = doc.get("config")
    if raw_cfg is not None:
        try:
            config = NetworkConfig(**raw_cfg)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"$.config: {exc}") from None
    try:
        net = Sequential(layers, config, derive(config.seed if config else 0, 1))
    except ShapeError as exc:
        raise ParseError(f"$.layers: {exc}") from None
    return net, doc.get("provenance") or {}


def load(path: str | Path) -> Sequential:
    return load_with_provenance(path)[0]


def load_with_provenance(path: str | Path) -> tuple[Sequential, dict[str, Any]]:
    return loads(Path(path).read_text(encoding="utf-8"))


def parameters_equal(a: Sequential, b: Sequential) -> bool:
    if len(a.layers) != len(b.layers):
        return False
    for la, lb in zip(a.layers, b.layers):
        if type(la) is not type(lb):
            return False
        sa, sb = la.state(), lb.state()
        if sa.keys() != sb.keys() or any(not np.array_equal(sa[k], sb[k]) for k in sa):
            return False
    return True

