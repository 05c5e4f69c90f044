"""Layer kinds used by the network stack.

Each layer kind has a pair of pure functions (``*_forward`` returning an
output and a cache, ``*_backward`` consuming that cache) and a small class that
owns the parameters and keeps the most recent training cache. The pure
functions are what the gradient checks exercise; the classes are what
:class:`deepnet.model.Sequential` stacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from deepnet.errors import ShapeError, StateError, TrainingBatchError, UnsupportedOperationError
from deepnet.numerics import Matrix, RngState, as_matrix, col_stats, rng_uniform

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.99


class ActivationKind(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


# ---------------------------------------------------------------------------
# activations


def sigmoid(z: Matrix) -> Matrix:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: Matrix) -> Matrix:
    if z.shape[1] < 1:
        raise ShapeError("softmax needs at least one column")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def activate(kind: ActivationKind | str, z: Matrix) -> tuple[Matrix, tuple[Matrix, Matrix]]:
    """Apply ``kind`` element-wise (row-wise for softmax); returns (out, cache)."""
    kind = ActivationKind(kind)
    z = as_matrix(z, "z")
    if kind is ActivationKind.RELU:
        a = np.maximum(z, 0.0)
    elif kind is ActivationKind.SIGMOID:
        a = sigmoid(z)
    elif kind is ActivationKind.TANH:
        a = np.tanh(z)
    elif kind is ActivationKind.SOFTMAX:
        a = softmax(z)
    else:
        a = z.copy()
    return a, (z, a)


def activate_backward(kind: ActivationKind | str, cache: tuple[Matrix, Matrix], grad_out: Matrix) -> Matrix:
    kind = ActivationKind(kind)
    z, a = cache
    if grad_out.shape != a.shape:
        raise ShapeError(f"grad_out {grad_out.shape} does not match activation output {a.shape}")
    if kind is ActivationKind.RELU:
        return grad_out * (z > 0)
    if kind is ActivationKind.SIGMOID:
        return grad_out * a * (1.0 - a)
    if kind is ActivationKind.TANH:
        return grad_out * (1.0 - a * a)
    if kind is ActivationKind.SOFTMAX:
        raise UnsupportedOperationError(
            "standalone softmax backward is not provided; use "
            "deepnet.training.output_gradient for the fused softmax + cross-entropy gradient"
        )
    return grad_out


# ---------------------------------------------------------------------------
# dense


@dataclass
class DenseLayer:
    """Fully-connected layer ``x @ weights + bias`` with a post-affine activation."""

    weights: Matrix
    bias: np.ndarray
    activation: ActivationKind = ActivationKind.IDENTITY
    kind = "dense"

    def __post_init__(self):
        # own copies: sgd_step updates parameters in place
        self.weights = as_matrix(self.weights, "weights").copy()
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        self.activation = ActivationKind(self.activation)
        if self.bias.shape[0] != self.weights.shape[1]:
            raise ShapeError(f"bias length {self.bias.shape[0]} != out_dim {self.weights.shape[1]}")
        self._cache = None

    @classmethod
    def glorot(cls, in_dim: int, out_dim: int, rng: RngState, activation=ActivationKind.IDENTITY) -> "DenseLayer":
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        return cls(rng_uniform(rng, -limit, limit, (in_dim, out_dim)), np.zeros(out_dim), activation)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def param_count(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}

    def state(self) -> dict[str, np.ndarray]:
        return self.params()

    def forward(self, x: Matrix, training: bool = False, rng: RngState | None = None) -> Matrix:
        z, dcache = dense_forward(self, x)
        a, acache = activate(self.activation, z)
        if training:
            self._cache = (dcache, acache)
        return a

    def backward(self, grad_out: Matrix, fused_head: bool = False):
        """Gradients for this layer.

        With ``fused_head`` the incoming gradient is already taken with respect
        to the pre-activation logits (sigmoid/softmax fused with the loss).
        """
        if self._cache is None:
            raise StateError("dense layer has no training cache; run a train-mode forward first")
        dcache, acache = self._cache
        if not fused_head:
            grad_out = activate_backward(self.activation, acache, grad_out)
        grad_in, grad_w, grad_b = dense_backward(self, dcache, grad_out)
        return grad_in, {"weights": grad_w, "bias": grad_b}

    def clear_cache(self):
        self._cache = None


def dense_forward(layer: DenseLayer, x: Matrix) -> tuple[Matrix, Matrix]:
    x = as_matrix(x, "x")
    if x.shape[1] != layer.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, dense layer expects {layer.in_dim}")
    return x @ layer.weights + layer.bias, x


def dense_backward(layer: DenseLayer, cache: Matrix, grad_out: Matrix):
    x = cache
    grad_out = as_matrix(grad_out, "grad_out")
    if grad_out.shape != (x.shape[0], layer.out_dim):
        raise ShapeError(f"grad_out {grad_out.shape} does not match forward output {(x.shape[0], layer.out_dim)}")
    return grad_out @ layer.weights.T, x.T @ grad_out, grad_out.sum(axis=0)


# ---------------------------------------------------------------------------
# batch normalization


@dataclass
class BNCache:
    x_hat: Matrix
    var: np.ndarray
    inv_std: np.ndarray
    training: bool = True


@dataclass
class BatchNormLayer:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM
    kind = "batchnorm"

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64).reshape(-1))
        d = self.gamma.shape[0]
        if any(getattr(self, n).shape[0] != d for n in ("beta", "running_mean", "running_var")):
            raise ShapeError("batch-norm vectors must all have the same length")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"momentum must be in (0, 1), got {self.momentum}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self._cache = None

    @classmethod
    def fresh(cls, dim: int, epsilon: float = BN_EPSILON, momentum: float = BN_MOMENTUM) -> "BatchNormLayer":
        return cls(np.ones(dim), np.zeros(dim), np.zeros(dim), np.ones(dim), epsilon, momentum)

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    def param_count(self) -> int:
        # gamma, beta, running mean, running variance
        return 4 * self.dim

    def params(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}

    def state(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta, "running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x: Matrix, training: bool = False, rng: RngState | None = None) -> Matrix:
        if not training:
            return bn_forward_eval(self, x)
        out, self._cache = bn_forward_train(self, x)
        return out

    def backward(self, grad_out: Matrix, fused_head: bool = False):
        if self._cache is None:
            raise StateError("batch-norm layer has no training cache; run a train-mode forward first")
        grad_in, grad_gamma, grad_beta = bn_backward(self, self._cache, grad_out)
        return grad_in, {"gamma": grad_gamma, "beta": grad_beta}

    def clear_cache(self):
        self._cache = None


def bn_forward_train(layer: BatchNormLayer, x: Matrix, update_running: bool = True) -> tuple[Matrix, BNCache]:
    x = as_matrix(x, "x")
    if x.shape[1] != layer.dim:
        raise ShapeError(f"input has {x.shape[1]} columns, batch norm expects {layer.dim}")
    if x.shape[0] < 2:
        raise TrainingBatchError(f"training-mode batch norm needs a batch of at least 2, got {x.shape[0]}")
    mean, var = col_stats(x)
    inv_std = 1.0 / np.sqrt(var + layer.epsilon)
    x_hat = (x - mean) * inv_std
    if update_running:
        m = layer.momentum
        layer.running_mean = m * layer.running_mean + (1.0 - m) * mean
        layer.running_var = m * layer.running_var + (1.0 - m) * var
    return layer.gamma * x_hat + layer.beta, BNCache(x_hat, var, inv_std)


def bn_forward_eval(layer: BatchNormLayer, x: Matrix) -> Matrix:
    x = as_matrix(x, "x")
    if x.shape[1] != layer.dim:
        raise ShapeError(f"input has {x.shape[1]} columns, batch norm expects {layer.dim}")
    return layer.gamma * (x - layer.running_mean) / np.sqrt(layer.running_var + layer.epsilon) + layer.beta


def bn_backward(layer: BatchNormLayer, cache: BNCache, grad_out: Matrix):
    if not cache.training:
        raise StateError("batch-norm backward needs a cache from a training-mode forward")
    grad_out = as_matrix(grad_out, "grad_out")
    x_hat = cache.x_hat
    if grad_out.shape != x_hat.shape:
        raise ShapeError(f"grad_out {grad_out.shape} does not match forward output {x_hat.shape}")
    grad_gamma = (grad_out * x_hat).sum(axis=0)
    grad_beta = grad_out.sum(axis=0)
    grad_in = (layer.gamma * cache.inv_std) * (
        grad_out - grad_out.mean(axis=0) - x_hat * (grad_out * x_hat).mean(axis=0)
    )
    return grad_in, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# dropout


@dataclass
class DropoutLayer:
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""

    rate: float
    kind = "dropout"
    last_mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")
        self._has_cache = False

    def param_count(self) -> int:
        return 0

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def state(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: Matrix, training: bool = False, rng: RngState | None = None) -> Matrix:
        out, mask = dropout_forward(self, x, training, rng)
        if training:
            self.last_mask = mask
            self._has_cache = True
        return out

    def backward(self, grad_out: Matrix, fused_head: bool = False):
        if not self._has_cache:
            raise StateError("dropout layer has no training mask; run a train-mode forward first")
        return dropout_backward(self, self.last_mask, grad_out), {}

    def clear_cache(self):
        self.last_mask = None
        self._has_cache = False


def dropout_forward(layer: DropoutLayer, x: Matrix, training: bool, rng: RngState | None):
    """Returns (output, keep mask). The mask is None when nothing is dropped."""
    x = as_matrix(x, "x")
    if not training or layer.rate == 0.0:
        return x, None
    if rng is None:
        raise StateError("training-mode dropout needs an RngState")
    keep = rng.gen.random(x.shape) >= layer.rate
    return np.where(keep, x / (1.0 - layer.rate), 0.0), keep


def dropout_backward(layer: DropoutLayer, mask: np.ndarray | None, grad_out: Matrix) -> Matrix:
    if mask is None:
        return grad_out
    return np.where(mask, grad_out / (1.0 - layer.rate), 0.0)


Layer = DenseLayer | BatchNormLayer | DropoutLayer
