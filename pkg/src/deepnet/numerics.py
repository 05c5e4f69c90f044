"""Dense float64 matrices and seeded random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64, rows are
samples and columns are features. Random numbers come from numpy's PCG64 bit
generator (O'Neill's permuted congruential generator, 128-bit state, XSL-RR
output), which produces the same stream for a given seed on every platform.
Child streams are derived with ``SeedSequence`` so that folds, trials and
dropout masks never share state.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from deepnet.errors import ShapeError

Matrix = np.ndarray


def as_matrix(a, name: str = "matrix") -> Matrix:
    """Coerce ``a`` to a 2-D float64 array, raising ShapeError otherwise."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def col_stats(a: Matrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and biased (divide by N) variance."""
    a = as_matrix(a)
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ShapeError(f"col_stats needs a non-empty matrix, got {a.shape}")
    mean = a.mean(axis=0)
    var = ((a - mean) ** 2).mean(axis=0)
    return mean, var


class RngState:
    """Single-owner seeded random stream.

    Not safe for concurrent mutation; give each worker its own state via
    :meth:`spawn` or :func:`derive`.
    """

    def __init__(self, seed: int | Sequence[int] = 0):
        if isinstance(seed, (int, np.integer)):
            if seed < 0 or seed >= 2**64:
                raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
            entropy: int | list[int] = int(seed)
        else:
            entropy = [int(s) for s in seed]
        self.seed = entropy
        self._seq = np.random.SeedSequence(entropy)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int) -> list["RngState"]:
        """Independent child streams; advances this state's spawn counter."""
        children = []
        for child in self._seq.spawn(n):
            state = RngState.__new__(RngState)
            state.seed = (self.seed, tuple(child.spawn_key))
            state._seq = child
            state.gen = np.random.Generator(np.random.PCG64(child))
            children.append(state)
        return children

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed!r})"


def derive(seed: int, *keys: int) -> RngState:
    """Deterministic stream keyed by ``(seed, *keys)``, e.g. (master, fold)."""
    return RngState([int(seed), *map(int, keys)])


def rng_uniform(r: RngState, lo: float, hi: float, shape: tuple[int, int]) -> Matrix:
    if not lo < hi:
        raise ValueError(f"rng_uniform needs lo < hi, got lo={lo}, hi={hi}")
    return r.gen.uniform(lo, hi, size=shape).astype(np.float64, copy=False)


def rng_normal(r: RngState, mean: float, std: float, shape) -> np.ndarray:
    return r.gen.normal(mean, std, size=shape)


def shuffled_indices(r: RngState, n: int) -> np.ndarray:
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    return r.gen.permutation(n)
