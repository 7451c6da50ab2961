"""Array helpers and the deterministic random source used everywhere else.

Tensors are plain numpy ndarrays: row-major, channels-last for images
([N, H, W, C]), float32 for training and float64 for gradient checks.
The functions here add the shape/finiteness validation the rest of the
package relies on; the arithmetic itself is numpy's.  Repeated calls on
identical inputs are bitwise identical; cross-platform bitwise equality
is not a goal.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import NumericsError, ShapeError

Tensor = np.ndarray

DEFAULT_DTYPE = np.float32


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not dims:
        raise ShapeError("shape must have at least one extent")
    for d in dims:
        if d < 1:
            raise ShapeError(f"extents must be >= 1, got {dims}")
    return dims


def _check_finite(a: Tensor, what: str) -> Tensor:
    if not np.all(np.isfinite(a)):
        raise NumericsError(f"{what} produced non-finite values")
    return a


def create(shape: Sequence[int], fill: float | Sequence[float] = 0.0,
           dtype=DEFAULT_DTYPE) -> Tensor:
    """Build a tensor of `shape` from a scalar fill or a flat value list."""
    dims = _check_shape(shape)
    count = math.prod(dims)
    if np.isscalar(fill):
        out = np.full(dims, fill, dtype=dtype)
    else:
        values = np.asarray(fill, dtype=dtype).reshape(-1)
        if values.size != count:
            raise ShapeError(
                f"value list has {values.size} elements, shape {dims} needs {count}")
        out = values.reshape(dims)
    return _check_finite(out, "create")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [M,K] by b [K,N]."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} x {b.shape}")
    return _check_finite(a @ b, "matmul")


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ, {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _check_finite(a + b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _check_finite(a - b, "sub")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "hadamard")
    return _check_finite(a * b, "hadamard")


def scale(a: Tensor, c: float) -> Tensor:
    return _check_finite(a * c, "scale")


def clamp_low(a: Tensor, lo: float) -> Tensor:
    return np.maximum(a, lo)


def reduce_sum(a: Tensor) -> float:
    if a.size == 0:
        raise ShapeError("reduce over empty tensor")
    return float(np.sum(a))


def reduce_mean(a: Tensor) -> float:
    if a.size == 0:
        raise ShapeError("reduce over empty tensor")
    return float(np.mean(a))


def argmax_last_axis(a: Tensor) -> np.ndarray:
    """Per leading index, the smallest index attaining the row maximum."""
    if a.size == 0:
        raise ShapeError("argmax over empty tensor")
    return np.argmax(a, axis=-1)


class Rng:
    """Seeded deterministic random source (PCG64 behind numpy's Generator).

    Identical seeds give identical draw sequences.  `derive` forks a child
    stream that depends only on (seed, key path), so independent consumers
    (shuffling, init, dropout, augmentation) cannot perturb each other.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._path = _path
        ss = np.random.SeedSequence(self.seed, spawn_key=_path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def derive(self, *keys: int) -> "Rng":
        return Rng(self.seed, self._path + tuple(int(k) for k in keys))

    def random(self, shape=None) -> Tensor | float:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape=None):
        return self._gen.uniform(low, high, shape)

    def normal(self, loc: float = 0.0, scale: float = 1.0, shape=None):
        return self._gen.normal(loc, scale, shape)

    def integers(self, low: int, high: int, shape=None):
        return self._gen.integers(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self._path})"
