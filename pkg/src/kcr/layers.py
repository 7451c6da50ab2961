"""Forward and backward passes for every layer of the network.

All layers operate on batched channels-last arrays ([N, H, W, C] for
spatial layers, [N, features] after flattening).  Training-mode forward
passes cache whatever backward needs (inputs, dropout masks, pool argmax
positions), which makes a layer instance single-threaded property; build
separate models to train concurrently.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericsError, ShapeError
from .tensor import Rng


class Mode(enum.Enum):
    TRAIN = "train"
    INFER = "infer"


class Param:
    """One learnable array plus its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    def zero_grad(self) -> None:
        self.grad[...] = 0


def glorot_uniform(shape: tuple[int, ...], fan_in: int, fan_out: int,
                   rng: Rng, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


class Layer:
    """Base layer: shape inference at build time, forward/backward after."""

    name = "layer"

    def initialize(self, input_shape: tuple[int, ...], rng: Rng | None,
                   dtype) -> tuple[int, ...]:
        """Validate input_shape, create parameters, return output shape."""
        raise NotImplementedError

    def params(self) -> list[Param]:
        return []

    def param_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def forward(self, x: np.ndarray, mode: Mode = Mode.INFER,
                rng: Rng | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Rescaling(Layer):
    """y = scale * x; used to map 0..255 pixels into 0..1."""

    def __init__(self, scale: float = 1.0 / 255.0):
        self.scale = float(scale)

    def initialize(self, input_shape, rng, dtype):
        return tuple(input_shape)

    def forward(self, x, mode=Mode.INFER, rng=None):
        return x * np.asarray(self.scale, dtype=x.dtype)

    def backward(self, grad):
        return grad * np.asarray(self.scale, dtype=grad.dtype)


def _same_pads(extent: int, k: int, stride: int) -> tuple[int, int, int]:
    """(out, pad_lo, pad_hi) so that out == ceil(extent / stride)."""
    out = -(-extent // stride)
    total = max((out - 1) * stride + k - extent, 0)
    lo = total // 2
    return out, lo, total - lo


class Conv2D(Layer):
    """2-D convolution with shared kernel/bias per output channel.

    Kernel layout [kh, kw, Cin, Cout]; forward is im2col + one matrix
    product, backward scatters the column gradient back with the same
    window arithmetic, so both sides see identical summation order.
    """

    def __init__(self, filters: int, kernel_size: int = 3, stride: int = 1,
                 padding: str = "same"):
        if filters < 1:
            raise ShapeError("filters must be >= 1")
        if kernel_size < 1:
            raise ShapeError("kernel extents must be >= 1")
        if stride < 1:
            raise ShapeError("stride must be >= 1")
        if padding not in ("same", "valid"):
            raise ShapeError(f"unknown padding {padding!r}")
        self.filters = int(filters)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.padding = padding
        self.kernel: Param | None = None
        self.bias: Param | None = None
        self._cache = None

    def initialize(self, input_shape, rng, dtype):
        if len(input_shape) != 3:
            raise ShapeError(f"conv2d expects [H,W,C] input, got {input_shape}")
        h, w, cin = input_shape
        k = self.kernel_size
        oh, *_ = self._geometry(h)
        ow, *_ = self._geometry(w)
        if self.padding == "valid" and (h < k or w < k):
            raise ShapeError(f"kernel {k}x{k} larger than input {h}x{w}")
        self.in_channels = cin
        fan_in = k * k * cin
        fan_out = k * k * self.filters
        self.kernel = Param("kernel", glorot_uniform(
            (k, k, cin, self.filters), fan_in, fan_out, rng, dtype))
        self.bias = Param("bias", np.zeros(self.filters, dtype=dtype))
        return (oh, ow, self.filters)

    def _geometry(self, extent: int) -> tuple[int, int, int]:
        if self.padding == "same":
            return _same_pads(extent, self.kernel_size, self.stride)
        out = (extent - self.kernel_size) // self.stride + 1
        return out, 0, 0

    def params(self):
        return [self.kernel, self.bias]

    def _columns(self, x: np.ndarray):
        n, h, w, c = x.shape
        k, s = self.kernel_size, self.stride
        oh, pt, pb = self._geometry(h)
        ow, pl, pr = self._geometry(w)
        if oh < 1 or ow < 1:
            raise ShapeError(f"kernel {k}x{k} larger than padded input {h}x{w}")
        xp = x if (pt | pb | pl | pr) == 0 else np.pad(
            x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
        # [N, oh, ow, C, kh, kw] -> columns ordered (kh, kw, C) to match
        # the row-major flattening of the kernel
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
        return cols.reshape(n * oh * ow, k * k * c), oh, ow, (pt, pb, pl, pr)

    def forward(self, x, mode=Mode.INFER, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"conv2d expects [N,H,W,C], got {x.shape}")
        if x.shape[3] != self.in_channels:
            raise ShapeError(
                f"conv2d built for {self.in_channels} channels, got {x.shape[3]}")
        cols, oh, ow, pads = self._columns(x)
        kmat = self.kernel.value.reshape(-1, self.filters)
        out = cols @ kmat + self.bias.value
        if mode is Mode.TRAIN:
            self._cache = (x.shape, cols, oh, ow, pads)
        return out.reshape(x.shape[0], oh, ow, self.filters)

    def backward(self, grad):
        if self._cache is None:
            raise ShapeError("conv2d backward without cached forward")
        x_shape, cols, oh, ow, (pt, pb, pl, pr) = self._cache
        n, h, w, c = x_shape
        k, s = self.kernel_size, self.stride
        if grad.shape != (n, oh, ow, self.filters):
            raise ShapeError(
                f"upstream shape {grad.shape} != forward output {(n, oh, ow, self.filters)}")
        g2 = grad.reshape(-1, self.filters)
        self.bias.grad += g2.sum(axis=0)
        self.kernel.grad += (cols.T @ g2).reshape(self.kernel.value.shape)
        dcols = (g2 @ self.kernel.value.reshape(-1, self.filters).T)
        d6 = dcols.reshape(n, oh, ow, k, k, c)
        dxp = np.zeros((n, h + pt + pb, w + pl + pr, c), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + (oh - 1) * s + 1:s,
                    j:j + (ow - 1) * s + 1:s, :] += d6[:, :, :, i, j, :]
        return dxp[:, pt:pt + h, pl:pl + w, :]


class ReLU(Layer):
    """max(0, x); the subgradient at exactly 0 is taken as 0."""

    def __init__(self):
        self._mask = None

    def initialize(self, input_shape, rng, dtype):
        return tuple(input_shape)

    def forward(self, x, mode=Mode.INFER, rng=None):
        if mode is Mode.TRAIN:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, grad):
        if self._mask is None:
            raise ShapeError("relu backward without cached forward")
        return grad * self._mask


class MaxPool2D(Layer):
    """Non-overlapping max pooling; odd trailing rows/columns are dropped.

    Window ties route to the first position in row-major scan order, both
    in the cached argmax and therefore in the gradient.
    """

    def __init__(self, pool: int = 2, stride: int = 2):
        if pool < 1:
            raise ShapeError("pool must be >= 1")
        if stride != pool:
            raise ShapeError("only stride == pool windows are supported")
        self.pool = int(pool)
        self.stride = int(stride)
        self._cache = None

    def initialize(self, input_shape, rng, dtype):
        if len(input_shape) != 3:
            raise ShapeError(f"maxpool expects [H,W,C] input, got {input_shape}")
        h, w, c = input_shape
        if h < self.pool or w < self.pool:
            raise ShapeError(f"input {h}x{w} smaller than pool window {self.pool}")
        return (h // self.pool, w // self.pool, c)

    def forward(self, x, mode=Mode.INFER, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"maxpool expects [N,H,W,C], got {x.shape}")
        n, h, w, c = x.shape
        p = self.pool
        if h < p or w < p:
            raise ShapeError(f"input {h}x{w} smaller than pool window {p}")
        oh, ow = h // p, w // p
        xc = x[:, :oh * p, :ow * p, :]
        win = xc.reshape(n, oh, p, ow, p, c).transpose(0, 1, 3, 2, 4, 5)
        win = win.reshape(n, oh, ow, p * p, c)
        idx = np.argmax(win, axis=3)
        out = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        if mode is Mode.TRAIN:
            self._cache = (x.shape, idx)
        return out

    def backward(self, grad):
        if self._cache is None:
            raise ShapeError("maxpool backward without cached forward")
        (n, h, w, c), idx = self._cache
        p = self.pool
        oh, ow = h // p, w // p
        if grad.shape != (n, oh, ow, c):
            raise ShapeError(f"upstream shape {grad.shape} != {(n, oh, ow, c)}")
        scatter = np.zeros((n, oh, ow, p * p, c), dtype=grad.dtype)
        np.put_along_axis(scatter, idx[:, :, :, None, :],
                          grad[:, :, :, None, :], axis=3)
        block = scatter.reshape(n, oh, ow, p, p, c).transpose(0, 1, 3, 2, 4, 5)
        dx = np.zeros((n, h, w, c), dtype=grad.dtype)
        dx[:, :oh * p, :ow * p, :] = block.reshape(n, oh * p, ow * p, c)
        return dx


class Flatten(Layer):
    """Row-major linearization of everything past the batch axis."""

    def __init__(self):
        self._shape = None

    def initialize(self, input_shape, rng, dtype):
        return (math.prod(input_shape),)

    def forward(self, x, mode=Mode.INFER, rng=None):
        if mode is Mode.TRAIN:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        if self._shape is None:
            raise ShapeError("flatten backward without cached forward")
        return grad.reshape(self._shape)


class Dense(Layer):
    """Fully connected layer: y = x W + b."""

    def __init__(self, units: int):
        if units < 1:
            raise ShapeError("units must be >= 1")
        self.units = int(units)
        self.weights: Param | None = None
        self.bias: Param | None = None
        self._x = None

    def initialize(self, input_shape, rng, dtype):
        if len(input_shape) != 1:
            raise ShapeError(f"dense expects flat input, got {input_shape}")
        fan_in = input_shape[0]
        self.weights = Param("weights", glorot_uniform(
            (fan_in, self.units), fan_in, self.units, rng, dtype))
        self.bias = Param("bias", np.zeros(self.units, dtype=dtype))
        return (self.units,)

    def params(self):
        return [self.weights, self.bias]

    def forward(self, x, mode=Mode.INFER, rng=None):
        if x.ndim != 2 or x.shape[1] != self.weights.value.shape[0]:
            raise ShapeError(
                f"dense expects [N,{self.weights.value.shape[0]}], got {x.shape}")
        if mode is Mode.TRAIN:
            self._x = x
        return x @ self.weights.value + self.bias.value

    def backward(self, grad):
        if self._x is None:
            raise ShapeError("dense backward without cached forward")
        self.weights.grad += self._x.T @ grad
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weights.value.T


class Dropout(Layer):
    """Inverted dropout: keep with probability 1-rate, scale by 1/(1-rate).

    Inference is exactly the identity, so a trained model needs no weight
    rescaling at test time.
    """

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ShapeError(f"dropout rate must be in [0,1), got {rate}")
        self.rate = float(rate)
        self._mask = None

    def initialize(self, input_shape, rng, dtype):
        return tuple(input_shape)

    def forward(self, x, mode=Mode.INFER, rng=None):
        if mode is Mode.INFER or self.rate == 0.0:
            self._mask = 1.0
            return x
        if rng is None:
            raise ShapeError("dropout in train mode needs an rng")
        keep = rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / np.asarray(1.0 - self.rate, x.dtype)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            raise ShapeError("dropout backward without cached forward")
        return grad * self._mask


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift; rows sum to 1 within 1e-6."""
    if not np.all(np.isfinite(x)):
        raise NumericsError("softmax received non-finite input")
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


class Softmax(Layer):
    """K-way softmax head producing class probabilities."""

    def __init__(self):
        self._probs = None

    def initialize(self, input_shape, rng, dtype):
        if len(input_shape) != 1 or input_shape[0] < 1:
            raise ShapeError(f"softmax expects flat input, got {input_shape}")
        return tuple(input_shape)

    def forward(self, x, mode=Mode.INFER, rng=None):
        p = softmax(x)
        if mode is Mode.TRAIN:
            self._probs = p
        return p

    def backward(self, grad):
        # Exact Jacobian; the training path bypasses this with the fused
        # cross-entropy gradient, but layer-level checks exercise it.
        if self._probs is None:
            raise ShapeError("softmax backward without cached forward")
        p = self._probs
        inner = np.sum(grad * p, axis=-1, keepdims=True)
        return p * (grad - inner)
