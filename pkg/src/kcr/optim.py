"""ADAM and plain SGD over a list of parameters.

Both optimizers zero every gradient after applying it, so a second step
without a fresh backward pass is a no-op.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericsError
from .layers import Param


def _check_grads(params: list[Param]) -> bool:
    """Validate gradients; returns False when every gradient is exactly zero.

    An all-zero gradient set means no backward pass ran since the last
    step, so the step is treated as a no-op instead of applying stale
    momentum.
    """
    any_nonzero = False
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericsError(f"non-finite gradient for parameter {p.name!r}")
        any_nonzero = any_nonzero or bool(np.any(p.grad))
    return any_nonzero


class Sgd:
    """theta <- theta - lr * g; the oracle baseline for optimizer tests."""

    def __init__(self, params: list[Param], lr: float):
        self.params = list(params)
        self.lr = float(lr)

    def step(self) -> None:
        if not _check_grads(self.params):
            return
        for p in self.params:
            p.value -= np.asarray(self.lr, dtype=p.value.dtype) * p.grad
            p.zero_grad()


class Adam:
    """ADAM with bias correction; eps is added outside the square root."""

    def __init__(self, params: list[Param], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        if not 0.0 < beta1 < 1.0 or not 0.0 < beta2 < 1.0:
            raise ValueError("betas must be in (0,1)")
        if lr <= 0.0 or eps <= 0.0:
            raise ValueError("lr and eps must be positive")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        if not _check_grads(self.params):
            return
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.value -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(
                p.value.dtype, copy=False)
            p.zero_grad()
