"""Sparse categorical cross-entropy and classification accuracy.

The loss consumes the probabilities the softmax head emits; its gradient
with respect to the pre-softmax logits is the fused (p - onehot) / N form,
which avoids dividing by small probabilities.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

CLAMP_EPS = 1e-7
ROW_SUM_TOL = 1e-4


def _check_batch(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    if probs.ndim != 2:
        raise ShapeError(f"probs must be [N,K], got {probs.shape}")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != probs.shape[0]:
        raise ShapeError(
            f"labels must be [N] matching probs {probs.shape}, got {labels.shape}")
    if labels.size == 0:
        raise ShapeError("empty batch")
    k = probs.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"label out of range [0,{k})")
    return labels.astype(np.int64)


def _check_rows_normalized(probs: np.ndarray) -> None:
    sums = np.sum(probs, axis=1)
    if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
        raise ShapeError("probability rows are not normalized")


def sparse_cce(probs: np.ndarray, labels) -> float:
    """Mean of -ln p[true class] over the batch, with p clamped to [1e-7, 1]."""
    labels = _check_batch(probs, labels)
    _check_rows_normalized(probs)
    picked = probs[np.arange(labels.size), labels]
    picked = np.clip(picked.astype(np.float64), CLAMP_EPS, 1.0)
    # summing in sorted order makes the reduction an exact function of the
    # sample multiset, so permuting a batch cannot change the loss bitwise
    terms = np.sort(-np.log(picked))
    return float(np.sum(terms) / labels.size)


def sparse_cce_grad_logits(probs: np.ndarray, labels) -> np.ndarray:
    """Gradient of sparse_cce(softmax(z)) w.r.t. z: (probs - onehot) / N."""
    labels = _check_batch(probs, labels)
    _check_rows_normalized(probs)
    n = labels.size
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return grad / np.asarray(n, dtype=grad.dtype)


def accuracy(probs: np.ndarray, labels) -> float:
    """Fraction of rows whose argmax (ties to the smaller index) is the label."""
    labels = _check_batch(probs, labels)
    pred = np.argmax(probs, axis=1)
    return float(np.mean(pred == labels))
