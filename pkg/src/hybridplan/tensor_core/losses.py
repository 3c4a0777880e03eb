from __future__ import annotations

from enum import Enum

import numpy as np

from . import tensor as T
from .tensor import ShapeMismatch, Tensor

_TINY = 1e-300


class DomainError(ValueError):
    pass


class LossKind(str, Enum):
    CROSS_ENTROPY = "cross_entropy"
    MSE = "mse"
    BCE = "bce"


def _rows(x: Tensor) -> int:
    return 1 if x.data.ndim <= 1 else int(np.prod(x.shape[:-1]))


def cross_entropy(probs: Tensor, onehot: Tensor) -> Tensor:
    """Mean over rows of ``-sum(target * log(p))``; ``p`` is clipped away from 0."""
    if probs.shape != onehot.shape:
        raise ShapeMismatch(f"cross_entropy: {probs.shape} vs {onehot.shape}")
    pd = probs.data
    tgt = onehot.data
    n = _rows(probs)
    clipped = np.maximum(pd, _TINY)
    val = -(tgt * np.log(clipped)).sum() / n
    return T._make(np.array(val), (probs,), lambda g: (-float(g) * tgt * (pd > _TINY) / clipped / n,))


def mse(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse: {pred.shape} vs {target.shape}")
    diff = T.sub(pred, target)
    return T.mean_all(T.mul(diff, diff))


def bce(pred: Tensor, target: Tensor) -> Tensor:
    """Binary cross-entropy averaged over elements; ``pred`` must lie in (0, 1)."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"bce: {pred.shape} vs {target.shape}")
    p = pred.data
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("bce prediction outside the open interval (0, 1)")
    y = target.data
    n = p.size
    val = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean()
    return T._make(np.array(val), (pred,), lambda g: (float(g) * (p - y) / (p * (1.0 - p)) / n,))


def bce_with_logits(logits: Tensor, target: np.ndarray) -> Tensor:
    """BCE of ``sigmoid(logits)`` computed stably from the logits."""
    x = logits.data
    y = np.asarray(target, dtype=np.float64)
    n = x.size
    val = (np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))).mean()
    sig = 1.0 / (1.0 + np.exp(-x))
    return T._make(np.array(val), (logits,), lambda g: (float(g) * (sig - y) / n,))


def masked_cross_entropy_logits(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Token cross-entropy from raw logits, averaged over unmasked positions.

    ``logits`` is (..., V); ``targets`` holds integer ids of shape (...);
    ``mask`` is 1 where the position counts.
    """
    logp = T.log_softmax_rows(logits)
    lp = logp.data
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.float64)
    count = max(mask.sum(), 1.0)
    picked = np.take_along_axis(lp, targets[..., None], axis=-1)[..., 0]
    val = -(picked * mask).sum() / count

    def bw(g):
        gl = np.zeros_like(lp)
        np.put_along_axis(gl, targets[..., None], (-float(g) * mask / count)[..., None], axis=-1)
        return (gl,)

    return T._make(np.array(val), (logp,), bw)


def loss(kind: LossKind | str, prediction: Tensor, target: Tensor) -> Tensor:
    kind = LossKind(kind)
    if kind is LossKind.CROSS_ENTROPY:
        return cross_entropy(prediction, target)
    if kind is LossKind.MSE:
        return mse(prediction, target)
    return bce(prediction, target)
