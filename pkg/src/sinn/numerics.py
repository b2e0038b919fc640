"""Dense float64 kernels shared by the model and training code.

Every function accepts a single vector or a batch of row vectors; a batch
``X`` of shape ``(N, k)`` is treated as ``N`` independent inputs.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np


def _check(ok: bool, what: str) -> None:
    if not ok:
        raise ValueError(f"dimension mismatch: {what}")


def affine(W: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``W x + b`` for a vector, or row-wise ``X W^T + b`` for a batch."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check(W.ndim == 2 and b.shape == (W.shape[0],), f"W {W.shape} vs b {b.shape}")
    _check(x.shape[-1] == W.shape[1], f"W {W.shape} vs x {x.shape}")
    return x @ W.T + b


def matvec(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    _check(W.ndim == 2 and x.shape[-1] == W.shape[1], f"W {W.shape} vs x {x.shape}")
    return x @ W.T


def masked_matvec(W: np.ndarray, mask: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``(W * mask) x``; entries under a false mask contribute exactly zero."""
    W = np.asarray(W, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    _check(W.shape == mask.shape, f"W {W.shape} vs mask {mask.shape}")
    return matvec(np.where(mask, W, 0.0), np.asarray(x, dtype=np.float64))


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    # exp is only ever taken of a non-positive argument
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(z, dtype=np.float64), 0.0)


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    """``log sigma(z)`` without forming the sigmoid."""
    z = np.asarray(z, dtype=np.float64)
    return np.minimum(z, 0.0) - np.log1p(np.exp(-np.abs(z)))


def global_norm(arrays: Iterable[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(a))) for a in arrays)))


def clip_global_norm(grads: Iterable[np.ndarray], threshold: float) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``threshold``.

    Returns the factor applied (1.0 when no clipping was needed).
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    grads = list(grads)
    norm = global_norm(grads)
    if norm <= threshold:
        return 1.0
    scale = threshold / norm
    for g in grads:
        g *= scale
    return scale
