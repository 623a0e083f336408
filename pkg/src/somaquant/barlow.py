"""Barlow Twins objective as a verifiable numerical kernel.

The loss drives the cross-correlation matrix of two batch-normalized
embedding views toward the identity: the diagonal term enforces invariance
across views, the off-diagonal term (weighted by lambda) decorrelates
embedding dimensions. Everything is float64 and comes with exact analytic
gradients with respect to the raw embeddings, checkable against finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

DEFAULT_LAMBDA = 0.005
DEFAULT_EPS = 1e-5


@dataclass(frozen=True)
class EmbeddingBatch:
    """Two views of the same batch: n x d embedding matrices z1 and z2."""

    z1: np.ndarray
    z2: np.ndarray

    def __post_init__(self):
        z1 = np.asarray(self.z1, np.float64)
        z2 = np.asarray(self.z2, np.float64)
        if z1.ndim != 2 or z1.shape != z2.shape:
            raise DimensionMismatch(f"views must share an (n, d) shape, got {z1.shape} vs {z2.shape}")
        if z1.shape[0] < 2:
            raise DimensionMismatch("batch size must be >= 2 to normalize along the batch")
        if not (np.isfinite(z1).all() and np.isfinite(z2).all()):
            raise ValueError("embeddings must be finite")
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "z2", z2)

    @property
    def n(self) -> int:
        return self.z1.shape[0]

    @property
    def d(self) -> int:
        return self.z1.shape[1]


@dataclass(frozen=True)
class CrossCorrelation:
    """d x d cross-correlation matrix of the two normalized views."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch(f"cross-correlation must be square, got {c.shape}")
        object.__setattr__(self, "c", c)


def normalize_batch(z: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Standardize each column to mean 0 and (population) std 1.

    eps is added to the std so constant columns map to zeros instead of
    dividing by zero.
    """
    z = np.asarray(z, np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise DimensionMismatch("normalize_batch expects an (n>=2, d) matrix")
    centered = z - z.mean(axis=0)
    std = np.sqrt((centered * centered).mean(axis=0))
    return centered / (std + eps)


def cross_correlation(batch: EmbeddingBatch, eps: float = DEFAULT_EPS) -> CrossCorrelation:
    """C = normalize(z1)^T · normalize(z2) / n."""
    a = normalize_batch(batch.z1, eps)
    b = normalize_batch(batch.z2, eps)
    return CrossCorrelation(a.T @ b / batch.n)


def bt_loss(c: CrossCorrelation | np.ndarray, lam: float = DEFAULT_LAMBDA) -> float:
    """Sum of squared diagonal deviations from 1 plus lam times the sum of
    squared off-diagonal entries."""
    m = c.c if isinstance(c, CrossCorrelation) else np.asarray(c, np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"loss needs a square matrix, got {m.shape}")
    diag = np.diagonal(m)
    on = float(((1.0 - diag) ** 2).sum())
    off = float((m * m).sum()) - float((diag * diag).sum())
    return on + lam * off


def bt_loss_from_batch(
    batch: EmbeddingBatch, lam: float = DEFAULT_LAMBDA, eps: float = DEFAULT_EPS
) -> float:
    return bt_loss(cross_correlation(batch, eps), lam)


def _normalize_backward(z: np.ndarray, grad_y: np.ndarray, eps: float) -> np.ndarray:
    """Backpropagate through per-column standardization.

    For one column with centered values c, sigma = sqrt(mean(c^2)),
    s = sigma + eps and y = c / s:

        dL/dx = (g - mean(g)) / s - y * sum(g * y) / (n * sigma)

    Columns with sigma = 0 have y = 0; the second term is dropped there.
    """
    z = np.asarray(z, np.float64)
    n = z.shape[0]
    centered = z - z.mean(axis=0)
    sigma = np.sqrt((centered * centered).mean(axis=0))
    s = sigma + eps
    y = centered / s
    gy = (grad_y * y).sum(axis=0)
    out = (grad_y - grad_y.mean(axis=0)) / s
    nz = sigma > 0.0
    out[:, nz] -= y[:, nz] * (gy[nz] / (n * sigma[nz]))
    return out


def bt_grad(
    batch: EmbeddingBatch, lam: float = DEFAULT_LAMBDA, eps: float = DEFAULT_EPS
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of the loss with respect to the raw z1 and z2."""
    n = batch.n
    a = normalize_batch(batch.z1, eps)
    b = normalize_batch(batch.z2, eps)
    c = a.T @ b / n
    # dL/dC: -2(1 - C_ii) on the diagonal, 2*lam*C_ij off it
    g = 2.0 * lam * c
    np.fill_diagonal(g, -2.0 * (1.0 - np.diagonal(c)))
    grad_a = b @ g.T / n
    grad_b = a @ g / n
    return (
        _normalize_backward(batch.z1, grad_a, eps),
        _normalize_backward(batch.z2, grad_b, eps),
    )


def gradient_check(
    n: int,
    d: int,
    lam: float = DEFAULT_LAMBDA,
    seed: int = 0,
    h: float = 1e-5,
    eps: float = DEFAULT_EPS,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error is anchored at 1 so near-zero partials are compared
    absolutely.
    """
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal((n, d))
    z2 = rng.standard_normal((n, d))
    g1, g2 = bt_grad(EmbeddingBatch(z1, z2), lam, eps)
    worst = 0.0
    for which, (z, g) in enumerate(((z1, g1), (z2, g2))):
        for i in range(n):
            for j in range(d):
                zp = z.copy()
                zm = z.copy()
                zp[i, j] += h
                zm[i, j] -= h
                if which == 0:
                    lp = bt_loss_from_batch(EmbeddingBatch(zp, z2), lam, eps)
                    lm = bt_loss_from_batch(EmbeddingBatch(zm, z2), lam, eps)
                else:
                    lp = bt_loss_from_batch(EmbeddingBatch(z1, zp), lam, eps)
                    lm = bt_loss_from_batch(EmbeddingBatch(z1, zm), lam, eps)
                fd = (lp - lm) / (2.0 * h)
                err = abs(fd - g[i, j]) / max(1.0, abs(fd), abs(g[i, j]))
                worst = max(worst, err)
    return worst
