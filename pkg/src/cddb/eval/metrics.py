"""Reconstruction metrics."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ["mse", "psnr", "residual_norm", "energy_distance"]


def mse(x_hat, x) -> float:
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    return float(np.mean((x_hat - x) ** 2))


def psnr(x_hat, x, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / mse)``; ``inf`` for identical inputs."""
    if not peak > 0:
        raise ValueError(f"peak must be > 0, got {peak!r}")
    err = mse(x_hat, x)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def residual_norm(op, x_hat, y) -> float:
    return float(np.linalg.norm(np.asarray(y, dtype=np.float64) - op.apply(x_hat)))


def _mean_pairwise(a, b, chunk=2048):
    total = 0.0
    for i in range(0, a.shape[0], chunk):
        total += cdist(a[i:i + chunk], b).sum()
    return total / (a.shape[0] * b.shape[0])


def energy_distance(samples_a, samples_b) -> float:
    """V-statistic ``2 E|X - Y| - E|X - X'| - E|Y - Y'|``.

    Inputs are ``(n, ...)`` arrays; each sample is flattened to a vector.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("energy distance needs at least two samples per set")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"sample dimension mismatch {a.shape[1]} vs {b.shape[1]}")
    # order the cross term so the result is symmetric in its arguments bit for bit
    cross = _mean_pairwise(a, b) if a.tobytes() <= b.tobytes() else _mean_pairwise(b, a)
    within = _mean_pairwise(a, a) + _mean_pairwise(b, b)
    return max(2.0 * cross - within, 0.0)
