"""Synthetic image generators standing in for a natural-image dataset.

``gaussian_field``: smooth stationary random fields, ``0.5 + amplitude * f``
with ``f`` unit-variance periodic-Gaussian-filtered white noise.

``blob_mixture``: ``n_canonical`` fixed images made of Gaussian blobs; each
sample picks one, rescales its contrast and adds a smooth random field.

Both have dynamic range (PSNR peak) 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..linop import gaussian_kernel, PeriodicConvolution

__all__ = ["SyntheticDataset", "smooth_field", "field_covariance"]

KINDS = ("gaussian_field", "blob_mixture")


def _field_filter(n: int, corr_len: float) -> PeriodicConvolution:
    size = min(n - 1 + n % 2, 2 * int(np.ceil(3 * corr_len)) + 1)
    kern = gaussian_kernel(size, corr_len, 2)
    return PeriodicConvolution(kern / np.sqrt(np.sum(kern**2)), (n, n))


def smooth_field(rng: np.random.Generator, n: int, corr_len: float = 2.0) -> np.ndarray:
    """Unit-marginal-variance periodic smooth field of side ``n``."""
    return _field_filter(n, corr_len).apply(rng.standard_normal((n, n)))


def field_covariance(n: int, corr_len: float = 2.0) -> np.ndarray:
    """Exact covariance ``F F^T`` of :func:`smooth_field` over flattened pixels."""
    f = _field_filter(n, corr_len)
    eye = np.eye(n * n).reshape(n * n, n, n)
    cols = np.stack([f.apply(e).ravel() for e in eye], axis=1)
    return cols @ cols.T


@dataclass(frozen=True)
class SyntheticDataset:
    kind: str = "blob_mixture"
    size: int = 64  # number of training pairs
    image_size: int = 16
    seed: int = 0
    n_canonical: int = 4
    amplitude: float = 0.15  # field amplitude (gaussian_field) or perturbation (blob_mixture)
    corr_len: float = 2.0
    peak: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"dataset.kind must be one of {KINDS}, got {self.kind!r}")
        if self.size < 1 or self.image_size < 2 or self.n_canonical < 1:
            raise ConfigError("dataset sizes must be positive")

    @property
    def shape(self) -> tuple:
        return (self.image_size, self.image_size)

    def canonical(self) -> np.ndarray:
        """The fixed blob images (``blob_mixture`` only)."""
        rng = np.random.default_rng([self.seed, 7919])
        n = self.image_size
        yy, xx = np.mgrid[0:n, 0:n]
        out = np.full((self.n_canonical, n, n), 0.2)
        for k in range(self.n_canonical):
            for _ in range(3):
                cy, cx = rng.uniform(0, n, size=2)
                width = rng.uniform(1.5, 3.0) * n / 16
                amp = rng.uniform(0.3, 0.6)
                # periodic distance so blobs wrap like the operators do
                dy = np.minimum(np.abs(yy - cy), n - np.abs(yy - cy))
                dx = np.minimum(np.abs(xx - cx), n - np.abs(xx - cx))
                out[k] += amp * np.exp(-(dy**2 + dx**2) / (2 * width**2))
        return out

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """One image (``n is None``) or a stack of ``n`` images."""
        count = 1 if n is None else n
        imgs = np.empty((count,) + self.shape)
        canon = self.canonical() if self.kind == "blob_mixture" else None
        for i in range(count):
            field = smooth_field(rng, self.image_size, self.corr_len)
            if canon is None:
                imgs[i] = 0.5 + self.amplitude * field
            else:
                k = rng.integers(self.n_canonical)
                contrast = rng.uniform(0.8, 1.2)
                imgs[i] = 0.2 + contrast * (canon[k] - 0.2) + self.amplitude * field
        return imgs[0] if n is None else imgs

    def train_images(self) -> np.ndarray:
        """Deterministic training stack of ``size`` images."""
        return self.sample(np.random.default_rng([self.seed, 104729]), self.size)
