"""Forward corruption operators.

Linear operators expose ``apply`` / ``adjoint`` and a pseudo-inverse through
conjugate gradients on the normal equations ``(A A^T + lam I) v = r``; the
pseudo-inverse is then ``A^T v``. A uniform quantizer stands in for a
non-differentiable, nonlinear degradation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, PinvWarning, ShapeError

__all__ = [
    "LinearOperator",
    "Identity",
    "Mask",
    "PeriodicConvolution",
    "AvgPoolDownsample",
    "UniformQuantizer",
    "PinvSolverConfig",
    "PinvInfo",
    "gaussian_kernel",
    "uniform_kernel",
    "gaussian_blur",
    "uniform_blur",
    "conjugate_gradient",
    "apply",
    "adjoint",
    "pinv_apply",
    "pinv",
    "lift_measurement",
    "quantize",
    "surrogate_pinv",
    "as_matrix",
    "is_linear",
]


@dataclass(frozen=True)
class PinvSolverConfig:
    max_iters: int = 50
    tol: float = 1e-8
    damping: float = 0.0

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"pinv.max_iters must be >= 1, got {self.max_iters!r}")
        if not self.tol > 0:
            raise ConfigError(f"pinv.tol must be > 0, got {self.tol!r}")
        if not self.damping >= 0:
            raise ConfigError(f"pinv.damping must be >= 0, got {self.damping!r}")


@dataclass(frozen=True)
class PinvInfo:
    converged: bool
    iterations: int
    residual: float  # relative: |(AA^T + lam I) v - r| / |r|


def conjugate_gradient(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    tol: float = 1e-8,
    max_iters: int = 50,
) -> tuple[np.ndarray, PinvInfo]:
    """Solve ``M x = b`` for symmetric positive (semi)definite ``M`` given as a matvec."""
    x = np.zeros_like(b)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return x, PinvInfo(True, 0, 0.0)
    r = b.copy()
    p = r.copy()
    rr = np.vdot(r, r)
    it = 0
    for it in range(1, max_iters + 1):
        mp = matvec(p)
        pmp = np.vdot(p, mp)
        if pmp <= 0.0:
            # p lies in the null space of M; nothing further to gain
            it -= 1
            break
        step = rr / pmp
        x = x + step * p
        r = r - step * mp
        rr_new = np.vdot(r, r)
        if math.sqrt(rr_new) <= tol * b_norm:
            rr = rr_new
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    true_res = float(np.linalg.norm(matvec(x) - b) / b_norm)
    return x, PinvInfo(true_res <= tol, it, true_res)


class LinearOperator:
    """Matrix-free linear map between arrays of fixed shape."""

    input_shape: tuple
    output_shape: tuple
    linear = True

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ShapeError(f"{type(self).__name__}.apply: expected {self.input_shape}, got {x.shape}")
        return self._apply(x)

    def adjoint(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.shape != self.output_shape:
            raise ShapeError(f"{type(self).__name__}.adjoint: expected {self.output_shape}, got {r.shape}")
        return self._adjoint(r)

    def _apply(self, x):
        raise NotImplementedError

    def _adjoint(self, r):
        raise NotImplementedError

    def normal(self, v, damping=0.0):
        """``(A A^T + damping I) v``."""
        out = self._apply(self._adjoint(v))
        if damping:
            out = out + damping * v
        return out

    def norm_sq(self) -> float:
        """Squared spectral norm, by power iteration unless overridden."""
        rng = np.random.default_rng(0)
        v = rng.standard_normal(self.input_shape)
        lam = 0.0
        for _ in range(200):
            w = self._adjoint(self._apply(v))
            lam_new = float(np.linalg.norm(w))
            if lam_new == 0.0:
                return 0.0
            v = w / lam_new
            if abs(lam_new - lam) <= 1e-12 * lam_new:
                break
            lam = lam_new
        return lam_new

    def lift(self, y, cfg: PinvSolverConfig | None = None):
        """Map a measurement back to signal space: ``y`` if shapes agree, else ``A^+ y``."""
        y = np.asarray(y, dtype=np.float64)
        if self.output_shape == self.input_shape:
            return y.copy()
        return pinv(self, y, cfg)


class Identity(LinearOperator):
    def __init__(self, shape):
        self.input_shape = self.output_shape = tuple(shape)

    def _apply(self, x):
        return x.copy()

    def _adjoint(self, r):
        return r.copy()

    def norm_sq(self):
        return 1.0


class Mask(LinearOperator):
    """Pixelwise 0/1 mask; self-adjoint and shape preserving."""

    def __init__(self, mask):
        m = np.asarray(mask)
        if m.dtype != bool:
            if not np.all((m == 0) | (m == 1)):
                raise ConfigError("mask entries must be 0 or 1")
            m = m.astype(bool)
        self.mask = m
        self._weights = m.astype(np.float64)
        self.input_shape = self.output_shape = m.shape

    def _apply(self, x):
        return x * self._weights

    def _adjoint(self, r):
        return r * self._weights

    def norm_sq(self):
        return 1.0 if self.mask.any() else 0.0

    def lift(self, y, cfg=None):
        return self.adjoint(y)


def gaussian_kernel(size: int, std: float, ndim: int = 2) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ConfigError(f"kernel size must be odd and positive, got {size!r}")
    if not std > 0:
        raise ConfigError(f"kernel std must be > 0, got {std!r}")
    r = np.arange(size) - size // 2
    k1 = np.exp(-0.5 * (r / std) ** 2)
    k1 /= k1.sum()
    k = k1
    for _ in range(ndim - 1):
        k = np.multiply.outer(k, k1)
    return k / k.sum()


def uniform_kernel(size: int, ndim: int = 2) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ConfigError(f"kernel size must be odd and positive, got {size!r}")
    return np.full((size,) * ndim, 1.0 / size**ndim)


class PeriodicConvolution(LinearOperator):
    """Circular convolution with a centred odd-sized kernel, evaluated by FFT."""

    def __init__(self, kernel, shape):
        kernel = np.asarray(kernel, dtype=np.float64)
        shape = tuple(shape)
        if kernel.ndim != len(shape):
            raise ShapeError(f"kernel rank {kernel.ndim} != signal rank {len(shape)}")
        if any(k % 2 == 0 for k in kernel.shape):
            raise ConfigError(f"kernel sides must be odd, got {kernel.shape}")
        if any(k > n for k, n in zip(kernel.shape, shape)):
            raise ShapeError(f"kernel {kernel.shape} larger than signal {shape}")
        self.kernel = kernel
        self.input_shape = self.output_shape = shape
        padded = np.zeros(shape)
        padded[tuple(slice(0, k) for k in kernel.shape)] = kernel
        padded = np.roll(padded, [-(k // 2) for k in kernel.shape], axis=tuple(range(len(shape))))
        self._axes = tuple(range(len(shape)))
        self._transfer = np.fft.rfftn(padded)

    def _apply(self, x):
        return np.fft.irfftn(np.fft.rfftn(x) * self._transfer, s=self.input_shape, axes=self._axes)

    def _adjoint(self, r):
        return np.fft.irfftn(np.fft.rfftn(r) * np.conj(self._transfer), s=self.input_shape, axes=self._axes)

    def norm_sq(self):
        return float(np.max(np.abs(self._transfer)) ** 2)


def gaussian_blur(shape, size: int = 5, std: float = 1.0) -> PeriodicConvolution:
    return PeriodicConvolution(gaussian_kernel(size, std, len(shape)), shape)


def uniform_blur(shape, size: int = 3) -> PeriodicConvolution:
    return PeriodicConvolution(uniform_kernel(size, len(shape)), shape)


class AvgPoolDownsample(LinearOperator):
    """Non-overlapping ``k``-average pooling along every axis."""

    def __init__(self, shape, factor: int = 2):
        shape = tuple(shape)
        if factor < 1:
            raise ConfigError(f"pool factor must be >= 1, got {factor!r}")
        if any(n % factor for n in shape):
            raise ShapeError(f"shape {shape} not divisible by pool factor {factor}")
        self.factor = int(factor)
        self.input_shape = shape
        self.output_shape = tuple(n // factor for n in shape)
        self._blocked = tuple(d for n in self.output_shape for d in (n, factor))
        self._axes = tuple(range(1, 2 * len(shape), 2))

    def _apply(self, x):
        return x.reshape(self._blocked).mean(axis=self._axes)

    def _adjoint(self, r):
        out = r
        for ax in range(r.ndim):
            out = np.repeat(out, self.factor, axis=ax)
        return out / self.factor ** r.ndim

    def norm_sq(self):
        return 1.0 / self.factor ** len(self.input_shape)


class UniformQuantizer:
    """``delta * round(x / delta)``; its surrogate inverse is the identity."""

    linear = False

    def __init__(self, delta: float, shape=None):
        if not delta > 0:
            raise ConfigError(f"quantizer delta must be > 0, got {delta!r}")
        self.delta = float(delta)
        self.input_shape = self.output_shape = None if shape is None else tuple(shape)

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.input_shape is not None and x.shape != self.input_shape:
            raise ShapeError(f"UniformQuantizer.apply: expected {self.input_shape}, got {x.shape}")
        return self.delta * np.round(x / self.delta)

    def surrogate_pinv(self, y):
        return np.array(y, dtype=np.float64, copy=True)

    def lift(self, y, cfg=None):
        return self.surrogate_pinv(y)


def is_linear(op) -> bool:
    return getattr(op, "linear", False)


def apply(op, x):
    return op.apply(x)


def adjoint(op: LinearOperator, r):
    return op.adjoint(r)


def pinv_apply(op: LinearOperator, r, cfg: PinvSolverConfig | None = None) -> tuple[np.ndarray, PinvInfo]:
    """Measurement-space ``v = (A A^T + lam I)^{-1} r``; the caller forms ``A^+ r = A^T v``.

    Non-convergence emits :class:`PinvWarning` and still returns the last iterate.
    """
    cfg = cfg or PinvSolverConfig()
    r = np.asarray(r, dtype=np.float64)
    if r.shape != op.output_shape:
        raise ShapeError(f"pinv_apply: expected {op.output_shape}, got {r.shape}")
    v, info = conjugate_gradient(lambda p: op.normal(p, cfg.damping), r, cfg.tol, cfg.max_iters)
    if not info.converged:
        warnings.warn(
            f"pseudo-inverse CG stopped after {info.iterations} iterations, "
            f"relative residual {info.residual:.3e} > tol {cfg.tol:.1e}",
            PinvWarning,
            stacklevel=2,
        )
    return v, info


def pinv(op: LinearOperator, r, cfg: PinvSolverConfig | None = None) -> np.ndarray:
    """Signal-space ``A^+ r``."""
    v, _ = pinv_apply(op, r, cfg)
    return op.adjoint(v)


def lift_measurement(op, y, cfg: PinvSolverConfig | None = None) -> np.ndarray:
    """Starting point ``x1`` of the bridge for measurement ``y``."""
    return op.lift(y, cfg)


def quantize(q: UniformQuantizer, x):
    return q.apply(x)


def surrogate_pinv(q: UniformQuantizer, y):
    return q.surrogate_pinv(y)


def as_matrix(fn: Callable[[np.ndarray], np.ndarray], in_shape) -> np.ndarray:
    """Dense matrix of a linear map on arrays of ``in_shape`` (columns = images of basis vectors)."""
    n = int(np.prod(in_shape))
    cols = []
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        cols.append(np.ravel(fn(e.reshape(in_shape))))
        e[j] = 0.0
    return np.stack(cols, axis=1)
