"""Exact denoisers ``x0_hat = G(x_t, t)`` with vector-Jacobian products.

Two oracles replace a trained network:

* :class:`GaussianOracle` - conditional mean for a Gaussian prior pushed
  through a linear operator and the bridge forward model; affine in ``x_t``.
* :class:`MixtureOracle` - minimiser of ``E|G(x_t) - x0|^2`` over a finite set
  of paired samples, i.e. a softmax-weighted average of the clean samples.

``vjp(x_t, t, u)`` returns ``(d x0_hat / d x_t)^T u``.
"""

from __future__ import annotations

import threading
import warnings

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DampingWarning, ShapeError
from .linop import Identity, LinearOperator, Mask, PinvSolverConfig, as_matrix
from .schedule import BridgeSchedule

__all__ = [
    "Denoiser",
    "GaussianOracle",
    "MixtureOracle",
    "fd_vjp",
    "gaussian_predict",
    "gaussian_vjp",
    "mixture_predict",
    "mixture_vjp",
]


class Denoiser:
    """Contract for ``predict`` and its pullback ``vjp``."""

    schedule: BridgeSchedule
    shape: tuple

    def predict(self, x_t, t):
        raise NotImplementedError

    def vjp(self, x_t, t, u):
        raise NotImplementedError

    def __call__(self, x_t, t):
        return self.predict(x_t, t)


class GaussianOracle(Denoiser):
    """Posterior mean ``E[x0 | x_t]`` when ``x0 ~ N(mu0, Sigma0)``, ``y = A x0 + noise_std n``,
    ``x1 = lift(y)`` and ``x_t = (1 - alpha) x0 + alpha x1 + sigma z``.

    ``prior_cov`` may be a scalar, a vector (diagonal) or a full matrix over the
    flattened signal. Diagonal priors with a diagonal operator (identity or
    mask) take an elementwise path; everything else is dense.
    """

    def __init__(
        self,
        schedule: BridgeSchedule,
        op: LinearOperator,
        prior_mean,
        prior_cov,
        noise_std: float = 0.0,
        pinv_cfg: PinvSolverConfig | None = None,
    ):
        if not getattr(op, "linear", False):
            raise ConfigError("GaussianOracle needs a linear operator")
        if not noise_std >= 0:
            raise ConfigError(f"noise_std must be >= 0, got {noise_std!r}")
        self.schedule = schedule
        self.op = op
        self.shape = tuple(op.input_shape)
        n = int(np.prod(self.shape))
        self.prior_mean = np.broadcast_to(np.asarray(prior_mean, dtype=np.float64), self.shape).ravel().copy()
        cov = np.asarray(prior_cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = np.full(n, float(cov))
        if cov.ndim == 1 and cov.shape != (n,):
            raise ShapeError(f"diagonal prior_cov must have length {n}, got {cov.shape}")
        if cov.ndim == 2 and cov.shape != (n, n):
            raise ShapeError(f"prior_cov must be {n}x{n}, got {cov.shape}")
        self.prior_cov = cov
        self.noise_std = float(noise_std)
        self._diagonal = cov.ndim == 1 and isinstance(op, (Identity, Mask))
        if self._diagonal:
            d = np.ones(n) if isinstance(op, Identity) else op.mask.ravel().astype(np.float64)
            self._lift_fwd = d  # diag(L A)
            self._lift = d  # diag(L)
        else:
            A = as_matrix(op.apply, self.shape)
            L = as_matrix(lambda v: op.lift(v, pinv_cfg), op.output_shape)
            self._lift_fwd = L @ A
            self._lift_noise = (L @ L.T) * self.noise_std**2
            self._cov_full = np.diag(cov) if cov.ndim == 1 else cov
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    def _gain(self, t: float):
        """Return ``(E[x_t], K)`` with ``x0_hat = mu0 + K (x_t - E[x_t])``."""
        t = float(t)
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        alpha, sigma = self.schedule.coefficients(t)
        mu0 = self.prior_mean
        if self._diagonal:
            m = (1.0 - alpha) + alpha * self._lift_fwd
            c_tt = m * m * self.prior_cov + (alpha * self.noise_std * self._lift) ** 2 + sigma**2
            scale = float(np.max(c_tt)) if c_tt.size else 0.0
            tiny = c_tt <= 1e-13 * scale
            if np.any(tiny):
                warnings.warn(f"singular x_t covariance at t={t:g}; damping", DampingWarning, stacklevel=3)
                c_tt = c_tt + 1e-13 * max(scale, 1e-300)
            gain = self.prior_cov * m / c_tt
            out = (m * mu0, gain)
        else:
            n = mu0.size
            M = (1.0 - alpha) * np.eye(n) + alpha * self._lift_fwd
            S = self._cov_full
            c_tt = M @ S @ M.T + alpha**2 * self._lift_noise + sigma**2 * np.eye(n)
            c_tt = 0.5 * (c_tt + c_tt.T)
            eig = np.linalg.eigvalsh(c_tt)
            if eig[0] <= 1e-13 * eig[-1]:
                warnings.warn(f"singular x_t covariance at t={t:g}; damping", DampingWarning, stacklevel=3)
                c_tt = c_tt + 1e-13 * max(eig[-1], 1e-300) * np.eye(n)
            # K = S M^T C^{-1}; C symmetric so K^T = C^{-1} M S
            gain = np.linalg.solve(c_tt, M @ S).T
            out = (M @ mu0, gain)
        with self._lock:
            self._cache[t] = out
        return out

    def _is_clean(self, t):
        alpha, sigma = self.schedule.coefficients(t)
        return alpha == 0.0 and sigma == 0.0

    def predict(self, x_t, t):
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape != self.shape:
            raise ShapeError(f"expected {self.shape}, got {x_t.shape}")
        if self._is_clean(t):
            return x_t.copy()
        mean_t, gain = self._gain(t)
        dx = x_t.ravel() - mean_t
        out = self.prior_mean + (gain * dx if self._diagonal else gain @ dx)
        return out.reshape(self.shape)

    def vjp(self, x_t, t, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != self.shape:
            raise ShapeError(f"expected {self.shape}, got {u.shape}")
        if self._is_clean(t):
            return u.copy()
        _, gain = self._gain(t)
        out = gain * u.ravel() if self._diagonal else gain.T @ u.ravel()
        return out.reshape(self.shape)

    def jacobian(self, t) -> np.ndarray:
        """Dense ``d x0_hat / d x_t`` over flattened signals."""
        n = self.prior_mean.size
        if self._is_clean(t):
            return np.eye(n)
        _, gain = self._gain(t)
        return np.diag(gain) if self._diagonal else gain.copy()


class MixtureOracle(Denoiser):
    """Bayes denoiser for the empirical distribution of pairs ``(x0^k, x1^k)``.

    With ``mu^k = (1 - alpha_t) x0^k + alpha_t x1^k`` and ``s = max(sigma_t, floor)``
    the prediction is ``sum_k w_k x0^k``, ``w = softmax(-|x_t - mu^k|^2 / (2 s^2))``.
    """

    def __init__(self, schedule: BridgeSchedule, x0s, x1s, sigma_floor: float = 1e-3):
        x0s = np.asarray(x0s, dtype=np.float64)
        x1s = np.asarray(x1s, dtype=np.float64)
        if x0s.shape != x1s.shape or x0s.ndim < 2:
            raise ShapeError(f"paired data must be (K, *shape) arrays of equal shape, got {x0s.shape} and {x1s.shape}")
        if x0s.shape[0] < 1:
            raise ConfigError("mixture oracle needs at least one pair")
        if not sigma_floor > 0:
            raise ConfigError(f"sigma_floor must be > 0, got {sigma_floor!r}")
        self.schedule = schedule
        self.shape = x0s.shape[1:]
        self.x0s = x0s.reshape(x0s.shape[0], -1)
        self.x1s = x1s.reshape(x1s.shape[0], -1)
        self.sigma_floor = float(sigma_floor)

    def _centers(self, t):
        alpha, sigma = self.schedule.coefficients(t)
        mu = (1.0 - alpha) * self.x0s + alpha * self.x1s
        return mu, max(sigma, self.sigma_floor)

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise ShapeError(f"expected {self.shape}, got {x.shape}")
        return x.ravel()

    def _weights(self, x, t):
        mu, s = self._centers(t)
        logits = -np.sum((x - mu) ** 2, axis=1) / (2.0 * s * s)
        return np.exp(logits - logsumexp(logits)), mu, s

    def weights(self, x_t, t) -> np.ndarray:
        w, _, _ = self._weights(self._check(x_t), t)
        return w

    def predict(self, x_t, t):
        w, _, _ = self._weights(self._check(x_t), t)
        return (w @ self.x0s).reshape(self.shape)

    def vjp(self, x_t, t, u):
        x = self._check(x_t)
        u = self._check(u)
        w, mu, s = self._weights(x, t)
        x_hat = w @ self.x0s
        proj = self.x0s @ u - x_hat @ u
        mu_bar = w @ mu
        out = ((w * proj) @ (mu - mu_bar)) / (s * s)
        return out.reshape(self.shape)


def fd_vjp(d: Denoiser, x_t, t, u, h: float = 1e-5) -> np.ndarray:
    """Central-difference ``J^T u``: component ``j`` is ``<d predict / d x_j, u>``."""
    if not h > 0:
        raise ConfigError(f"step h must be > 0, got {h!r}")
    x = np.asarray(x_t, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    flat = x.ravel()
    out = np.empty(flat.size)
    for j in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[j] += h
        xm[j] -= h
        diff = d.predict(xp.reshape(x.shape), t) - d.predict(xm.reshape(x.shape), t)
        out[j] = np.vdot(diff, u) / (2.0 * h)
    return out.reshape(x.shape)


def gaussian_predict(o: GaussianOracle, x_t, t):
    return o.predict(x_t, t)


def gaussian_vjp(o: GaussianOracle, x_t, t, u):
    return o.vjp(x_t, t, u)


def mixture_predict(o: MixtureOracle, x_t, t):
    return o.predict(x_t, t)


def mixture_vjp(o: MixtureOracle, x_t, t, u):
    return o.vjp(x_t, t, u)
