"""Closed-form bridge schedules.

A direct diffusion bridge corrupts a clean sample ``x0`` towards its measurement
``x1`` through

    x_t = (1 - alpha_t) x0 + alpha_t x1 + sigma_t z,

and is reverted with the ancestral transition

    x_s ~ N((1 - alpha2_{s|t}) x0 + alpha2_{s|t} x_t, sigma2_{s|t} I),   s < t.

Three families are provided: ``I2SB`` (symmetric linear beta profile),
``InDI`` (constant-speed interpolation) and ``IRSDE`` (Ornstein-Uhlenbeck
marginal; forward coefficients only).

Variances use the squared convention ``gamma_t^2 = int_0^t beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Union

import numpy as np

from .errors import ConfigError, DomainError, UnsupportedError

__all__ = [
    "BetaProfile",
    "BridgeSchedule",
    "I2SB",
    "InDI",
    "IRSDE",
    "ScheduleCoefficients",
    "TransitionCoefficients",
    "gamma_sq",
    "bar_gamma_sq",
    "coefficients",
    "transition",
    "indi_time_map",
    "total_variance_residual",
    "timestep_grid",
    "load_theta_bar",
]


def _check_time(t: float, name: str = "t") -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"{name}={t!r} outside [0, 1]")
    return t


def _check_pair(s: float, t: float) -> tuple[float, float]:
    s = _check_time(s, "s")
    t = _check_time(t, "t")
    if not s < t:
        raise DomainError(f"transition needs s < t, got s={s!r}, t={t!r}")
    return s, t


@dataclass(frozen=True)
class BetaProfile:
    """Symmetric piecewise-linear rate profile.

    ``beta(t) = beta_min + 2 beta_d t`` on ``[0, 0.5)`` and
    ``2 beta_max - 2 beta_d t`` on ``[0.5, 1]``. Note the jump of size
    ``beta_min`` at ``t = 0.5``; it is kept as is.
    """

    beta_min: float = 1e-4
    beta_max: float = 2e-2

    def __post_init__(self):
        if not self.beta_min > 0:
            raise ConfigError(f"beta_min must be > 0, got {self.beta_min!r}")
        if not self.beta_max > self.beta_min:
            raise ConfigError(
                f"beta_max must exceed beta_min, got {self.beta_max!r} <= {self.beta_min!r}"
            )

    @property
    def beta_d(self) -> float:
        return self.beta_max - self.beta_min

    def beta(self, t: float) -> float:
        t = _check_time(t)
        if t < 0.5:
            return self.beta_min + 2.0 * self.beta_d * t
        return 2.0 * self.beta_max - 2.0 * self.beta_d * t

    def integral(self, s: float, t: float) -> float:
        """``int_s^t beta`` for ``0 <= s <= t <= 1``, without subtracting cumulative sums."""
        s = _check_time(s, "s")
        t = _check_time(t, "t")
        if s > t:
            raise DomainError(f"integral needs s <= t, got s={s!r}, t={t!r}")
        bmin, bmax, bd = self.beta_min, self.beta_max, self.beta_d
        total = 0.0
        lo, hi = s, min(t, 0.5)
        if hi > lo:
            total += (hi - lo) * (bmin + bd * (hi + lo))
        lo, hi = max(s, 0.5), t
        if hi > lo:
            total += (hi - lo) * (2.0 * bmax - bd * (hi + lo))
        return total

    def gamma_sq(self, t: float) -> float:
        return self.integral(0.0, t)

    def bar_gamma_sq(self, t: float) -> float:
        return self.integral(t, 1.0)

    @property
    def total(self) -> float:
        """``int_0^1 beta``."""
        return self.integral(0.0, 1.0)


class ScheduleCoefficients(NamedTuple):
    alpha_t: float
    sigma_t: float


class TransitionCoefficients(NamedTuple):
    alpha_sq_st: float
    sigma_sq_st: float

    @property
    def sigma_st(self) -> float:
        return math.sqrt(max(self.sigma_sq_st, 0.0))


class BridgeSchedule:
    """Base class: marginal coefficients and ancestral transition weights."""

    kind: str = ""

    def coefficients(self, t: float) -> ScheduleCoefficients:
        raise NotImplementedError

    def transition(self, s: float, t: float) -> TransitionCoefficients:
        raise NotImplementedError

    def sigma_sq(self, t: float) -> float:
        return self.coefficients(t).sigma_t ** 2


@dataclass(frozen=True)
class I2SB(BridgeSchedule):
    profile: BetaProfile = field(default_factory=BetaProfile)
    kind = "i2sb"

    def coefficients(self, t):
        t = _check_time(t)
        g2 = self.profile.gamma_sq(t)
        gb2 = self.profile.bar_gamma_sq(t)
        norm = g2 + gb2
        return ScheduleCoefficients(g2 / norm, math.sqrt(g2 * gb2 / norm))

    def sigma_sq(self, t):
        t = _check_time(t)
        g2 = self.profile.gamma_sq(t)
        gb2 = self.profile.bar_gamma_sq(t)
        return g2 * gb2 / (g2 + gb2)

    def transition(self, s, t):
        s, t = _check_pair(s, t)
        g2_s = self.profile.gamma_sq(s)
        g2_t = self.profile.gamma_sq(t)
        ratio = g2_s / g2_t
        # (gamma_t^2 - gamma_s^2) taken as a direct integral to avoid cancellation
        return TransitionCoefficients(ratio, self.profile.integral(s, t) * ratio)


EpsSpec = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class InDI(BridgeSchedule):
    """Constant-speed bridge ``alpha_t = t``, ``sigma_t = t eps_t``.

    ``eps`` is either a constant or a function of time. With a constant the
    ancestral transition variance ``s^2 (eps_s^2 - eps_t^2)`` is exactly zero.
    """

    eps: EpsSpec = 0.01
    kind = "indi"

    def __post_init__(self):
        if not callable(self.eps) and not self.eps >= 0:
            raise ConfigError(f"eps must be >= 0, got {self.eps!r}")

    def eps_sq(self, t: float) -> float:
        e = self.eps(t) if callable(self.eps) else self.eps
        return float(e) ** 2

    def coefficients(self, t):
        t = _check_time(t)
        return ScheduleCoefficients(t, t * math.sqrt(self.eps_sq(t)))

    def sigma_sq(self, t):
        t = _check_time(t)
        return t * t * self.eps_sq(t)

    def transition(self, s, t):
        s, t = _check_pair(s, t)
        if callable(self.eps):
            var = s * s * (self.eps_sq(s) - self.eps_sq(t))
        else:
            var = 0.0
        return TransitionCoefficients(s / t, var)


@dataclass(frozen=True)
class IRSDE(BridgeSchedule):
    """Ornstein-Uhlenbeck marginal ``alpha_t = 1 - exp(-theta_bar_t)``,
    ``sigma_t^2 = lam^2 (1 - exp(-2 theta_bar_t))``.

    ``theta_bar`` is tabulated on ``times`` and linearly interpolated. Only the
    forward marginal is supported; the reverse-SDE sampler is not.
    """

    times: tuple = ()
    theta_bar: tuple = ()
    lam: float = 10.0 / 255.0
    kind = "irsde"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        theta = np.asarray(self.theta_bar, dtype=np.float64)
        if times.size == 0:
            raise ConfigError("IR-SDE schedule needs a theta_bar table")
        if times.shape != theta.shape or times.ndim != 1:
            raise ConfigError("theta_bar table must be two equal-length 1-d columns")
        if times[0] != 0.0 or times[-1] != 1.0 or np.any(np.diff(times) <= 0):
            raise ConfigError("theta_bar times must increase strictly from 0 to 1")
        if theta[0] != 0.0 or np.any(np.diff(theta) < 0):
            raise ConfigError("theta_bar must start at 0 and be non-decreasing")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam!r}")
        object.__setattr__(self, "times", tuple(times.tolist()))
        object.__setattr__(self, "theta_bar", tuple(theta.tolist()))

    def theta(self, t: float) -> float:
        return float(np.interp(_check_time(t), self.times, self.theta_bar))

    def coefficients(self, t):
        th = self.theta(t)
        alpha = -math.expm1(-th)
        var = self.lam ** 2 * -math.expm1(-2.0 * th)
        return ScheduleCoefficients(alpha, math.sqrt(var))

    def transition(self, s, t):
        raise UnsupportedError("IR-SDE has no ancestral bridge transition")


def load_theta_bar(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a whitespace-separated two-column ``t theta_bar`` table."""
    try:
        data = np.loadtxt(path, dtype=np.float64, comments="#", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read theta_bar table {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise ConfigError(f"{path}: expected two columns, found {data.shape[1]}")
    return data[:, 0], data[:, 1]


def gamma_sq(profile: BetaProfile, t: float) -> float:
    return profile.gamma_sq(t)


def bar_gamma_sq(profile: BetaProfile, t: float) -> float:
    return profile.bar_gamma_sq(t)


def coefficients(sched: BridgeSchedule, t: float) -> ScheduleCoefficients:
    return sched.coefficients(t)


def transition(sched: BridgeSchedule, s: float, t: float) -> TransitionCoefficients:
    return sched.transition(s, t)


def indi_time_map(profile: BetaProfile, t: float) -> tuple[float, float]:
    """Map an I2SB time to the InDI time and squared noise scale that reproduce it.

    Returns ``(gamma^2 / (gamma^2 + bar_gamma^2), (bar_gamma^2 / gamma^2)(gamma^2 + bar_gamma^2))``.
    """
    t = _check_time(t)
    if t == 0.0:
        raise DomainError("indi_time_map undefined at t=0 (gamma_0^2 = 0)")
    g2 = profile.gamma_sq(t)
    gb2 = profile.bar_gamma_sq(t)
    norm = g2 + gb2
    return g2 / norm, gb2 / g2 * norm


def indi_equivalent(profile: BetaProfile) -> InDI:
    """InDI schedule with time-varying noise that matches ``I2SB(profile)`` in mapped time.

    In mapped time ``tau`` the squared noise scale is ``Gamma (1 - tau) / tau``
    with ``Gamma = int_0^1 beta``.
    """
    total = profile.total

    def eps(tau):
        return math.sqrt(total * (1.0 - tau) / tau)

    return InDI(eps=eps)


def total_variance_residual(sched: BridgeSchedule, s: float, t: float) -> float:
    """``(alpha2_{s|t} sigma_t)^2 + sigma2_{s|t} - sigma_s^2``; zero for a consistent bridge."""
    s, t = _check_pair(s, t)
    if s == 0.0:
        raise DomainError("total variance residual needs s > 0")
    a2, v = sched.transition(s, t)
    return (a2 * a2) * sched.sigma_sq(t) + v - sched.sigma_sq(s)


def timestep_grid(nfe: int, kind: str = "quadratic") -> np.ndarray:
    """Sampling times ``0 = t_0 < ... < t_nfe = 1``.

    ``uniform``: ``t_i = i / nfe``; ``quadratic``: ``t_i = (i / nfe)^2``.
    """
    if int(nfe) != nfe or nfe < 1:
        raise DomainError(f"nfe must be a positive integer, got {nfe!r}")
    u = np.arange(nfe + 1, dtype=np.float64) / nfe
    if kind == "uniform":
        return u
    if kind == "quadratic":
        return u * u
    raise ConfigError(f"unknown grid kind {kind!r}; expected 'uniform' or 'quadratic'")
