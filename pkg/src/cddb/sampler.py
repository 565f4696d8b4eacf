"""Bridge samplers: plain ancestral (DDB), adjoint-guided (CDDB) and
Jacobian-guided (CDDB-deep).

Every iteration goes from grid time ``t = t_i`` to ``s = t_{i-1}``:

    x0_hat = G(x_t, t)
    x_s'   = (1 - alpha2_{s|t}) x0_hat + alpha2_{s|t} x_t + sigma_{s|t} z
    x_s    = x_s' + rho_{i-1} g

with ``g = A^T (y - A x0_hat)`` (shallow) or ``g = J^T P (y - A x0_hat)``
(deep, ``P`` the pseudo-inverse or the adjoint). The correction is added after
the transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .linop import Mask, PinvSolverConfig, is_linear, pinv
from .oracle import Denoiser
from .schedule import BridgeSchedule, timestep_grid

__all__ = [
    "GuidanceConfig",
    "SamplerConfig",
    "TrajectoryState",
    "METHODS",
    "guidance_for",
    "make_rng",
    "step_size",
    "ddb_step",
    "shallow_correction",
    "deep_correction",
    "cddb_step",
    "cddb_deep_step",
    "replacement_project",
    "residual",
    "run",
]

METHODS = ("ddb", "cddb", "cddb_deep")
_MODES = {"ddb": "none", "cddb": "adjoint", "cddb_deep": "deep"}


@dataclass(frozen=True)
class GuidanceConfig:
    mode: str = "none"  # none | adjoint | deep
    precond: str | None = None  # adjoint | pinv; None -> pinv for deep, adjoint otherwise
    c: float = 1.0
    gd_steps: int = 1
    replacement: bool = False

    def __post_init__(self):
        if self.mode not in ("none", "adjoint", "deep"):
            raise ConfigError(f"guidance mode must be none/adjoint/deep, got {self.mode!r}")
        if self.precond is None:
            object.__setattr__(self, "precond", "pinv" if self.mode == "deep" else "adjoint")
        if self.precond not in ("adjoint", "pinv"):
            raise ConfigError(f"guidance.precond must be adjoint/pinv, got {self.precond!r}")
        if not self.c >= 0:
            raise ConfigError(f"guidance.c must be >= 0, got {self.c!r}")
        if int(self.gd_steps) != self.gd_steps or self.gd_steps < 1:
            raise ConfigError(f"guidance.gd_steps must be >= 1, got {self.gd_steps!r}")


def guidance_for(method: str, **kwargs) -> GuidanceConfig:
    """GuidanceConfig for a method name in :data:`METHODS`."""
    try:
        mode = _MODES[method]
    except KeyError:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}") from None
    return GuidanceConfig(mode=mode, **kwargs)


@dataclass(frozen=True)
class SamplerConfig:
    nfe: int = 20
    grid: str = "quadratic"
    stochastic: str = "ancestral"  # ancestral | ot_ode
    seed: int = 0

    def __post_init__(self):
        if int(self.nfe) != self.nfe or self.nfe < 1:
            raise ConfigError(f"sampler.nfe must be >= 1, got {self.nfe!r}")
        if self.grid not in ("uniform", "quadratic"):
            raise ConfigError(f"sampler.grid must be uniform/quadratic, got {self.grid!r}")
        if self.stochastic not in ("ancestral", "ot_ode"):
            raise ConfigError(f"sampler.mode must be ancestral/ot_ode, got {self.stochastic!r}")


@dataclass
class TrajectoryState:
    i: int
    t: float
    x_i: np.ndarray = field(repr=False)
    x0_hat: np.ndarray = field(repr=False)
    residual: float


def make_rng(seed) -> np.random.Generator:
    """Counter-based stream (Philox) for one trajectory."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def step_size(i: int, c: float, sched: BridgeSchedule, grid) -> float:
    """``rho_i = (1 - alpha2_{t_i | t_{i+1}}) c``."""
    if not 0 <= i < len(grid) - 1:
        raise IndexError(f"step index {i} outside [0, {len(grid) - 1})")
    return (1.0 - sched.transition(grid[i], grid[i + 1]).alpha_sq_st) * c


def ddb_step(x_t, x0_hat, s, t, sched: BridgeSchedule, rng=None, stochastic="ancestral"):
    """Ancestral bridge transition; ``ot_ode`` drops the noise term."""
    a2, var = sched.transition(s, t)
    x_s = (1.0 - a2) * x0_hat + a2 * x_t
    if stochastic == "ancestral":
        if rng is None:
            raise ConfigError("ancestral sampling needs an rng")
        # drawn unconditionally so guided and unguided runs consume the same stream
        z = rng.standard_normal(np.shape(x_t))
        if var > 0.0:
            x_s = x_s + np.sqrt(var) * z
    elif stochastic != "ot_ode":
        raise ConfigError(f"unknown stochastic mode {stochastic!r}")
    return x_s


def residual(op, x, y) -> np.ndarray:
    return y - op.apply(x)


def shallow_correction(x0_hat, y, op, rho: float, gd_steps: int = 1):
    """Sum of ``gd_steps`` gradient steps ``rho A^T (y - A x)`` starting at ``x0_hat``."""
    step = rho * op.adjoint(residual(op, x0_hat, y))
    delta = step
    x = x0_hat
    for _ in range(gd_steps - 1):
        x = x + step
        step = rho * op.adjoint(residual(op, x, y))
        delta = delta + step
    return delta


def _cotangent(op, y, x0_hat, precond, pinv_cfg):
    if not is_linear(op):
        return op.surrogate_pinv(y - op.apply(x0_hat))
    r = residual(op, x0_hat, y)
    if precond == "pinv":
        return pinv(op, r, pinv_cfg)
    return op.adjoint(r)


def deep_correction(
    x_t, t, x0_hat, y, op, denoiser: Denoiser, rho: float,
    precond: str = "pinv", pinv_cfg: PinvSolverConfig | None = None, gd_steps: int = 1,
):
    """``rho J^T u`` with ``u = P (y - A x0_hat)``, repeated from the shifted iterate when ``gd_steps > 1``."""
    u = _cotangent(op, y, x0_hat, precond, pinv_cfg)
    delta = rho * denoiser.vjp(x_t, t, u)
    for _ in range(gd_steps - 1):
        x_shift = x_t + delta
        x_hat = denoiser.predict(x_shift, t)
        u = _cotangent(op, y, x_hat, precond, pinv_cfg)
        delta = delta + rho * denoiser.vjp(x_shift, t, u)
    return delta


def cddb_step(x_t, x0_hat, y, op, rho, s, t, sched, rng=None, stochastic="ancestral", gd_steps=1):
    x_s = ddb_step(x_t, x0_hat, s, t, sched, rng, stochastic)
    if rho == 0.0:
        return x_s
    return x_s + shallow_correction(x0_hat, y, op, rho, gd_steps)


def cddb_deep_step(
    x_t, x0_hat, y, op, denoiser, rho, s, t, sched, rng=None, stochastic="ancestral",
    precond="pinv", pinv_cfg=None, gd_steps=1,
):
    x_s = ddb_step(x_t, x0_hat, s, t, sched, rng, stochastic)
    if rho == 0.0:
        return x_s
    return x_s + deep_correction(x_t, t, x0_hat, y, op, denoiser, rho, precond, pinv_cfg, gd_steps)


def replacement_project(x0_hat, y, mask_op):
    """Overwrite observed pixels of ``x0_hat`` with the measurement."""
    if not isinstance(mask_op, Mask):
        raise ConfigError("replacement projection needs a Mask operator")
    return np.where(mask_op.mask, mask_op.lift(y), x0_hat)


def run(
    x1,
    denoiser: Denoiser,
    op,
    y,
    scfg: SamplerConfig = SamplerConfig(),
    gcfg: GuidanceConfig = GuidanceConfig(),
    pinv_cfg: PinvSolverConfig | None = None,
    record: bool = True,
) -> tuple[np.ndarray, list[TrajectoryState]]:
    """Sample from ``t = 1`` down to ``t = 0``; returns the final estimate and the step log.

    Raises :class:`DivergenceError` as soon as an iterate stops being finite.
    """
    if gcfg.replacement and not isinstance(op, Mask):
        raise ConfigError("guidance.replacement needs a Mask operator")
    if gcfg.mode == "adjoint" and not is_linear(op):
        raise ConfigError("adjoint guidance needs a linear operator; use deep guidance")
    sched = denoiser.schedule
    grid = timestep_grid(scfg.nfe, scfg.grid)
    rng = make_rng(scfg.seed) if scfg.stochastic == "ancestral" else None
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x1, dtype=np.float64).copy()
    log: list[TrajectoryState] = []
    for i in range(scfg.nfe, 0, -1):
        t, s = grid[i], grid[i - 1]
        x0_hat = denoiser.predict(x, t)
        if gcfg.replacement:
            x0_hat = replacement_project(x0_hat, y, op)
        rho = step_size(i - 1, gcfg.c, sched, grid) if gcfg.mode != "none" else 0.0
        if gcfg.mode == "none":
            x_next = ddb_step(x, x0_hat, s, t, sched, rng, scfg.stochastic)
        elif gcfg.mode == "adjoint":
            x_next = cddb_step(x, x0_hat, y, op, rho, s, t, sched, rng, scfg.stochastic, gcfg.gd_steps)
        else:
            x_next = cddb_deep_step(
                x, x0_hat, y, op, denoiser, rho, s, t, sched, rng, scfg.stochastic,
                gcfg.precond, pinv_cfg, gcfg.gd_steps,
            )
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError(i - 1)
        x = x_next
        if record:
            res = float(np.linalg.norm(residual(op, x0_hat, y)))
            log.append(TrajectoryState(i - 1, float(s), x, x0_hat, res))
    return x, log
