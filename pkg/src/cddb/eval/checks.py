"""Invariant suite: schedule identities, operator adjoints, oracle Jacobians."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from ..errors import UnsupportedError
from ..linop import (
    AvgPoolDownsample, Identity, Mask, PinvSolverConfig, UniformQuantizer, gaussian_blur, pinv, uniform_blur,
)
from ..oracle import GaussianOracle, MixtureOracle, fd_vjp
from ..schedule import I2SB, BridgeSchedule, InDI, indi_time_map, total_variance_residual

__all__ = ["CheckResult", "SuiteReport", "theorem_suite", "random_pairs"]


@dataclass
class CheckResult:
    name: str
    status: str  # pass | fail | skipped
    max_residual: float = math.nan
    tol: float = math.nan
    detail: str = ""


@dataclass
class SuiteReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def get(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self) -> str:
        width = max((len(c.name) for c in self.checks), default=4)
        lines = []
        for c in self.checks:
            res = "" if math.isnan(c.max_residual) else f"max={c.max_residual:.3e} tol={c.tol:.0e}"
            lines.append(f"{c.status.upper():7s} {c.name.ljust(width)}  {res} {c.detail}".rstrip())
        lines.append("ALL PASSED" if self.passed else "FAILURES PRESENT")
        return "\n".join(lines)


def random_pairs(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` pairs ``0 < s < t <= 1``."""
    out = np.empty((n, 2))
    k = 0
    while k < n:
        s, t = np.sort(rng.uniform(0.0, 1.0, size=2))
        if 0.0 < s < t:
            out[k] = s, t
            k += 1
    return out


def _result(name, value, tol, detail=""):
    ok = bool(np.isfinite(value) and (value < tol or value == tol == 0.0))
    return CheckResult(name, "pass" if ok else "fail", float(value), tol, detail)


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def _schedule_checks(sched: BridgeSchedule, label: str, pairs: np.ndarray) -> list[CheckResult]:
    out = []
    if isinstance(sched, I2SB):
        prof = sched.profile
        grid = np.linspace(0.0, 1.0, 1000)
        total = prof.gamma_sq(1.0)
        worst = max(abs(prof.gamma_sq(t) + prof.bar_gamma_sq(t) - total) for t in grid)
        out.append(_result(f"{label}.gamma_constancy", worst, 1e-14))
        worst = 0.0
        for t in grid[1:]:
            ref, _ = quad(prof.beta, 0.0, t, points=[0.5] if t > 0.5 else None, epsabs=0.0, epsrel=1e-13)
            worst = max(worst, _rel(prof.gamma_sq(t), ref))
        out.append(_result(f"{label}.gamma_quadrature", worst, 1e-12))
        worst = 0.0
        for s, t in pairs:
            tau_s, eps2_s = indi_time_map(prof, s)
            tau_t, eps2_t = indi_time_map(prof, t)
            a2_map, v_map = tau_s / tau_t, tau_s**2 * (eps2_s - eps2_t)
            a2, v = sched.transition(s, t)
            worst = max(worst, _rel(a2_map, a2), _rel(v_map, v))
        out.append(_result(f"{label}.indi_equivalence", worst, 1e-10))
    grid = np.linspace(0.0, 1.0, 2001)
    alphas = np.array([sched.coefficients(t).alpha_t for t in grid])
    drop = float(max(0.0, -np.min(np.diff(alphas))))
    out.append(_result(f"{label}.alpha_monotone", drop, 0.0))
    try:
        worst = max(abs(total_variance_residual(sched, s, t)) for s, t in pairs)
    except UnsupportedError:
        out.append(CheckResult(f"{label}.total_variance", "skipped", detail="unsupported: no ancestral transition"))
    else:
        out.append(_result(f"{label}.total_variance", worst, 1e-10))
    return out


def _operator_checks(rng: np.random.Generator, trials: int) -> list[CheckResult]:
    shape = (8, 8)
    ops = {
        "identity": Identity(shape),
        "mask": Mask(rng.random(shape) < 0.5),
        "gauss_blur": gaussian_blur(shape, 3, 0.6),
        "uniform_blur": uniform_blur(shape, 3),
        "avgpool": AvgPoolDownsample(shape, 2),
    }
    out = []
    for name, op in ops.items():
        worst = 0.0
        for _ in range(trials):
            x = rng.standard_normal(op.input_shape)
            u = rng.standard_normal(op.output_shape)
            lhs = np.vdot(op.apply(x), u)
            rhs = np.vdot(x, op.adjoint(u))
            worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(u)))
        out.append(_result(f"operator.{name}.dot_test", worst, 1e-10))
        if name == "uniform_blur":
            # uniform 3x3 transfer function has exact zeros on 8x8; A A^+ A is checked on the gaussian blur
            continue
        worst = 0.0
        cfg = PinvSolverConfig(max_iters=200, tol=1e-12)
        for _ in range(10):
            x = rng.standard_normal(op.input_shape)
            ax = op.apply(x)
            worst = max(worst, np.linalg.norm(op.apply(pinv(op, ax, cfg)) - ax) / np.linalg.norm(ax))
        out.append(_result(f"operator.{name}.pinv_identity", worst, 1e-6))
    q = UniformQuantizer(0.1)
    x = rng.standard_normal(1000)
    diff = float(np.max(np.abs(q.apply(q.apply(x)) - q.apply(x))))
    out.append(_result("operator.quantizer.idempotent", diff, 0.0))
    return out


def _oracle_checks(rng: np.random.Generator, probes: int) -> list[CheckResult]:
    sched = I2SB()
    dim = 4
    op = gaussian_blur((dim,), 3, 0.7)
    root = rng.standard_normal((dim, dim))
    gauss = GaussianOracle(sched, op, rng.standard_normal(dim), root @ root.T + 0.5 * np.eye(dim), noise_std=0.05)
    x0s = 0.05 * rng.standard_normal((3, dim))
    x1s = np.stack([op.apply(x) for x in x0s])
    mix = MixtureOracle(sched, x0s, x1s, sigma_floor=1e-3)
    out = []
    x = rng.standard_normal(dim)
    out.append(_result("oracle.gaussian.clean_identity", float(np.max(np.abs(gauss.predict(x, 0.0) - x))), 0.0))
    sep = 10.0 * rng.standard_normal((3, dim))
    far = MixtureOracle(sched, sep, sep + 1.0, sigma_floor=1e-3)
    out.append(_result("oracle.mixture.clean_identity",
                       max(float(np.max(np.abs(far.predict(p, 0.0) - p))) for p in sep), 0.0))
    worst_w = 0.0
    worst = {"gaussian": 0.0, "mixture": 0.0}
    for _ in range(probes):
        t = rng.uniform(0.1, 0.9)
        alpha, sigma = sched.coefficients(t)
        k = rng.integers(3)
        xt = (1 - alpha) * x0s[k] + alpha * x1s[k] + sigma * rng.standard_normal(dim)
        w = mix.weights(xt, t)
        worst_w = max(worst_w, abs(w.sum() - 1.0), float(np.max(np.maximum(w - 1.0, -w))))
        u = rng.standard_normal(dim)
        for name, orc in (("gaussian", gauss), ("mixture", mix)):
            exact = orc.vjp(xt, t, u)
            approx = fd_vjp(orc, xt, t, u, 1e-5)
            worst[name] = max(worst[name], np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1e-300))
    out.append(_result("oracle.mixture.weights_simplex", worst_w, 1e-12))
    for name, val in worst.items():
        out.append(_result(f"oracle.{name}.vjp_vs_fd", val, 1e-5))
    return out


def theorem_suite(
    schedules: Sequence[BridgeSchedule] | None = None,
    n_pairs: int = 1000,
    seed: int = 0,
    operators: bool = True,
    oracles: bool = True,
    probes: int = 100,
) -> SuiteReport:
    """Run every invariant and collect worst-case residuals."""
    rng = np.random.default_rng(seed)
    if schedules is None:
        schedules = [I2SB(), InDI()]
    pairs = random_pairs(rng, n_pairs)
    report = SuiteReport()
    for sched in schedules:
        report.checks += _schedule_checks(sched, getattr(sched, "kind", type(sched).__name__), pairs)
    if operators:
        report.checks += _operator_checks(rng, 100)
    if oracles:
        report.checks += _oracle_checks(rng, probes)
    return report
