"""Paired-seed experiment harness.

A :class:`Problem` fixes the dataset, forward operator, bridge and oracle.
For each seed, every method sees the same clean image, the same measurement
and the same sampler noise stream, so metric differences isolate the
algorithm.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DivergenceError
from ..linop import PinvSolverConfig, UniformQuantizer, is_linear
from ..oracle import MixtureOracle
from ..sampler import SamplerConfig, ddb_step, guidance_for, make_rng, run, shallow_correction, step_size
from ..schedule import I2SB, BridgeSchedule, timestep_grid
from .data import SyntheticDataset
from .metrics import energy_distance, mse, psnr, residual_norm

__all__ = [
    "Problem",
    "TrialResult",
    "SweepResult",
    "AblationResult",
    "run_trial",
    "pareto_sweep",
    "noise_robustness",
    "gd_ablation",
    "CSV_HEADER",
]

CSV_HEADER = ["method", "nfe", "seed", "psnr", "mse", "residual", "energy_distance", "runtime_s"]


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("DDB_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items, workers=None):
    workers = workers or _default_workers()
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def measurement_hash(y) -> str:
    return hashlib.sha256(np.ascontiguousarray(y, dtype=np.float64).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class Problem:
    """Desk-scale inverse problem.

    The oracle is built from noiseless training pairs ``(x0, lift(A x0))``;
    ``noise_std`` only affects the evaluation measurements.
    """

    dataset: SyntheticDataset
    op: object
    schedule: BridgeSchedule = field(default_factory=I2SB)
    sigma_floor: float = 0.3
    noise_std: float = 0.0
    grid: str = "quadratic"
    stochastic: str = "ancestral"
    c: float = 1.0
    precond: str | None = None
    gd_steps: int = 1
    replacement: bool = False
    pinv: PinvSolverConfig = field(default_factory=PinvSolverConfig)

    @cached_property
    def oracle(self) -> MixtureOracle:
        x0s = self.dataset.train_images()
        x1s = np.stack([self.op.lift(self.op.apply(x), self.pinv) for x in x0s])
        return MixtureOracle(self.schedule, x0s, x1s, self.sigma_floor)

    def measure(self, seed: int, noise_std: float | None = None):
        """Clean image and measurement for ``seed``; noise direction is shared across noise levels."""
        rng = np.random.default_rng([seed, 0])
        x0 = self.dataset.sample(rng)
        clean = self.op.apply(x0)
        noise = rng.standard_normal(np.shape(clean))
        std = self.noise_std if noise_std is None else noise_std
        return x0, clean + std * noise


@dataclass
class TrialResult:
    method: str
    nfe: int
    seed: int
    psnr: float
    mse: float
    residual: float
    runtime: float
    energy_distance: float = math.nan
    noise_std: float = 0.0
    y_hash: str = ""
    error: str = ""
    x_hat: np.ndarray | None = field(default=None, repr=False)
    x_true: np.ndarray | None = field(default=None, repr=False)

    def csv_row(self) -> list:
        return [self.method, self.nfe, self.seed, self.psnr, self.mse, self.residual,
                self.energy_distance, self.runtime]


def run_trial(problem: Problem, method: str, nfe: int, seed: int, noise_std: float | None = None) -> TrialResult:
    """One reconstruction; divergence is recorded in ``error`` instead of raised."""
    x0, y = problem.measure(seed, noise_std)
    std = problem.noise_std if noise_std is None else noise_std
    gcfg = guidance_for(
        method, c=problem.c, precond=problem.precond, gd_steps=problem.gd_steps,
        replacement=problem.replacement,
    )
    scfg = SamplerConfig(nfe=nfe, grid=problem.grid, stochastic=problem.stochastic, seed=seed)
    start = time.perf_counter()
    try:
        x_hat, _ = run(problem.op.lift(y, problem.pinv), problem.oracle, problem.op, y, scfg, gcfg,
                       problem.pinv, record=False)
    except DivergenceError as exc:
        return TrialResult(method, nfe, seed, math.nan, math.nan, math.nan, time.perf_counter() - start,
                           noise_std=std, y_hash=measurement_hash(y), error=str(exc), x_true=x0)
    elapsed = time.perf_counter() - start
    return TrialResult(
        method, nfe, seed,
        psnr=psnr(x_hat, x0, problem.dataset.peak),
        mse=mse(x_hat, x0),
        residual=residual_norm(problem.op, x_hat, y),
        runtime=elapsed,
        noise_std=std,
        y_hash=measurement_hash(y),
        x_hat=x_hat,
        x_true=x0,
    )


def _stats(values):
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


@dataclass
class SweepResult:
    """Per-trial rows plus per-group aggregates; ``param`` names an extra swept axis."""

    rows: list[TrialResult]
    param: str | None = None

    def _key(self, r):
        return (r.method, r.nfe, getattr(r, self.param)) if self.param else (r.method, r.nfe)

    def groups(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out.setdefault(self._key(r), []).append(r)
        return out

    def summary(self) -> list[dict]:
        table = []
        for key, rows in self.groups().items():
            entry = {"method": key[0], "nfe": key[1]}
            if self.param:
                entry[self.param] = key[2]
            for name in ("psnr", "mse", "residual", "runtime"):
                entry[name], entry[name + "_se"] = _stats(getattr(r, name) for r in rows)
            entry["energy_distance"] = rows[0].energy_distance
            entry["n"] = sum(1 for r in rows if not r.error)
            entry["failed"] = sum(1 for r in rows if r.error)
            table.append(entry)
        return table

    def lookup(self, method, nfe, value=None) -> dict:
        for entry in self.summary():
            if entry["method"] == method and entry["nfe"] == nfe and (
                self.param is None or entry[self.param] == value
            ):
                return entry
        raise KeyError((method, nfe, value))

    def per_seed(self, method, nfe, metric, value=None) -> np.ndarray:
        rows = [r for r in self.rows if r.method == method and r.nfe == nfe
                and (self.param is None or getattr(r, self.param) == value)]
        rows.sort(key=lambda r: r.seed)
        return np.array([getattr(r, metric) for r in rows])

    def write_csv(self, path) -> None:
        header = CSV_HEADER + ([self.param] if self.param else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.rows:
                w.writerow(r.csv_row() + ([getattr(r, self.param)] if self.param else []))

    def format_table(self) -> str:
        cols = ["method", "nfe"] + ([self.param] if self.param else []) + [
            "psnr", "psnr_se", "residual", "residual_se", "energy_distance", "n", "failed"]
        lines = [cols]
        for e in self.summary():
            lines.append([f"{e[c]:.4g}" if isinstance(e[c], float) else str(e[c]) for c in cols])
        widths = [max(len(row[i]) for row in lines) for i in range(len(cols))]
        return "\n".join("  ".join(cell.rjust(wd) for cell, wd in zip(row, widths)) for row in lines)


def _fill_energy(rows: list[TrialResult], key) -> None:
    groups: dict = {}
    for r in rows:
        groups.setdefault(key(r), []).append(r)
    for grp in groups.values():
        ok = [r for r in grp if r.x_hat is not None]
        if len(ok) < 2:
            continue
        ed = energy_distance(np.stack([r.x_hat for r in ok]), np.stack([r.x_true for r in ok]))
        for r in grp:
            r.energy_distance = ed


def pareto_sweep(problem: Problem, nfe_list: Sequence[int], methods: Sequence[str], seeds: Sequence[int],
                 workers: int | None = None) -> SweepResult:
    """Metrics for every (method, nfe) over paired seeds."""
    jobs = [(m, n, s) for m in methods for n in nfe_list for s in seeds]
    rows = _pmap(lambda job: run_trial(problem, *job), jobs, workers)
    _fill_energy(rows, lambda r: (r.method, r.nfe))
    return SweepResult(rows)


def noise_robustness(problem: Problem, noise_stds: Sequence[float], methods: Sequence[str],
                     seeds: Sequence[int], nfe: int = 20, workers: int | None = None) -> SweepResult:
    """Metrics against measurement noise level; the oracle stays trained on clean pairs."""
    jobs = [(m, nfe, s, std) for std in noise_stds for m in methods for s in seeds]
    rows = _pmap(lambda job: run_trial(problem, *job), jobs, workers)
    _fill_energy(rows, lambda r: (r.method, r.nfe, r.noise_std))
    return SweepResult(rows, param="noise_std")


@dataclass
class AblationResult:
    steps: list[int]
    psnr: np.ndarray  # (n_seeds, n_steps)
    residual: np.ndarray  # (n_seeds, n_steps)
    rho: float
    index: int

    def table(self) -> list[dict]:
        return [
            {"steps": k, "psnr": float(self.psnr[:, j].mean()), "residual": float(self.residual[:, j].mean())}
            for j, k in enumerate(self.steps)
        ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gd_steps", "psnr", "psnr_se", "residual", "residual_se"])
            for j, k in enumerate(self.steps):
                p, pse = _stats(self.psnr[:, j])
                r, rse = _stats(self.residual[:, j])
                w.writerow([k, p, pse, r, rse])

    def format_table(self) -> str:
        lines = [f"midpoint index i={self.index}, rho={self.rho:.4g}", "gd_steps      psnr  residual"]
        for e in self.table():
            lines.append(f"{e['steps']:8d}  {e['psnr']:8.4f}  {e['residual']:8.5f}")
        return "\n".join(lines)


def gd_ablation(problem: Problem, gd_steps_list: Sequence[int], seeds: Sequence[int], nfe: int = 10,
                workers: int | None = None) -> AblationResult:
    """Repeated shallow corrections of the denoised estimate at grid index ``nfe // 2``.

    The trajectory is plain DDB down to that index; ``rho`` is the step size of
    that index capped at ``1 / |A|^2``.
    """
    if not is_linear(problem.op):
        raise ConfigError("gradient-descent ablation needs a linear operator")
    if nfe < 2:
        raise ConfigError("gradient-descent ablation needs nfe >= 2")
    steps = sorted(set(int(k) for k in gd_steps_list))
    if steps and steps[0] < 0:
        raise ConfigError("gd step counts must be >= 0")
    sched = problem.schedule
    grid = timestep_grid(nfe, problem.grid)
    mid = nfe // 2
    rho = min(step_size(mid - 1, problem.c, sched, grid), 1.0 / problem.op.norm_sq())

    def one(seed):
        x0, y = problem.measure(seed)
        rng = make_rng(seed) if problem.stochastic == "ancestral" else None
        x = problem.op.lift(y, problem.pinv)
        for i in range(nfe, mid, -1):
            x_hat = problem.oracle.predict(x, grid[i])
            x = ddb_step(x, x_hat, grid[i - 1], grid[i], sched, rng, problem.stochastic)
        x_hat = problem.oracle.predict(x, grid[mid])
        ps, rs = [], []
        for k in steps:
            est = x_hat if k == 0 else x_hat + shallow_correction(x_hat, y, problem.op, rho, k)
            ps.append(psnr(est, x0, problem.dataset.peak))
            rs.append(residual_norm(problem.op, est, y))
        return ps, rs

    out = _pmap(one, list(seeds), workers)
    return AblationResult(
        steps=steps,
        psnr=np.array([o[0] for o in out]),
        residual=np.array([o[1] for o in out]),
        rho=rho,
        index=mid,
    )
