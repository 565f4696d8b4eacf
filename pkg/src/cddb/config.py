"""Run configuration: flat ``section.key = value`` files.

Lines starting with ``#`` are comments. Every key has a default, unknown keys
are rejected and values are coerced to the type of their default. Sequence
values are comma-separated.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .io import read_array, read_mask, read_tensor
from .linop import (
    AvgPoolDownsample, Identity, Mask, PinvSolverConfig, UniformQuantizer, gaussian_blur, uniform_blur,
)
from .oracle import GaussianOracle, MixtureOracle
from .sampler import METHODS, GuidanceConfig, SamplerConfig, guidance_for
from .schedule import I2SB, IRSDE, BetaProfile, InDI, load_theta_bar

__all__ = [
    "RunConfig",
    "parse_config",
    "parse_text",
    "serialize",
    "apply_overrides",
    "build_schedule",
    "build_operator",
    "build_problem",
    "build_oracle",
    "sampler_config",
    "guidance_config",
]

OPERATOR_KINDS = ("identity", "mask", "blur", "uniform_blur", "pool", "quantizer")


@dataclass
class ScheduleSection:
    kind: str = "i2sb"  # i2sb | indi | irsde
    beta_min: float = 1e-4
    beta_max: float = 2e-2
    eps: float = 0.01
    # serialized as `schedule.lambda`
    lam: float = 10.0 / 255.0
    theta_bar_file: str = ""


@dataclass
class OperatorSection:
    kind: str = "blur"
    kernel_std: float = 1.5
    kernel_size: int = 5
    pool_factor: int = 2
    mask_file: str = ""
    mask_fraction: float = 0.5  # kept-pixel fraction of the random mask used without mask_file
    quant_delta: float = 0.1


@dataclass
class PinvSection:
    max_iters: int = 50
    tol: float = 1e-8
    damping: float = 0.0


@dataclass
class OracleSection:
    kind: str = "mixture"  # mixture | gaussian
    sigma_floor: float = 0.3
    noise_std: float = 0.0
    dataset_dir: str = ""
    prior_mean: float = 0.5
    prior_var: float = 0.01


@dataclass
class SamplerSection:
    method: str = "cddb"
    nfe: int = 20
    grid: str = "quadratic"
    mode: str = "ancestral"


@dataclass
class GuidanceSection:
    c: float = 1.0
    gd_steps: int = 1
    precond: str = "auto"  # auto | adjoint | pinv
    replacement: bool = False


@dataclass
class DatasetSection:
    kind: str = "blob_mixture"
    size: int = 64
    image_size: int = 16
    seed: int = 0
    n_canonical: int = 4
    amplitude: float = 0.05


@dataclass
class SweepSection:
    methods: tuple = ("ddb", "cddb")
    nfe_list: tuple = (5, 20, 100)
    noise_std: float = 0.0
    noise_stds: tuple = (0.0, 0.05, 0.1)
    gd_steps_list: tuple = tuple(range(11))
    ablate_nfe: int = 10


@dataclass
class RunConfig:
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    operator: OperatorSection = field(default_factory=OperatorSection)
    pinv: PinvSection = field(default_factory=PinvSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    guidance: GuidanceSection = field(default_factory=GuidanceSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    seed: int = 0
    trials: int = 30
    out_dir: str = "out"


_RENAMES = {("schedule", "lambda"): "lam"}
_RENAMES_BACK = {(sec, attr): key for (sec, key), attr in _RENAMES.items()}
_SEQ_TYPES = {("sweep", "methods"): str, ("sweep", "nfe_list"): int, ("sweep", "noise_stds"): float,
              ("sweep", "gd_steps_list"): int}


def _sections(cfg: RunConfig):
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            yield f.name, value


def _keys(cfg: RunConfig) -> dict:
    """dotted key -> (owner object, attribute name)"""
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            for sf in dataclasses.fields(value):
                key = _RENAMES_BACK.get((f.name, sf.name), sf.name)
                out[f"{f.name}.{key}"] = (value, sf.name, f.name)
        else:
            out[f.name] = (cfg, f.name, None)
    return out


def _coerce(key: str, raw: str, default, section):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            elem = _SEQ_TYPES[(section, key.split(".", 1)[1])]
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(elem(s) for s in items)
        return raw
    except ValueError:
        kind = type(default).__name__ if not isinstance(default, tuple) else "comma-separated list"
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def apply_overrides(cfg: RunConfig, pairs, source: str = "override") -> RunConfig:
    """Set ``(key, raw_value)`` pairs in place and re-validate."""
    table = _keys(cfg)
    for key, raw in pairs:
        if key not in table:
            raise ConfigError(f"{source}: unknown key {key!r}")
        owner, attr, section = table[key]
        setattr(owner, attr, _coerce(key, raw, getattr(owner, attr), section))
    validate(cfg)
    return cfg


def parse_text(text: str, source: str = "<string>") -> RunConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        pairs.append((key.strip(), value))
    return apply_overrides(RunConfig(), pairs, source)


def parse_config(path) -> RunConfig:
    """Read, default-fill and validate a config file."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        return parse_text(fh.read(), str(path))


def serialize(cfg: RunConfig) -> str:
    lines = []
    for key, (owner, attr, _) in _keys(cfg).items():
        lines.append(f"{key} = {_format(getattr(owner, attr))}")
    return "\n".join(lines) + "\n"


def _require(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def validate(cfg: RunConfig) -> None:
    """Raise :class:`ConfigError` naming the first offending key."""
    s = cfg.schedule
    _require(s.kind in ("i2sb", "indi", "irsde"), "schedule.kind", f"must be i2sb/indi/irsde, got {s.kind!r}")
    _require(s.beta_min > 0, "schedule.beta_min", "must be > 0")
    _require(s.beta_max > s.beta_min, "schedule.beta_max", "must exceed schedule.beta_min")
    _require(s.eps >= 0, "schedule.eps", "must be >= 0")
    _require(s.lam > 0, "schedule.lambda", "must be > 0")
    _require(s.kind != "irsde" or s.theta_bar_file, "schedule.theta_bar_file", "required for irsde")
    o = cfg.operator
    _require(o.kind in OPERATOR_KINDS, "operator.kind", f"must be one of {OPERATOR_KINDS}, got {o.kind!r}")
    _require(o.kernel_std > 0, "operator.kernel_std", "must be > 0")
    _require(o.kernel_size >= 1 and o.kernel_size % 2 == 1, "operator.kernel_size", "must be odd and >= 1")
    _require(o.pool_factor >= 1, "operator.pool_factor", "must be >= 1")
    _require(0 < o.mask_fraction <= 1, "operator.mask_fraction", "must be in (0, 1]")
    _require(o.quant_delta > 0, "operator.quant_delta", "must be > 0")
    p = cfg.pinv
    _require(p.max_iters >= 1, "pinv.max_iters", "must be >= 1")
    _require(p.tol > 0, "pinv.tol", "must be > 0")
    _require(p.damping >= 0, "pinv.damping", "must be >= 0")
    r = cfg.oracle
    _require(r.kind in ("mixture", "gaussian"), "oracle.kind", f"must be mixture/gaussian, got {r.kind!r}")
    _require(r.sigma_floor > 0, "oracle.sigma_floor", "must be > 0")
    _require(r.noise_std >= 0, "oracle.noise_std", "must be >= 0")
    _require(r.prior_var > 0, "oracle.prior_var", "must be > 0")
    m = cfg.sampler
    _require(m.method in METHODS, "sampler.method", f"must be one of {METHODS}, got {m.method!r}")
    _require(m.nfe >= 1, "sampler.nfe", "must be >= 1")
    _require(m.grid in ("uniform", "quadratic"), "sampler.grid", f"must be uniform/quadratic, got {m.grid!r}")
    _require(m.mode in ("ancestral", "ot_ode"), "sampler.mode", f"must be ancestral/ot_ode, got {m.mode!r}")
    g = cfg.guidance
    _require(g.c >= 0, "guidance.c", f"must be >= 0, got {g.c!r}")
    _require(g.gd_steps >= 1, "guidance.gd_steps", "must be >= 1")
    _require(g.precond in ("auto", "adjoint", "pinv"), "guidance.precond", "must be auto/adjoint/pinv")
    d = cfg.dataset
    _require(d.kind in ("gaussian_field", "blob_mixture"), "dataset.kind", "must be gaussian_field/blob_mixture")
    _require(d.size >= 1, "dataset.size", "must be >= 1")
    _require(d.image_size >= 2, "dataset.image_size", "must be >= 2")
    _require(d.n_canonical >= 1, "dataset.n_canonical", "must be >= 1")
    w = cfg.sweep
    _require(w.methods and all(x in METHODS for x in w.methods), "sweep.methods", f"entries must be in {METHODS}")
    _require(w.nfe_list and all(n >= 1 for n in w.nfe_list), "sweep.nfe_list", "entries must be >= 1")
    _require(w.noise_std >= 0, "sweep.noise_std", "must be >= 0")
    _require(all(x >= 0 for x in w.noise_stds), "sweep.noise_stds", "entries must be >= 0")
    _require(all(k >= 0 for k in w.gd_steps_list), "sweep.gd_steps_list", "entries must be >= 0")
    _require(w.ablate_nfe >= 2, "sweep.ablate_nfe", "must be >= 2")
    _require(cfg.trials >= 1, "trials", "must be >= 1")
    _require(cfg.seed >= 0, "seed", "must be >= 0")


def build_schedule(cfg: RunConfig):
    s = cfg.schedule
    if s.kind == "i2sb":
        return I2SB(BetaProfile(s.beta_min, s.beta_max))
    if s.kind == "indi":
        return InDI(s.eps)
    times, theta = load_theta_bar(s.theta_bar_file)
    return IRSDE(tuple(times), tuple(theta), s.lam)


def build_operator(cfg: RunConfig, shape):
    """Operator on signals of ``shape``."""
    o = cfg.operator
    shape = tuple(shape)
    if o.kind == "identity":
        return Identity(shape)
    if o.kind == "blur":
        return gaussian_blur(shape, o.kernel_size, o.kernel_std)
    if o.kind == "uniform_blur":
        return uniform_blur(shape, o.kernel_size)
    if o.kind == "pool":
        return AvgPoolDownsample(shape, o.pool_factor)
    if o.kind == "quantizer":
        return UniformQuantizer(o.quant_delta, shape)
    if o.mask_file:
        mask = read_mask(o.mask_file)
        if mask.shape != shape:
            raise ConfigError(f"operator.mask_file: mask shape {mask.shape} != signal shape {shape}")
        return Mask(mask)
    rng = np.random.default_rng([cfg.dataset.seed, 15485863])
    return Mask(rng.random(shape) < o.mask_fraction)


def signal_shape(cfg: RunConfig, measurement_shape) -> tuple:
    if cfg.operator.kind == "pool":
        return tuple(n * cfg.operator.pool_factor for n in measurement_shape)
    return tuple(measurement_shape)


def pinv_config(cfg: RunConfig) -> PinvSolverConfig:
    return PinvSolverConfig(cfg.pinv.max_iters, cfg.pinv.tol, cfg.pinv.damping)


def sampler_config(cfg: RunConfig, seed: int | None = None) -> SamplerConfig:
    m = cfg.sampler
    return SamplerConfig(m.nfe, m.grid, m.mode, cfg.seed if seed is None else seed)


def guidance_config(cfg: RunConfig) -> GuidanceConfig:
    g = cfg.guidance
    precond = None if g.precond == "auto" else g.precond
    return guidance_for(cfg.sampler.method, precond=precond, c=g.c, gd_steps=g.gd_steps, replacement=g.replacement)


def dataset(cfg: RunConfig):
    from .eval.data import SyntheticDataset

    d = cfg.dataset
    return SyntheticDataset(kind=d.kind, size=d.size, image_size=d.image_size, seed=d.seed,
                            n_canonical=d.n_canonical, amplitude=d.amplitude)


def build_problem(cfg: RunConfig):
    from .eval.harness import Problem

    if cfg.oracle.kind != "mixture":
        raise ConfigError("oracle.kind: experiments use the mixture oracle")
    ds = dataset(cfg)
    g = cfg.guidance
    return Problem(
        dataset=ds,
        op=build_operator(cfg, ds.shape),
        schedule=build_schedule(cfg),
        sigma_floor=cfg.oracle.sigma_floor,
        noise_std=cfg.sweep.noise_std,
        grid=cfg.sampler.grid,
        stochastic=cfg.sampler.mode,
        c=g.c,
        precond=None if g.precond == "auto" else g.precond,
        gd_steps=g.gd_steps,
        replacement=g.replacement,
        pinv=pinv_config(cfg),
    )


def build_oracle(cfg: RunConfig, op, sched):
    """Oracle for ``sample``: dataset_dir pairs, synthetic pairs, or a Gaussian prior."""
    o = cfg.oracle
    shape = tuple(op.input_shape)
    if o.kind == "gaussian":
        return GaussianOracle(sched, op, o.prior_mean, o.prior_var, o.noise_std, pinv_config(cfg))
    if o.dataset_dir:
        x0s = read_tensor(os.path.join(o.dataset_dir, "x0.ddbt"))
        x1s = read_tensor(os.path.join(o.dataset_dir, "x1.ddbt"))
        if x0s.shape[1:] != shape:
            raise ConfigError(f"oracle.dataset_dir: pair shape {x0s.shape[1:]} != signal shape {shape}")
    else:
        ds = dataset(cfg)
        if ds.shape != shape:
            raise ConfigError(f"dataset.image_size: synthetic pairs {ds.shape} != signal shape {shape}")
        x0s = ds.train_images()
        x1s = np.stack([op.lift(op.apply(x), pinv_config(cfg)) for x in x0s])
    return MixtureOracle(sched, x0s, x1s, o.sigma_floor)


def load_measurement(path) -> np.ndarray:
    return read_array(path)
