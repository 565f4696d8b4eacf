"""Command-line entry point.

    cddb check     [--out DIR]           invariant suite; exit 1 on any failure
    cddb sample    --input Y [--truth X]  one reconstruction
    cddb sweep                            PSNR / energy distance over NFE
    cddb noise                            metrics against measurement noise
    cddb ablate-gd                        repeated corrections at the midpoint

Flags override ``--config`` values, which override defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from . import __version__
from . import config as cfgmod
from .errors import ConfigError, DivergenceError, ShapeError
from .eval.checks import theorem_suite
from .eval.harness import CSV_HEADER, gd_ablation, noise_robustness, pareto_sweep
from .eval.metrics import mse, psnr, residual_norm
from .io import FormatError, read_array, write_pgm, write_tensor
from .sampler import run
from .schedule import I2SB, BetaProfile, InDI

__all__ = ["main", "build_parser"]

# flag dest -> config key
_FLAG_KEYS = {
    "seed": "seed",
    "out": "out_dir",
    "trials": "trials",
    "method": "sampler.method",
    "nfe": "sampler.nfe",
    "grid": "sampler.grid",
    "mode": "sampler.mode",
    "c": "guidance.c",
    "gd_steps": "guidance.gd_steps",
    "precond": "guidance.precond",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' config file")
    common.add_argument("--out", help="output directory (config key out_dir)")
    common.add_argument("--seed", help="base seed")
    common.add_argument("--force", action="store_true", help="allow writing into a nonempty output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")
    common.add_argument("--method", help="ddb | cddb | cddb_deep")
    common.add_argument("--nfe")
    common.add_argument("--grid", help="quadratic | uniform")
    common.add_argument("--mode", help="ancestral | ot_ode")
    common.add_argument("--c", help="step-size constant")
    common.add_argument("--gd-steps", dest="gd_steps")
    common.add_argument("--precond", help="auto | adjoint | pinv")
    common.add_argument("--trials", help="number of paired seeds")

    parser = argparse.ArgumentParser(prog="cddb", description="Direct diffusion bridge sampling at desk scale.")
    parser.add_argument("--version", action="version", version=f"cddb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="run schedule/operator/oracle invariants")
    sp = sub.add_parser("sample", parents=[common], help="reconstruct from one measurement")
    sp.add_argument("--input", required=True, help="measurement (tensor file or PGM)")
    sp.add_argument("--truth", help="clean image for PSNR/MSE (tensor file or PGM)")
    sub.add_parser("sweep", parents=[common], help="pareto sweep over sweep.nfe_list")
    sub.add_parser("noise", parents=[common], help="noise robustness over sweep.noise_stds")
    sub.add_parser("ablate-gd", parents=[common], help="gradient-step ablation at the midpoint iterate")
    return parser


def resolve_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.parse_config(args.config) if args.config else cfgmod.RunConfig()
    pairs = []
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            pairs.append((key, str(value)))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        pairs.append((key.strip(), value))
    return cfgmod.apply_overrides(cfg, pairs, "command line")


def _prepare_out(path: str, force: bool) -> None:
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise ConfigError(f"out_dir {path!r} is not empty; pass --force to write into it")
    os.makedirs(path, exist_ok=True)


def _write_meta(path: str, cfg, command: str, extra: dict | None = None) -> None:
    meta = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfgmod.serialize(cfg),
    }
    meta.update(extra or {})
    with open(os.path.join(path, "run_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_check(cfg, args) -> int:
    s = cfg.schedule
    schedules = [I2SB(BetaProfile(s.beta_min, s.beta_max)), InDI(s.eps)]
    if s.kind == "irsde":
        schedules.append(cfgmod.build_schedule(cfg))
    report = theorem_suite(schedules, seed=cfg.seed)
    text = report.format()
    print(text)
    if args.out is not None:
        _prepare_out(cfg.out_dir, args.force)
        with open(os.path.join(cfg.out_dir, "report.txt"), "w") as fh:
            fh.write(text + "\n")
        with open(os.path.join(cfg.out_dir, "result.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "status", "max_residual", "tol"])
            for c in report.checks:
                w.writerow([c.name, c.status, c.max_residual, c.tol])
        _write_meta(cfg.out_dir, cfg, "check", {"passed": report.passed})
    return 0 if report.passed else 1


def _cmd_sample(cfg, args) -> int:
    y = read_array(args.input)
    shape = cfgmod.signal_shape(cfg, y.shape)
    op = cfgmod.build_operator(cfg, shape)
    if tuple(op.output_shape) != tuple(y.shape):
        raise ShapeError(f"{args.input}: measurement shape {y.shape} != operator output {op.output_shape}")
    truth = read_array(args.truth) if args.truth else None
    if truth is not None and truth.shape != shape:
        raise ShapeError(f"{args.truth}: shape {truth.shape} != signal shape {shape}")
    sched = cfgmod.build_schedule(cfg)
    oracle = cfgmod.build_oracle(cfg, op, sched)
    pcfg = cfgmod.pinv_config(cfg)
    _prepare_out(cfg.out_dir, args.force)
    start = time.perf_counter()
    x_hat, log = run(op.lift(y, pcfg), oracle, op, y, cfgmod.sampler_config(cfg), cfgmod.guidance_config(cfg),
                     pcfg, record=True)
    elapsed = time.perf_counter() - start
    out = cfg.out_dir
    write_tensor(os.path.join(out, "x0_hat.ddbt"), x_hat)
    if x_hat.ndim == 2:
        write_pgm(os.path.join(out, "x0_hat.pgm"), x_hat)
    with open(os.path.join(out, "trajectory.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "t", "residual"])
        for st in log:
            w.writerow([st.i, st.t, st.residual])
    res = residual_norm(op, x_hat, y)
    p, m = (psnr(x_hat, truth), mse(x_hat, truth)) if truth is not None else (float("nan"), float("nan"))
    with open(os.path.join(out, "result.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        w.writerow([cfg.sampler.method, cfg.sampler.nfe, cfg.seed, p, m, res, float("nan"), elapsed])
    _write_meta(out, cfg, "sample", {"input": os.path.abspath(args.input),
                                     "truth": os.path.abspath(args.truth) if args.truth else None})
    print(f"{cfg.sampler.method} nfe={cfg.sampler.nfe} seed={cfg.seed} residual={res:.6g} psnr={p:.4f}")
    return 0


def _seeds(cfg):
    return list(range(cfg.seed, cfg.seed + cfg.trials))


def _cmd_sweep(cfg, args) -> int:
    problem = cfgmod.build_problem(cfg)
    _prepare_out(cfg.out_dir, args.force)
    result = pareto_sweep(problem, cfg.sweep.nfe_list, cfg.sweep.methods, _seeds(cfg))
    result.write_csv(os.path.join(cfg.out_dir, "result.csv"))
    _write_meta(cfg.out_dir, cfg, "sweep", {"seeds": _seeds(cfg)})
    print(result.format_table())
    return 0


def _cmd_noise(cfg, args) -> int:
    problem = cfgmod.build_problem(cfg)
    _prepare_out(cfg.out_dir, args.force)
    result = noise_robustness(problem, cfg.sweep.noise_stds, cfg.sweep.methods, _seeds(cfg), cfg.sampler.nfe)
    result.write_csv(os.path.join(cfg.out_dir, "result.csv"))
    _write_meta(cfg.out_dir, cfg, "noise", {"seeds": _seeds(cfg)})
    print(result.format_table())
    return 0


def _cmd_ablate(cfg, args) -> int:
    problem = cfgmod.build_problem(cfg)
    _prepare_out(cfg.out_dir, args.force)
    result = gd_ablation(problem, cfg.sweep.gd_steps_list, _seeds(cfg), cfg.sweep.ablate_nfe)
    result.write_csv(os.path.join(cfg.out_dir, "result.csv"))
    _write_meta(cfg.out_dir, cfg, "ablate-gd", {"seeds": _seeds(cfg), "rho": result.rho, "index": result.index})
    print(result.format_table())
    return 0


_COMMANDS = {"check": _cmd_check, "sample": _cmd_sample, "sweep": _cmd_sweep, "noise": _cmd_noise,
             "ablate-gd": _cmd_ablate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, ShapeError, FormatError, DivergenceError, NotImplementedError) as exc:
        print(f"cddb: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"cddb: error: {exc.strerror or exc}{f': {name}' if name else ''}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
