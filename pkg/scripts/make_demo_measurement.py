"""Write a synthetic clean image and its measurement for ``cddb sample``.

    python3 scripts/make_demo_measurement.py --out demo --seed 7 [--config run.cfg] [--noise-std 0.0]

Produces ``demo/y.ddbt`` (measurement), ``demo/x0.ddbt`` (truth) and PGM previews.
"""

import argparse
import os

from cddb import config as cfgmod
from cddb.io import write_pgm, write_tensor


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config")
    ap.add_argument("--noise-std", type=float, default=0.0)
    args = ap.parse_args()
    cfg = cfgmod.parse_config(args.config) if args.config else cfgmod.RunConfig()
    problem = cfgmod.build_problem(cfg)
    x0, y = problem.measure(args.seed, args.noise_std)
    os.makedirs(args.out, exist_ok=True)
    write_tensor(os.path.join(args.out, "x0.ddbt"), x0)
    write_tensor(os.path.join(args.out, "y.ddbt"), y)
    write_pgm(os.path.join(args.out, "x0.pgm"), x0)
    if y.ndim == 2:
        write_pgm(os.path.join(args.out, "y.pgm"), y)
    print(f"wrote {args.out}/x0.ddbt and {args.out}/y.ddbt (operator {cfg.operator.kind}, seed {args.seed})")


if __name__ == "__main__":
    main()
