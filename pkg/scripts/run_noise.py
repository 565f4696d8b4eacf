"""Residual and PSNR of DDB vs CDDB as measurement noise grows.

    python3 scripts/run_noise.py --out results/noise --trials 50
"""

import os

from _common import Timer, parse
from cddb import config as cfgmod
from cddb.eval import noise_robustness


def main():
    cfg, args = parse(__doc__.splitlines()[0], "results/noise")
    seeds = range(cfg.seed, cfg.seed + cfg.trials)
    with Timer() as tm:
        res = noise_robustness(cfgmod.build_problem(cfg), cfg.sweep.noise_stds, cfg.sweep.methods, seeds,
                               cfg.sampler.nfe)
    res.write_csv(os.path.join(args.out, "noise.csv"))
    print(f"== {cfg.operator.kind} ({len(seeds)} seeds, {tm.elapsed:.1f} s)")
    print(res.format_table())
    for std in cfg.sweep.noise_stds:
        ddb = res.per_seed("ddb", cfg.sampler.nfe, "residual", std)
        cddb = res.per_seed("cddb", cfg.sampler.nfe, "residual", std)
        print(f"noise_std={std}: cddb residual below ddb on {100 * (cddb < ddb).mean():.0f}% of seeds")


if __name__ == "__main__":
    main()
