"""Repeated gradient corrections at the midpoint iterate: PSNR and residual vs step count.

    python3 scripts/run_ablation.py --out results/ablation --trials 30
"""

import os

from _common import Timer, parse
from cddb import config as cfgmod
from cddb.eval import gd_ablation


def main():
    cfg, args = parse(__doc__.splitlines()[0], "results/ablation")
    seeds = range(cfg.seed, cfg.seed + cfg.trials)
    with Timer() as tm:
        res = gd_ablation(cfgmod.build_problem(cfg), cfg.sweep.gd_steps_list, seeds, cfg.sweep.ablate_nfe)
    res.write_csv(os.path.join(args.out, "ablation.csv"))
    print(f"== {cfg.operator.kind} ({len(seeds)} seeds, {tm.elapsed:.1f} s)")
    print(res.format_table())


if __name__ == "__main__":
    main()
