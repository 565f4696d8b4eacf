"""PSNR and energy distance of DDB vs CDDB over NFE, on deblurring and inpainting.

    python3 scripts/run_pareto.py --out results/pareto --trials 30
"""

import os

from _common import Timer, parse
from cddb import config as cfgmod
from cddb.eval import pareto_sweep


def main():
    cfg, args = parse(__doc__.splitlines()[0], "results/pareto")
    seeds = range(cfg.seed, cfg.seed + cfg.trials)
    for kind in ("blur", "mask"):
        cfgmod.apply_overrides(cfg, [("operator.kind", kind)])
        with Timer() as tm:
            res = pareto_sweep(cfgmod.build_problem(cfg), cfg.sweep.nfe_list, cfg.sweep.methods, seeds)
        res.write_csv(os.path.join(args.out, f"pareto_{kind}.csv"))
        print(f"== {kind} ({len(seeds)} seeds, {tm.elapsed:.1f} s)")
        print(res.format_table())


if __name__ == "__main__":
    main()
