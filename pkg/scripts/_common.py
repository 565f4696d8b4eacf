"""Shared argument handling for the experiment scripts."""

import argparse
import os
import time

from cddb import config as cfgmod


def parse(description, default_out):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--config", help="flat 'key = value' config file")
    ap.add_argument("--out", default=default_out)
    ap.add_argument("--trials", type=int, help="paired seeds (default: config trials)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    cfg = cfgmod.parse_config(args.config) if args.config else cfgmod.RunConfig()
    pairs = [tuple(s.split("=", 1)) for s in args.set]
    if args.trials is not None:
        pairs.append(("trials", str(args.trials)))
    cfgmod.apply_overrides(cfg, pairs, "command line")
    os.makedirs(args.out, exist_ok=True)
    return cfg, args


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
