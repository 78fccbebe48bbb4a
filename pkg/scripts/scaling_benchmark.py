"""Per-knot time of the trend-filter path as N doubles (median over repeats)."""
import argparse
import statistics
import time
from dataclasses import dataclass

import numpy as np

from l1path import iter_path_bffd, trend_filter_model


@dataclass
class Config:
    sizes: str = "2000,4000,8000"
    knots: int = 10
    repeats: int = 5


def per_knot(N: int, knots: int, seed: int) -> tuple:
    y = np.cumsum(np.random.default_rng(seed).normal(size=N))
    t0 = time.perf_counter()
    _, it = iter_path_bffd(trend_filter_model(y))
    next(it)
    t1 = time.perf_counter()
    for _ in range(knots):
        next(it)
    return t1 - t0, (time.perf_counter() - t1) / knots


def main(cfg: Config):
    prev = None
    print("N\tstartup_s\tper_knot_ms\tratio")
    for N in map(int, cfg.sizes.split(",")):
        runs = [per_knot(N, cfg.knots, r) for r in range(cfg.repeats)]
        start = statistics.median(r[0] for r in runs)
        knot = statistics.median(r[1] for r in runs)
        ratio = "" if prev is None else f"{knot / prev:.2f}"
        print(f"{N}\t{start:.2f}\t{knot * 1e3:.1f}\t{ratio}")
        prev = knot


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in Config.__dataclass_fields__.items():
        ap.add_argument(f"--{f}", type=type(v.default), default=v.default)
    main(Config(**vars(ap.parse_args())))
