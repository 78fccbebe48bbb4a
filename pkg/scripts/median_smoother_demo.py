"""Median smoother (L1 residuals) on a series with outliers: output-side path."""
import argparse
from dataclasses import dataclass

import numpy as np

from l1path import check_path, median_smoother_model, path_ffbdd


@dataclass
class Config:
    n: int = 150
    outliers: int = 8
    q0: float = 1e-3
    seed: int = 1


def main(cfg: Config):
    rng = np.random.default_rng(cfg.seed)
    t = np.linspace(0, 3 * np.pi, cfg.n)
    y = np.sin(t) + 0.1 * rng.normal(size=cfg.n)
    idx = rng.choice(cfg.n, cfg.outliers, replace=False)
    y[idx] += rng.choice([-4.0, 4.0], cfg.outliers)
    m = median_smoother_model(y, cfg.q0)
    P = path_ffbdd(m)
    print(f"N={cfg.n}  knots={P.n_intervals - 1}  sigma2_max={P.sigma2_max:.4g}")
    for s2 in np.geomspace(max(P.knots[1], 1e-6), P.sigma2_max, 6):
        r = P.evaluate(s2) - y
        print(f"  sigma2={s2:10.4g}  interpolated points={int(np.sum(np.abs(r) < 1e-9)):4d}"
              f"  max |residual| at outliers={np.abs(r[idx]).max():.3f}")
    print("\n".join(check_path(P, m).lines()))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in Config.__dataclass_fields__.items():
        ap.add_argument(f"--{f}", type=type(v.default), default=v.default)
    main(Config(**vars(ap.parse_args())))
