"""Trend filter on a noisy piecewise-linear series: knots, sparsity and a plot of the fits."""
import argparse
from dataclasses import dataclass

import numpy as np

from l1path import check_path, path_bffd, trend_filter_model


@dataclass
class Config:
    n: int = 200
    noise: float = 0.5
    seed: int = 0
    plot: str = ""  # png path; empty to skip


def series(cfg: Config) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(cfg.n)
    trend = np.interp(t, [0, cfg.n // 3, 2 * cfg.n // 3, cfg.n - 1], [0, 10, 4, 8])
    return trend + cfg.noise * rng.normal(size=cfg.n)


def main(cfg: Config):
    y = series(cfg)
    m = trend_filter_model(y)
    P = path_bffd(m)
    print(f"N={cfg.n}  knots={P.n_intervals - 1}  sigma2_max={P.sigma2_max:.4g}")
    for s2 in np.geomspace(P.knots[1], P.sigma2_max, 6):
        u = P.evaluate(s2)
        print(f"  sigma2={s2:10.4g}  slope changes={int(np.sum(np.abs(u) > 1e-10)):4d}")
    print("\n".join(check_path(P, m).lines()))
    if cfg.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot(y, ".", ms=3, color="0.6")
        for s2 in np.geomspace(P.knots[1], P.sigma2_max, 4):
            ax.plot(P.evaluate(s2, "y_hat"), label=f"sigma2={s2:.3g}")
        ax.legend()
        fig.savefig(cfg.plot, dpi=120, bbox_inches="tight")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in Config.__dataclass_fields__.items():
        ap.add_argument(f"--{f}", type=type(v.default), default=v.default)
    main(Config(**vars(ap.parse_args())))
