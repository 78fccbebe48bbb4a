"""LASSO and epsilon-insensitive regression paths on a sparse linear model.

Compares the path at a few sigma^2 values with scikit-learn's Lasso
(alpha = sigma^2 / L under its 1/(2L) loss scaling).
"""
import argparse
from dataclasses import dataclass

import numpy as np

from l1path import lasso_model, make_vapnik, output_model, path_bffd, path_ffbdd


@dataclass
class Config:
    rows: int = 60
    features: int = 12
    noise: float = 0.3
    epsilon: float = 0.2
    seed: int = 2


def main(cfg: Config):
    rng = np.random.default_rng(cfg.seed)
    X = rng.normal(size=(cfg.rows, cfg.features))
    beta = np.zeros(cfg.features)
    beta[:3] = [2.0, -1.5, 1.0]
    y = X @ beta + cfg.noise * rng.normal(size=cfg.rows)

    P = path_bffd(lasso_model(X, y))
    # walking down from sigma2_max, a feature enters when it leaves the point {0}
    order = [int(e.index) for e in reversed(P.events) if e.new == 1]
    print(f"lasso: {P.n_intervals - 1} knots, entry order: {order[:6]}")
    try:
        from sklearn.linear_model import Lasso
        for s2 in (0.1 * P.sigma2_max, 0.5 * P.sigma2_max):
            sk = Lasso(alpha=s2 / cfg.rows, fit_intercept=False, tol=1e-12, max_iter=100000).fit(X, y)
            print(f"  sigma2={s2:.4g}  max |path - sklearn| = {np.abs(P.evaluate(s2) - sk.coef_).max():.2e}")
    except ImportError:
        pass

    S = path_ffbdd(output_model(X, y, [make_vapnik(-cfg.epsilon, cfg.epsilon)] * cfg.rows))
    print(f"svr: {S.n_intervals - 1} knots, sigma2_max={S.sigma2_max:.4g}")
    for s2 in np.geomspace(S.knots[1], S.sigma2_max, 4):
        w = S.evaluate(s2, "x0_hat")
        inside = np.sum(np.abs(X @ w - y) < cfg.epsilon - 1e-9)
        print(f"  sigma2={s2:.4g}  |w|={np.linalg.norm(w):.3f}  inside tube={inside}/{cfg.rows}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in Config.__dataclass_fields__.items():
        ap.add_argument(f"--{f}", type=type(v.default), default=v.default)
    main(Config(**vars(ap.parse_args())))
