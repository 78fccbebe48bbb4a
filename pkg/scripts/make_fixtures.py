"""Regenerate the small CSV / JSON fixtures under tests/fixtures."""
import json
import os

import numpy as np

from l1path.ssm import model_to_dict, trend_filter_model

HERE = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")


def main(out=HERE):
    rng = np.random.default_rng(7)
    os.makedirs(out, exist_ok=True)
    t = np.arange(60)
    y = np.where(t < 25, 0.1 * t, 2.5 - 0.05 * (t - 25)) + 0.2 * rng.normal(size=60)
    y[[10, 40]] += 3.0  # outliers for the median smoother
    np.savetxt(os.path.join(out, "series.csv"), y, header="y", comments="", fmt="%.10g")
    X = rng.normal(size=(40, 8))
    resp = X @ np.array([2.0, 0, 0, -1.5, 0, 0, 0.5, 0]) + 0.3 * rng.normal(size=40)
    np.savetxt(os.path.join(out, "regression.csv"), np.c_[X, resp], delimiter=",", fmt="%.10g",
               header=",".join([f"x{i}" for i in range(1, 9)] + ["y"]), comments="")
    m = trend_filter_model(np.zeros(60))
    with open(os.path.join(out, "trend_model.json"), "w") as fh:
        json.dump(model_to_dict(m), fh)


if __name__ == "__main__":
    main()
