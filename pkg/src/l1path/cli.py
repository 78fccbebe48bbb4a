"""Command line front end: ingest data, build a preset model, compute, check and sample paths.

    l1path run --preset trend_filter --data y.csv --out path.json [--plot grid.tsv]
    l1path check --path path.json --preset trend_filter --data y.csv
    l1path eval --path path.json --sigma2 0.5
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .checks import check_path
from .path import RegPath, compute_path
from .plcost import make_vapnik
from .ssm import (
    ModelError, StateSpaceModel, cost_from_spec, lasso_model, median_smoother_model,
    model_from_dict, output_model, trend_filter_model,
)

PRESETS = ("trend_filter", "median_smoother", "lasso", "svr", "custom")
SERIES_PRESETS = ("trend_filter", "median_smoother")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CsvError(ValueError):
    pass


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    preset: str
    data_path: Optional[str] = None
    cost_spec: Optional[str] = None
    q0: Optional[float] = None
    epsilon: float = 0.1
    model_path: Optional[str] = None
    output_path: Optional[str] = None
    plot_path: Optional[str] = None
    plot_field: Optional[str] = None
    sigma2_grid: Optional[Sequence[float]] = None

    def validate(self):
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        if self.preset == "custom":
            if not self.model_path:
                raise UsageError("preset custom needs --model")
        elif not self.data_path:
            raise UsageError(f"preset {self.preset} needs --data")
        if self.q0 is not None and not self.q0 > 0:
            raise UsageError("--q0 must be positive")
        if not self.epsilon >= 0:
            raise UsageError("--epsilon must be nonnegative")


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def ingest_csv(path: str, mode: str = "series") -> np.ndarray:
    """Numeric CSV as a vector (``series``: one column) or a 2-d array (``matrix``).

    A first row with no numeric cells is taken as a header.  Blank and
    non-finite cells are rejected with their row and column (1-based, as in
    the file).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if any(c.strip() for c in r)]
    if rows and not any(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise CsvError(f"{path}: no data rows")
    width = len(rows[0][1])
    out = np.empty((len(rows), width))
    for k, (lineno, r) in enumerate(rows):
        if len(r) != width:
            raise CsvError(f"{path}: row {lineno} has {len(r)} columns, expected {width}")
        for j, cell in enumerate(r):
            s = cell.strip()
            if not s:
                raise CsvError(f"{path}: row {lineno}, column {j + 1}: blank cell")
            try:
                v = float(s)
            except ValueError:
                raise CsvError(f"{path}: row {lineno}, column {j + 1}: cannot parse {s!r}") from None
            if not math.isfinite(v):
                raise CsvError(f"{path}: row {lineno}, column {j + 1}: non-finite value {s!r}")
            out[k, j] = v
    if mode == "series":
        if width != 1:
            raise CsvError(f"{path}: expected a single column, found {width}")
        return out[:, 0]
    if mode == "matrix":
        return out
    raise ValueError(f"unknown mode {mode!r}")


def _load_json_arg(text_or_path: str):
    if os.path.exists(text_or_path):
        with open(text_or_path, encoding="utf-8") as fh:
            return json.load(fh)
    try:
        return json.loads(text_or_path)
    except json.JSONDecodeError as e:
        raise UsageError(f"--cost is neither a file nor valid JSON: {e}") from None


def _split_response(X: np.ndarray, path: str):
    if X.shape[1] < 2:
        raise CsvError(f"{path}: matrix mode needs at least one feature column and a response")
    return X[:, :-1], X[:, -1]


def build_model(cfg: RunConfig) -> StateSpaceModel:
    cfg.validate()
    cost = cost_from_spec(_load_json_arg(cfg.cost_spec)) if cfg.cost_spec else None
    p = cfg.preset
    if p == "custom":
        with open(cfg.model_path, encoding="utf-8") as fh:
            d = json.load(fh)
        if cost is not None:
            d["costs"] = cost.to_dict()
        if cfg.data_path:
            d["y_breve"] = ingest_csv(cfg.data_path, "series").tolist()
        return model_from_dict(d)
    if p in SERIES_PRESETS:
        y = ingest_csv(cfg.data_path, "series")
        if p == "trend_filter":
            return trend_filter_model(y, cost)
        return median_smoother_model(y, 1e-3 if cfg.q0 is None else cfg.q0, cost)
    F, y = _split_response(ingest_csv(cfg.data_path, "matrix"), cfg.data_path)
    if p == "lasso":
        return lasso_model(F, y, None if cost is None else [cost] * F.shape[1])
    cost = cost if cost is not None else make_vapnik(-cfg.epsilon, cfg.epsilon)
    return output_model(F, y, [cost] * F.shape[0], 1.0 if cfg.q0 is None else cfg.q0)


def plot_grid(path: RegPath, n: int = 200) -> np.ndarray:
    """Log-spaced sigma^2 from the first positive knot / 10 to 2 sigma2_max, plus every knot."""
    pos = path.knots[path.knots > 0]
    if pos.size:
        lo, hi = pos[0] / 10.0, 2.0 * pos[-1]
    else:
        lo, hi = 1e-3, 1e3
    grid = np.geomspace(lo, hi, n) if hi > lo else np.array([lo])
    return np.unique(np.concatenate([grid, path.knots]))


def write_plot(path: RegPath, out: str, field: Optional[str] = None, grid=None):
    field = field or path.primary
    grid = plot_grid(path) if grid is None else np.asarray(grid, dtype=float)
    rows = np.array([path.evaluate(t, field) for t in grid])
    prefix = field.replace("_hat", "")
    header = ["sigma2"] + [f"{prefix}_{i + 1}" for i in range(rows.shape[1])]
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for t, r in zip(grid, rows):
            fh.write("\t".join(repr(float(v)) for v in (t, *r)) + "\n")


def run(cfg: RunConfig) -> int:
    model = build_model(cfg)
    path = compute_path(model)
    if cfg.output_path:
        with open(cfg.output_path, "w", encoding="utf-8") as fh:
            fh.write(path.to_json())
        # self-validation: what was written must load back unchanged
        with open(cfg.output_path, encoding="utf-8") as fh:
            back = RegPath.from_json(fh.read())
        if not (np.array_equal(back.c1, path.c1) and np.array_equal(back.c0, path.c0)
                and np.array_equal(back.knots, path.knots)):
            print("error: path JSON did not round-trip", file=sys.stderr)
            return EXIT_FAIL
    if cfg.plot_path:
        write_plot(path, cfg.plot_path, cfg.plot_field, cfg.sigma2_grid)
    print(f"knots: {path.n_intervals - 1}")
    print(f"sigma2_max: {path.sigma2_max!r}")
    print(f"s2_max: {2.0 * path.sigma2_max!r}")
    return EXIT_OK


def check(cfg: RunConfig, path_file: str, max_samples: Optional[int] = 200) -> int:
    with open(path_file, encoding="utf-8") as fh:
        path = RegPath.from_json(fh.read())
    model = build_model(cfg)
    report = check_path(path, model, max_kkt_samples=max_samples)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_FAIL


def evaluate(path_file: str, sigma2: float, field: Optional[str] = None) -> int:
    with open(path_file, encoding="utf-8") as fh:
        path = RegPath.from_json(fh.read())
    if sigma2 < 0:
        raise UsageError("--sigma2 must be nonnegative")
    v = path.evaluate(sigma2, field)
    print(" ".join(repr(float(x)) for x in np.atleast_1d(v)))
    return EXIT_OK


def _add_model_args(p):
    p.add_argument("--preset", required=True, help=", ".join(PRESETS))
    p.add_argument("--data", help="CSV: one column (series presets) or features + response")
    p.add_argument("--q0", type=float, help="initial-state weight (median_smoother, svr)")
    p.add_argument("--cost", help="cost JSON text or file, e.g. '{\"type\": \"l1\"}'")
    p.add_argument("--epsilon", type=float, default=0.1, help="svr insensitivity half-width")
    p.add_argument("--model", help="model JSON for the custom preset")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="l1path", description="exact L1-type regularization paths")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="compute a path and write it as JSON")
    _add_model_args(r)
    r.add_argument("--out", required=True, help="output path JSON")
    r.add_argument("--plot", help="TSV of the path sampled on a sigma^2 grid")
    r.add_argument("--plot-field", help="quantity to sample (default: the regularized one)")
    r.add_argument("--sigma2-grid", type=float, nargs="+", help="explicit sampling grid")
    c = sub.add_parser("check", help="validate a path JSON against its model")
    _add_model_args(c)
    c.add_argument("--path", required=True)
    c.add_argument("--max-samples", type=int, default=200, help="KKT evaluations (0: all)")
    e = sub.add_parser("eval", help="print the estimate at one sigma^2")
    e.add_argument("--path", required=True)
    e.add_argument("--sigma2", type=float, required=True)
    e.add_argument("--field", help="u_hat, y_hat, x0_hat, ...")
    return ap


def _config(args) -> RunConfig:
    return RunConfig(preset=args.preset, data_path=args.data, cost_spec=args.cost, q0=args.q0,
                     epsilon=args.epsilon, model_path=args.model,
                     output_path=getattr(args, "out", None), plot_path=getattr(args, "plot", None),
                     plot_field=getattr(args, "plot_field", None),
                     sigma2_grid=getattr(args, "sigma2_grid", None))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            return run(_config(args))
        if args.cmd == "check":
            return check(_config(args), args.path, args.max_samples or None)
        return evaluate(args.path, args.sigma2, args.field)
    except (UsageError, FileNotFoundError, IsADirectoryError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as e:
        print(f"usage error: unknown field {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CsvError, ModelError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as e:  # noqa: BLE001  any computation failure is reported, not raised
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
