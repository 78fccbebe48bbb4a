"""Self-validation of a computed path against its model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import kkt_residual_input, kkt_residual_output
from .path import RegPath, tau_knot
from .plcost import locate
from .ssm import INPUT, StateSpaceModel

TAU_AFFINE = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        s = f"{tag} {self.name}: worst {self.worst:.3g} (tol {self.tol:.3g})"
        return s + (f" [{self.detail}]" if self.detail else "")


@dataclass
class CheckReport:
    results: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name) -> CheckResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def lines(self) -> list:
        return [r.line() for r in self.results]


def sample_points(path: RegPath) -> np.ndarray:
    """Midpoint of every finite interval plus one point inside the last interval."""
    k = path.knots
    mids = 0.5 * (k[:-1] + k[1:])
    last = 2.0 * k[-1] + 1.0
    return np.append(mids, last)


def _knot_order(path: RegPath) -> CheckResult:
    k = path.knots
    bad = []
    if k.size == 0 or k[0] != 0.0:
        bad.append("first knot is not 0")
    gaps = np.diff(k)
    if gaps.size and gaps.min() <= 0:
        bad.append(f"non-increasing at interval {int(np.argmin(gaps))}")
    if not np.all(np.isfinite(k)):
        bad.append("non-finite knot")
    for e in path.events:
        if abs(e.new - e.old) != 1:
            bad.append(f"event at {e.sigma2:.6g} jumps {e.old}->{e.new}")
            break
    worst = float(-gaps.min()) if gaps.size and gaps.min() <= 0 else 0.0
    return CheckResult("knot_order", not bad, worst, 0.0, "; ".join(bad))


def _continuity(path: RegPath, names) -> CheckResult:
    worst, where = 0.0, ""
    ok = True
    for name in names:
        for i in range(1, path.n_intervals):
            s2 = float(path.knots[i])
            a = path.evaluate(s2, name, interval=i - 1)
            b = path.evaluate(s2, name, interval=i)
            scale = 1.0 + max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)))
            d = float(np.abs(a - b).max(initial=0.0)) / scale
            if d > worst:
                worst, where = d, f"{name} at knot {i} (sigma2={s2:.6g})"
            if d > tau_knot(s2):
                ok = False
    return CheckResult("continuity", ok, worst, tau_knot(path.sigma2_max), where)


def _affinity(path: RegPath, names) -> CheckResult:
    worst, where = 0.0, ""
    for name in names:
        for i in range(path.n_intervals):
            lo, hi = path.bounds(i)
            if hi == math.inf:
                hi = 2.0 * lo + 1.0
            ts = (lo, 0.5 * (lo + hi), hi)
            v = [path.evaluate(t, name, interval=i) for t in ts]
            scale = 1.0 + max(float(np.abs(x).max(initial=0.0)) for x in v)
            d = float(np.abs(v[0] - 2 * v[1] + v[2]).max(initial=0.0)) / scale
            if d > worst:
                worst, where = d, f"{name} interval {i}"
    return CheckResult("piecewise_affine", worst <= TAU_AFFINE, worst, TAU_AFFINE, where)


def _consistency(path: RegPath, model: StateSpaceModel, pts) -> CheckResult:
    if path.active is None:
        return CheckResult("active_consistency", True, 0.0, 0.0, "no active sets stored")
    costs = model.shifted_costs()
    bad = 0
    first = ""
    for i, t in enumerate(pts):
        est = path.evaluate(t, interval=i)
        for n, (c, z) in enumerate(zip(costs, est)):
            j = locate(c, z, tol=1e-9 * (1.0 + abs(z)))
            if j != path.active[i, n]:
                bad += 1
                first = first or f"interval {i} coordinate {n}: {j} != {path.active[i, n]}"
    return CheckResult("active_consistency", bad == 0, float(bad), 0.0, first)


def _kkt(path: RegPath, model: StateSpaceModel, pts, tol, max_samples) -> CheckResult:
    idx = np.arange(pts.size)
    if max_samples is not None and pts.size > max_samples:
        idx = np.unique(np.linspace(0, pts.size - 1, max_samples).astype(int))
    worst, where = 0.0, ""
    for i in idx:
        t = float(pts[i])
        if t <= 0:
            continue
        if model.side == INPUT:
            r = kkt_residual_input(model, t, path.evaluate(t, interval=i))
        else:
            x0 = path.evaluate(t, "x0_hat", interval=i) if "x0_hat" in path.extras else None
            r = kkt_residual_output(model, t, path.evaluate(t, "u_hat", interval=i), x0)
        if r > worst:
            worst, where = r, f"sigma2={t:.6g}"
    return CheckResult("kkt", worst <= tol, worst, tol, where)


def check_path(path: RegPath, model: StateSpaceModel, kkt_tol: float = 1e-6,
               max_kkt_samples: int | None = 200) -> CheckReport:
    """Run every path criterion; the report lists one result per criterion."""
    if path.side != model.side:
        raise ValueError(f"path is {path.side}-regularized but the model is {model.side}")
    if path.c1.shape[1] != model.N:
        raise ValueError(f"path has {path.c1.shape[1]} coordinates, model has {model.N}")
    names = [path.primary] + sorted(path.extras)
    pts = sample_points(path)
    return CheckReport([
        _knot_order(path),
        _continuity(path, names),
        _affinity(path, names),
        _consistency(path, model, pts),
        _kkt(path, model, pts, kkt_tol, max_kkt_samples),
    ])
