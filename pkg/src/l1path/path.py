"""Exact regularization paths over sigma^2 (s^2 = 2 sigma^2).

Between knots every coordinate keeps its active cost segment, the
parametric pass gives all estimates as affine functions of sigma^2, and
each coordinate stays valid until one of its (affine) segment conditions
fails.  The smallest such sigma^2 is the next knot, where exactly one
coordinate moves to a neighbouring segment.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .gaussmp import MessageError
from .parametric import ParamAffine, param_bffd, param_ffbdd
from .plcost import Segment, SegmentedCost, SegmentGaussParams, conditions, locate
from .solvers import SolverError, bffd, ffbdd
from .ssm import INPUT, OUTPUT, StateSpaceModel

BOOTSTRAP_SIGMA2 = 1.0
TOL_VIOLATION = 1e-9  # relative slack before a failed condition is an error
TOL_BINDING = 1e-11  # relative size under which a condition counts as binding
TOL_KNOT_REL = 1e-9  # exits this close (relative in sigma^2) may coincide


class PathError(RuntimeError):
    pass


class InfeasibleSegmentError(PathError):
    """The active segment's conditions hold for no sigma^2 >= the previous knot."""


def tau_knot(s2: float) -> float:
    return 1e-9 * (1.0 + s2)


@dataclass
class Event:
    sigma2: float
    index: int
    old: int
    new: int

    def to_dict(self):
        return {"sigma2": self.sigma2, "index": self.index, "old": self.old, "new": self.new}


@dataclass
class RegPath:
    """Piecewise-affine estimates; interval i is [knots[i], knots[i+1]) with a final +inf."""

    side: str
    knots: np.ndarray
    c1: np.ndarray  # (n_intervals, N)
    c0: np.ndarray
    events: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)  # name -> (c1, c0) with leading interval axis
    active: Optional[np.ndarray] = None  # (n_intervals, N) segment indices
    start: str = "least_squares"

    @property
    def n_intervals(self) -> int:
        return self.knots.size

    @property
    def sigma2_max(self) -> float:
        """Largest finite knot (0 when the path is a single piece)."""
        return float(self.knots[-1])

    @property
    def primary(self) -> str:
        return "u_hat" if self.side == INPUT else "y_hat"

    def interval_of(self, sigma2: float) -> int:
        if sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        return max(int(np.searchsorted(self.knots, sigma2, side="right")) - 1, 0)

    def coeffs(self, name: Optional[str] = None):
        if name is None or name == self.primary:
            return self.c1, self.c0
        return self.extras[name]

    def evaluate(self, sigma2: float, name: Optional[str] = None, interval: Optional[int] = None):
        c1, c0 = self.coeffs(name)
        i = self.interval_of(sigma2) if interval is None else interval
        return sigma2 * c1[i] + c0[i]

    def piece(self, i: int, name: Optional[str] = None) -> ParamAffine:
        c1, c0 = self.coeffs(name)
        return ParamAffine("sigma2", c1[i], c0[i])

    def bounds(self, i: int) -> tuple:
        hi = self.knots[i + 1] if i + 1 < self.n_intervals else math.inf
        return float(self.knots[i]), float(hi)

    # serialization: floats go through repr, which round-trips exactly

    def to_dict(self) -> dict:
        def pairs(c1, c0):
            return [np.stack([c1[i], c0[i]], axis=-1).tolist() for i in range(self.n_intervals)]

        prim = pairs(self.c1, self.c0)
        pieces = []
        for i in range(self.n_intervals):
            lo, hi = self.bounds(i)
            p = {"interval": [lo, "inf" if hi == math.inf else hi], "coeffs": prim[i]}
            if self.active is not None:
                p["active"] = self.active[i].tolist()
            pieces.append(p)
        knots = self.knots.tolist() + ["inf"]
        return {
            "side": self.side,
            "start": self.start,
            "knots": knots,
            "s2_knots": [2.0 * k for k in self.knots.tolist()] + ["inf"],
            "sigma2_max": self.sigma2_max,
            "pieces": pieces,
            "extras": {k: pairs(*v) for k, v in self.extras.items()},
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegPath":
        knots = np.array([k for k in d["knots"] if k != "inf"], dtype=float)
        coeffs = np.array([p["coeffs"] for p in d["pieces"]], dtype=float)
        if coeffs.ndim == 2:  # zero coordinates
            coeffs = coeffs.reshape(len(d["pieces"]), 0, 2)
        active = None
        if d["pieces"] and "active" in d["pieces"][0]:
            active = np.array([p["active"] for p in d["pieces"]], dtype=int)
        extras = {}
        for k, v in d.get("extras", {}).items():
            a = np.array(v, dtype=float)
            extras[k] = (a[..., 0], a[..., 1])
        events = [Event(float(e["sigma2"]), int(e["index"]), int(e["old"]), int(e["new"]))
                  for e in d.get("events", [])]
        return cls(d["side"], knots, coeffs[..., 0], coeffs[..., 1], events, extras, active,
                   d.get("start", "least_squares"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "RegPath":
        return cls.from_dict(json.loads(s))


def eval_path(path: RegPath, sigma2: float, name: Optional[str] = None) -> np.ndarray:
    """Estimate at sigma2 from the stored coefficients of its interval."""
    return path.evaluate(sigma2, name)


# ---------------------------------------------------------------- exit times

def _affine_ineqs(seg: Segment, mb: ParamAffine, Vb: ParamAffine):
    out = []
    for ineq in conditions(seg):
        p = ineq.a_m * float(mb.c1) + ineq.a_V * float(Vb.c1)
        q = ineq.a_m * float(mb.c0) + ineq.a_V * float(Vb.c0) + ineq.a_0
        out.append((p, q, ineq.side))
    return out


def _feasible_interval(ineqs, prev, tol=0.0):
    """[lo, hi] of t >= prev with p t + q >= 0 for all (p, q, side); None if empty.

    Also returns the side of the inequality that sets hi.
    """
    lo, hi, side = prev, math.inf, 0
    for p, q, s in ineqs:
        if p > 0:
            lo = max(lo, -q / p)
        elif p < 0:
            r = -q / p
            if r < hi:
                hi, side = r, s
        elif q < -tol:
            return None
    if lo > hi + tol:
        return None
    return lo, hi, side


def exit_sigma2(seg: Segment, mb: ParamAffine, Vb: ParamAffine, prev_knot: float) -> float:
    """sup of sigma^2 >= prev_knot at which the estimate decided on ``seg`` stays inside it.

    ``mb`` and ``Vb`` are the opposite message on the coordinate as affine
    functions of sigma^2.  Raises InfeasibleSegmentError when no sigma^2
    qualifies.
    """
    if not Vb.is_linear:
        raise ValueError("Vb must be linear in sigma^2")
    got = _feasible_interval(_affine_ineqs(seg, mb, Vb), prev_knot)
    if got is None:
        raise InfeasibleSegmentError(f"segment {seg.index} is never active after {prev_knot}")
    return got[1]


def next_segment(cost: SegmentedCost, current: Segment, mb: ParamAffine, Vb: ParamAffine,
                 knot: float) -> Segment:
    """Neighbour entered when ``current`` is left at ``knot``."""
    binding = []
    for p, q, s in _affine_ineqs(current, mb, Vb):
        if p < 0 and abs(p * knot + q) <= tau_knot(knot) * (1.0 + abs(q)):
            binding.append(s)
    if not binding:
        raise PathError(f"no condition of segment {current.index} binds at {knot}")
    if len(set(binding)) > 1:
        raise PathError(f"both boundaries of segment {current.index} bind at {knot}")
    return cost.segment(current.index + binding[0])


# ---------------------------------------------------------------- engine

class _Conditions:
    """Per-coordinate inequality coefficients (two slots: left and right boundary)."""

    def __init__(self, costs, active):
        self.costs = costs
        N = len(costs)
        self.am = np.zeros((N, 2))
        self.aV = np.zeros((N, 2))
        self.a0 = np.zeros((N, 2))
        self.present = np.zeros((N, 2), dtype=bool)
        for n in range(N):
            self.set(n, active[n])

    def set(self, n, j):
        self.am[n] = self.aV[n] = self.a0[n] = 0.0
        self.present[n] = False
        for ineq in conditions(self.costs[n].segment(j)):
            k = 0 if ineq.side < 0 else 1
            self.am[n, k], self.aV[n, k], self.a0[n, k] = ineq.a_m, ineq.a_V, ineq.a_0
            self.present[n, k] = True


@dataclass
class _Affine:
    """p t + q >= 0 per (coordinate, side) with roundoff scales."""

    p: np.ndarray
    q: np.ndarray
    p_scale: np.ndarray
    q_scale: np.ndarray


class _Engine:
    def __init__(self, model: StateSpaceModel, max_iter: Optional[int] = None):
        self.model = model
        self.costs = model.shifted_costs()
        self.N = model.N
        self.max_iter = max_iter if max_iter is not None else 10 * max(model.total_segments, 1)
        self.free_value = None
        self.start = "least_squares"

    # subclasses: initial_active(), run_pass(active) -> (primary, extras, _Affine)

    def run(self) -> Iterator:
        costs = self.costs
        active = np.array(self.initial_active(), dtype=int)
        cond = _Conditions(costs, active)
        knots, c1s, c0s, acts, events = [], [], [], [], []
        self.events = events
        extras = {}
        prev = 0.0
        repairs_allowed = True
        for it in range(self.max_iter):
            (u1, u0), ex, aff = self.run_pass(active, cond)
            P, Q = aff.p, aff.q
            pres = cond.present
            scale_prev = 1.0 + aff.p_scale * prev + aff.q_scale
            tol_f = TOL_VIOLATION * scale_prev
            f_prev = P * prev + Q
            eps_p = 1e-12 * aff.p_scale
            viol = pres & (f_prev < -tol_f)
            rows = np.arange(self.N)
            if viol.any():
                n, k = np.argwhere(viol)[0]
                if not repairs_allowed:
                    raise PathError(
                        f"coordinate {n} left its segment {active[n]} before sigma2={prev:.6g} "
                        f"(condition value {f_prev[n, k]:.3g}); iteration {it}")
                exit_n = np.full(self.N, math.inf)
                exit_n[n] = prev
                k_arg = np.zeros(self.N, dtype=int)
                k_arg[n] = k
            else:
                falling = pres & (P < -eps_p)
                with np.errstate(divide="ignore", invalid="ignore"):
                    roots = np.where(falling, -Q / np.where(falling, P, 1.0), math.inf)
                roots = np.maximum(roots, prev)
                k_arg = np.argmin(roots, axis=1)
                exit_n = roots[rows, k_arg]
            side_n = np.where(k_arg == 0, -1, 1)
            knot = float(np.min(exit_n)) if self.N else math.inf
            # binding is judged on condition values: the sigma^2 scale is model dependent
            if knot < math.inf:
                Pk, Qk = P[rows, k_arg], Q[rows, k_arg]
                f_knot = Pk * knot + Qk
                tol_knot = TOL_BINDING * (1.0 + aff.p_scale[rows, k_arg] * knot
                                          + aff.q_scale[rows, k_arg])
                close = exit_n <= knot * (1.0 + TOL_KNOT_REL)
                ties = np.flatnonzero(close & (f_knot <= tol_knot))
                if ties.size == 0:
                    ties = np.array([int(np.argmin(exit_n))])
                n0 = int(ties[0])
                kn = k_arg[n0]
                zero_length = knot == prev or (
                    knot <= prev * (1.0 + TOL_KNOT_REL)
                    and f_prev[n0, kn] <= TOL_BINDING * scale_prev[n0, kn])
            else:
                zero_length = False
            if not zero_length:
                repairs_allowed = False
                knots.append(prev)
                c1s.append(u1)
                c0s.append(u0)
                acts.append(active.copy())
                for name, pair in ex.items():
                    extras.setdefault(name, []).append(pair)
                if knot == math.inf:
                    break
            else:
                knot = prev
            n = int(ties[0])
            old = int(active[n])
            new = old + int(side_n[n])
            if not 0 <= new < costs[n].n_segments:
                raise PathError(f"coordinate {n} would leave segment range at sigma2={knot:.6g}")
            active[n] = new
            cond.set(n, new)
            events.append(Event(knot, n, old, new))
            prev = knot
            yield it
        else:
            raise PathError(f"iteration cap {self.max_iter} reached at sigma2={prev:.6g} "
                            f"after {len(events)} events")
        ex_out = {k: (np.array([a for a, _ in v]), np.array([b for _, b in v]))
                  for k, v in extras.items()}
        self.result = RegPath(self.model.side, np.array(knots), np.array(c1s), np.array(c0s),
                              events, ex_out, np.array(acts), self.start)


class _BffdEngine(_Engine):
    def initial_active(self):
        model = self.model
        N = self.N
        flat = [SegmentGaussParams.flat(0.0)] * N
        try:
            out = bffd(model, BOOTSTRAP_SIGMA2, flat)
            ok = out.identifiable
        except (SolverError, MessageError):
            ok = False
        if ok:
            return [locate(c, u) for c, u in zip(self.costs, out.u_hat)]
        self.start = "min_cost"
        u = min_cost_least_squares(model)
        self.free_value = u
        scale = 1.0 + float(np.max(np.abs(u), initial=0.0))
        return [locate(c, v, tol=1e-8 * scale) for c, v in zip(self.costs, u)]

    def run_pass(self, active, cond):
        segs = [c.segment(j) for c, j in zip(self.costs, active)]
        pb = param_bffd(self.model, segs, self.free_value)
        am, aV, a0 = cond.am, cond.aV, cond.a0
        w1 = pb.w1[:, None]
        # canonical form of the backward message: W = w1 / s2, xi = xi1 / s2 + xi0
        P = am * pb.xi0[:, None] + aV
        Q = am * pb.xi1[:, None] + a0 * w1
        mag = np.abs(pb.xi0) + np.abs(pb.u1) * np.abs(pb.w1) + 1.0
        p_scale = np.abs(am) * mag[:, None] + np.abs(aV)
        q_scale = (np.abs(am) * (np.abs(pb.xi1) + np.abs(pb.u0) * np.abs(pb.w1))[:, None]
                   + np.abs(a0) * w1)
        x1, x0 = pb.x1, pb.x0
        y = pb.y_hat
        extras = {"y_hat": (y.c1, y.c0), "x0_hat": (x1[0], x0[0]), "xN_hat": (x1[-1], x0[-1])}
        return (pb.u1, pb.u0), extras, _Affine(P, Q, p_scale, q_scale)


class _FfbddEngine(_Engine):
    def initial_active(self):
        flat = [SegmentGaussParams.flat(0.0)] * self.N
        out = ffbdd(self.model, BOOTSTRAP_SIGMA2, flat)
        # flat observations leave the prior untouched: unconditioned output variances
        smax = max((float(np.max(np.abs(c.slopes))) for c in self.costs), default=0.0)
        self.v_prior = np.asarray(out.Vf_Y, dtype=float) / BOOTSTRAP_SIGMA2
        self.m_scale = self.v_prior * (1.0 + smax)
        return [locate(c, y) for c, y in zip(self.costs, out.y_hat)]

    def run_pass(self, active, cond):
        segs = [c.segment(j) for c, j in zip(self.costs, active)]
        pf = param_ffbdd(self.model, segs)
        am, aV, a0 = cond.am, cond.aV, cond.a0
        P = am * pf.mf1[:, None] + aV * pf.v1[:, None]
        Q = am * pf.mf0[:, None] + a0
        p_scale = (np.abs(am) * (np.abs(pf.mf1) + np.abs(pf.y1) + self.m_scale)[:, None]
                   + np.abs(aV) * (np.abs(pf.v1) + self.v_prior)[:, None])
        q_scale = np.abs(am) * (np.abs(pf.mf0) + np.abs(pf.y0))[:, None] + np.abs(a0)
        extras = {"u_hat": (pf.u1, pf.u0), "x0_hat": (pf.x0_1, pf.x0_0)}
        return (pf.y1, pf.y0), extras, _Affine(P, Q, p_scale, q_scale)


def iter_path_bffd(model: StateSpaceModel, max_iter: Optional[int] = None):
    """Generator over path iterations; the finished RegPath is in ``.result`` of the engine."""
    if model.side != INPUT:
        raise ValueError("path_bffd needs an input-regularized model")
    eng = _BffdEngine(model, max_iter)
    return eng, eng.run()


def iter_path_ffbdd(model: StateSpaceModel, max_iter: Optional[int] = None):
    if model.side != OUTPUT:
        raise ValueError("path_ffbdd needs an output-regularized model")
    eng = _FfbddEngine(model, max_iter)
    return eng, eng.run()


def path_bffd(model: StateSpaceModel, max_iter: Optional[int] = None) -> RegPath:
    eng, it = iter_path_bffd(model, max_iter)
    for _ in it:
        pass
    return eng.result


def path_ffbdd(model: StateSpaceModel, max_iter: Optional[int] = None) -> RegPath:
    eng, it = iter_path_ffbdd(model, max_iter)
    for _ in it:
        pass
    return eng.result


def compute_path(model: StateSpaceModel, max_iter: Optional[int] = None) -> RegPath:
    return path_bffd(model, max_iter) if model.side == INPUT else path_ffbdd(model, max_iter)


# ---------------------------------------------------------------- start point

def min_cost_least_squares(model: StateSpaceModel) -> np.ndarray:
    """Inputs minimizing sum kappa_n(u_n) among all least-squares fits.

    This is the sigma^2 -> 0+ limit of the input-regularized estimate.  The
    least-squares optimality conditions are written with costates so the
    linear program stays sparse: x_n = A x_{n-1} + b_n u_n,
    p_n = c_n (c_n^T x_n - yb_n) + A^T p_{n+1} (+ QN (x_N - xNb) at n = N),
    b_n^T p_n = 0, and Q0 (x0 - x0b) + A^T p_1 = 0 for a free x0.
    """
    N, M = model.N, model.M
    A = model.A
    I = np.eye(M)
    nx, nu, npv = (N + 1) * M, N, N * M
    ix = lambda n: n * M  # noqa: E731
    iu = nx
    ip = lambda n: nx + nu + (n - 1) * M  # noqa: E731  (n = 1..N)
    it = nx + nu + npv
    nv = it + N

    rows, cols, vals, rhs = [], [], [], []
    nrow = 0

    def row(entries, b):
        nonlocal nrow
        for start, mat in entries:
            r, c = np.nonzero(mat)
            rows.append(r + nrow)
            cols.append(c + start)
            vals.append(mat[r, c])
        b = np.atleast_1d(np.asarray(b, dtype=float))
        rhs.append(b)
        nrow += b.size

    for n in range(1, N + 1):
        row([(ix(n), I), (ix(n - 1), -A), (iu + n - 1, -model.b[n - 1][:, None])], np.zeros(M))
    if model.fixed_initial_state:
        row([(ix(0), I)], model.x0_breve)
    else:
        row([(ix(0), model.Q0), (ip(1), A.T)], model.Q0 @ model.x0_breve)
    for n in range(1, N + 1):
        c = model.c[n - 1]
        cc = np.outer(c, c)
        b = -c * model.y_breve[n - 1]
        if n < N:
            ent = [(ip(n), I), (ip(n + 1), -A.T), (ix(n), -cc)]
        else:
            ent = [(ip(n), I), (ix(n), -(cc + model.QN))]
            b = b - model.QN @ model.xN_breve
        row(ent, b)
    for n in range(1, N + 1):
        row([(ip(n), model.b[n - 1][None, :])], 0.0)
    A_eq = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(nrow, nv))
    b_eq = np.concatenate(rhs)

    ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []
    r = 0
    for n, cost in enumerate(model.costs):
        bp, sl = cost.breakpoints, cost.slopes
        for k, s in enumerate(sl):
            anchor = bp[min(k, bp.size - 1)] if bp.size else 0.0
            beta = float(cost.eval(anchor)) - s * anchor
            ub_rows += [r, r]
            ub_cols += [iu + n, it + n]
            ub_vals += [s, -1.0]
            b_ub.append(-beta)
            r += 1
    A_ub = sp.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(r, nv))
    cvec = np.zeros(nv)
    cvec[it:] = 1.0
    res = linprog(cvec, A_ub=A_ub, b_ub=np.array(b_ub), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(None, None)] * nv, method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise PathError(f"start-point linear program failed: {res.message}")
    return res.x[iu:iu + nu]
