"""Reference solvers and optimality checks for a fixed sigma^2.

Everything here works on the dense stacked form of a model: the free
variables z = (x0 if not fixed, u_1..u_N) enter the quadratic part as
||R z - r||^2 and the n-th penalty as kappa_n(g_n^T z + h_n).  None of
the message-passing code is reused, so agreement with it is evidence.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg as sla
from scipy.optimize import lsq_linear

from .ssm import INPUT, OUTPUT, StateSpaceModel, simulate


@dataclass
class OptReport:
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    x0: Optional[np.ndarray] = None


def _psd_sqrt(Q):
    lam, U = np.linalg.eigh(0.5 * (Q + Q.T))
    return (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.T


@dataclass
class DenseProblem:
    R: np.ndarray
    r: np.ndarray
    G: np.ndarray  # (N, nz)
    h: np.ndarray
    costs: list  # unshifted: kappa_n(G z + h)
    nx0: int  # number of leading x0 variables in z

    @property
    def nz(self):
        return self.R.shape[1]

    def split(self, z):
        return z[:self.nx0], z[self.nx0:]

    def quad(self, z):
        e = self.R @ z - self.r
        return float(e @ e)

    def penalty(self, z):
        v = self.G @ z + self.h
        return float(sum(k.eval(x) for k, x in zip(self.costs, v)))

    def objective(self, z, sigma2):
        return self.quad(z) + 2.0 * sigma2 * self.penalty(z)


def dense_problem(model: StateSpaceModel) -> DenseProblem:
    N, M = model.N, model.M
    nx0 = 0 if model.fixed_initial_state else M
    nz = nx0 + N
    T = np.zeros((M, nz))  # x_n = T z + t
    t = model.x0_breve.copy() if model.fixed_initial_state else np.zeros(M)
    if nx0:
        T[:, :M] = np.eye(M)
    rows, rhs = [], []
    if nx0:
        S0 = _psd_sqrt(model.Q0)
        rows.append(S0 @ T)
        rhs.append(S0 @ model.x0_breve)
    G = np.zeros((N, nz))
    h = np.zeros(N)
    for n in range(N):
        T = model.A @ T
        t = model.A @ t
        T[:, nx0 + n] += model.b[n]
        yrow = model.c[n] @ T
        yoff = float(model.c[n] @ t)
        if model.side == INPUT:
            rows.append(yrow[None, :])
            rhs.append(np.array([model.y_breve[n] - yoff]))
            G[n, nx0 + n] = 1.0
        else:
            e = np.zeros((1, nz))
            e[0, nx0 + n] = 1.0
            rows.append(e)
            rhs.append(np.zeros(1))
            G[n] = yrow
            h[n] = yoff - model.y_breve[n]
    SN = _psd_sqrt(model.QN)
    rows.append(SN @ T)
    rhs.append(SN @ (model.xN_breve - t))
    return DenseProblem(np.vstack(rows), np.concatenate(rhs), G, h, list(model.costs), nx0)


def objective(model: StateSpaceModel, sigma2: float, u, x0=None) -> float:
    """Objective value computed by direct simulation of the recursion."""
    u = np.asarray(u, dtype=float)
    x0 = model.x0_breve if (x0 is None or model.fixed_initial_state) else np.asarray(x0, float)
    x, y = simulate(model, x0, u)
    d0 = x[0] - model.x0_breve
    dN = x[-1] - model.xN_breve
    val = 0.0 if model.fixed_initial_state else float(d0 @ model.Q0 @ d0)
    val += float(dN @ model.QN @ dN)
    if model.side == INPUT:
        pen = sum(k.eval(v) for k, v in zip(model.costs, u))
        val += float(np.sum((y - model.y_breve) ** 2))
    else:
        pen = sum(k.eval(v) for k, v in zip(model.costs, y - model.y_breve))
        val += float(u @ u)
    return val + 2.0 * sigma2 * float(pen)


# scalar proximal map of a piecewise-linear convex function

def _padded(bps, slopes):
    P = max((b.size for b in bps), default=0)
    a = np.full((len(bps), P), np.inf)
    s = np.empty((len(bps), P + 1))
    for i, (b, sl) in enumerate(zip(bps, slopes)):
        a[i, :b.size] = b
        s[i, :b.size + 1] = sl
        s[i, b.size + 1:] = sl[-1]
    return a, s


def _prox(v, t, a, s):
    """Row-wise argmin_x (x - v)^2 / 2 + t * f(x) and the segment index of x.

    f has breakpoints a (padded with +inf) and slopes s; infinite outer
    slopes encode a box constraint.
    """
    with np.errstate(invalid="ignore"):
        lo = np.where(np.isinf(a), np.inf, a + t * s[:, :-1])
        hi = np.where(np.isinf(a), np.inf, a + t * s[:, 1:])
    thr = np.empty((a.shape[0], 2 * a.shape[1]))
    thr[:, 0::2] = lo
    thr[:, 1::2] = hi
    seg = np.sum(v[:, None] > thr, axis=1)
    k = seg // 2
    rows = np.arange(v.size)
    x = v.copy()
    line = seg % 2 == 0
    x[line] = v[line] - t * s[rows[line], k[line]]
    pt = ~line
    x[pt] = a[rows[pt], k[pt]]
    return x, seg


def _segment_of(cost, v, tol=1e-9):
    bp = cost.breakpoints
    if bp.size:
        j = int(np.argmin(np.abs(bp - v)))
        if abs(bp[j] - v) <= tol * (1.0 + abs(bp[j])):
            return 2 * j + 1
    return 2 * int(np.searchsorted(bp, v))


def _kkt(prob: DenseProblem, z, sigma2, tol=1e-9) -> float:
    """Smallest infinity-norm of grad(quad) + w sum g_n d_n over subgradients d_n."""
    w = 2.0 * sigma2
    grad = 2.0 * prob.R.T @ (prob.R @ z - prob.r)
    v = prob.G @ z + prob.h
    free_cols, lb, ub = [], [], []
    for n, cost in enumerate(prob.costs):
        j = _segment_of(cost, v[n], tol)
        if j % 2 == 0:
            grad = grad + w * cost.slopes[j // 2] * prob.G[n]
        else:
            free_cols.append(n)
            lb.append(w * cost.slopes[j // 2])
            ub.append(w * cost.slopes[j // 2 + 1])
    if not free_cols:
        return float(np.max(np.abs(grad), initial=0.0))
    Gp = prob.G[free_cols].T
    res = lsq_linear(Gp, -grad, bounds=(np.array(lb), np.array(ub)), method="bvls",
                     tol=1e-14, lsmr_tol=None)
    return float(np.max(np.abs(grad + Gp @ res.x), initial=0.0))


def _polish(prob: DenseProblem, assign, sigma2):
    """Minimizer of the quadratic with every penalty replaced by its assigned segment."""
    w = 2.0 * sigma2
    P = 2.0 * prob.R.T @ prob.R
    q = 2.0 * prob.R.T @ prob.r
    pts = []
    for n, (cost, j) in enumerate(zip(prob.costs, assign)):
        if j % 2 == 0:
            q = q - w * cost.slopes[j // 2] * prob.G[n]
        else:
            pts.append((n, cost.breakpoints[j // 2]))
    k = len(pts)
    K = np.zeros((prob.nz + k, prob.nz + k))
    K[:prob.nz, :prob.nz] = P
    rhs = np.concatenate([q, np.zeros(k)])
    for i, (n, a) in enumerate(pts):
        K[prob.nz + i, :prob.nz] = prob.G[n]
        K[:prob.nz, prob.nz + i] = prob.G[n]
        rhs[prob.nz + i] = a - prob.h[n]
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:prob.nz]


def brute_force(prob: DenseProblem, sigma2: float, limit: int = 200_000):
    """Best objective over all segment assignments (tiny instances only)."""
    sizes = [c.n_segments for c in prob.costs]
    if np.prod(sizes, dtype=float) > limit:
        raise ValueError(f"{np.prod(sizes, dtype=float):.0f} assignments exceed the limit {limit}")
    best, best_z = np.inf, None
    for assign in itertools.product(*[range(s) for s in sizes]):
        z = _polish(prob, assign, sigma2)
        val = prob.objective(z, sigma2)
        if val < best:
            best, best_z = val, z
    return best_z, best


def _fista(grad, prox, x0, L, max_iter, check, check_every=100):
    x = x0.copy()
    y = x.copy()
    tk = 1.0
    seg = None
    for it in range(1, max_iter + 1):
        x_new, seg_new = prox(y - grad(y) / L)
        if np.dot(y - x_new, x_new - x) > 0:  # adaptive restart
            tk = 1.0
            y = x.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            y = x_new + ((tk - 1.0) / t_new) * (x_new - x)
            x, seg, tk = x_new, seg_new, t_new
        if it % check_every == 0 and seg is not None:
            done = check(x, seg)
            if done is not None:
                return done, it
    return None, max_iter


def _solve(prob: DenseProblem, sigma2: float, max_iter: int, tol: float, dual: bool):
    w = 2.0 * sigma2
    P = 2.0 * prob.R.T @ prob.R
    q = 2.0 * prob.R.T @ prob.r
    state = {"z": np.zeros(prob.nz)}

    def accept(assign):
        z = _polish(prob, assign, sigma2)
        res = _kkt(prob, z, sigma2)
        if res <= tol:
            return z, res
        return None

    if not dual:
        a, s = _padded([c.breakpoints for c in prob.costs], [c.slopes for c in prob.costs])
        nx0 = prob.nx0
        L = max(np.linalg.norm(P, 2), 1e-12)

        def grad(z):
            return P @ z - q

        def prox(z):
            out = z.copy()
            out[nx0:], seg = _prox(z[nx0:], w / L, a, s)
            return out, seg

        def check(z, seg):
            state["z"] = z
            return accept(seg)

        done, it = _fista(grad, prox, np.zeros(prob.nz), L, max_iter, check)
    else:
        cf = sla.cho_factor(P)
        GPG = prob.G @ sla.cho_solve(cf, prob.G.T)
        L = max(w * w * np.linalg.norm(GPG, 2), 1e-12)
        # conjugate of kappa: breakpoints at the slopes, slopes at the breakpoints, box outside
        a, s = _padded([c.slopes for c in prob.costs],
                       [np.concatenate([[-np.inf], c.breakpoints, [np.inf]]) for c in prob.costs])

        def zof(mu):
            return sla.cho_solve(cf, q - w * prob.G.T @ mu)

        def grad(mu):
            return -w * (prob.G @ zof(mu) + prob.h)

        def prox(mu):
            return _prox(mu, w / L, a, s)

        def check(mu, seg):
            state["z"] = zof(mu)
            return accept(seg - 1)

        mu0 = np.array([np.clip(0.0, c.slopes[0], c.slopes[-1]) for c in prob.costs])
        done, it = _fista(grad, prox, mu0, L, max_iter, check)
    if done is not None:
        z, res = done
        return z, OptReport(prob.objective(z, sigma2), res, it, True)
    z = state["z"]
    return z, OptReport(prob.objective(z, sigma2), _kkt(prob, z, sigma2), it, False)


def solve_input_reg(model: StateSpaceModel, sigma2: float, max_iter: int = 1_000_000,
                    tol: float = 1e-9):
    """Input-regularized minimizer by accelerated proximal gradient plus active-set polishing."""
    if model.side != INPUT:
        raise ValueError("solve_input_reg needs an input-regularized model")
    prob = dense_problem(model)
    z, rep = _solve(prob, sigma2, max_iter, tol, dual=False)
    x0, u = prob.split(z)
    rep.x0 = x0 if prob.nx0 else model.x0_breve.copy()
    return u, rep


def solve_output_reg(model: StateSpaceModel, sigma2: float, max_iter: int = 1_000_000,
                     tol: float = 1e-9):
    """Output-regularized minimizer via the dual problem plus active-set polishing.

    Returns (u, y, report); report.x0 holds the initial state.
    """
    if model.side != OUTPUT:
        raise ValueError("solve_output_reg needs an output-regularized model")
    prob = dense_problem(model)
    z, rep = _solve(prob, sigma2, max_iter, tol, dual=True)
    x0, u = prob.split(z)
    rep.x0 = x0 if prob.nx0 else model.x0_breve.copy()
    y = prob.G @ z + prob.h + model.y_breve
    return u, y, rep


def brute_force_active_sets(model: StateSpaceModel, sigma2: float):
    """Exact minimizer by enumerating all segment assignments.

    Returns u for input regularization and (u, y, x0) for output regularization.
    """
    prob = dense_problem(model)
    z, _ = brute_force(prob, sigma2)
    x0, u = prob.split(z)
    if model.side == INPUT:
        return u
    return u, prob.G @ z + prob.h + model.y_breve, (x0 if prob.nx0 else model.x0_breve.copy())


def kkt_residual_input(model: StateSpaceModel, sigma2: float, u) -> float:
    """Subgradient residual of the input objective at u, the initial state being optimized out."""
    prob = dense_problem(model)
    u = np.asarray(u, dtype=float)
    z = np.concatenate([np.zeros(prob.nx0), u])
    if prob.nx0:
        Rx = prob.R[:, :prob.nx0]
        z[:prob.nx0], *_ = np.linalg.lstsq(Rx, prob.r - prob.R[:, prob.nx0:] @ u, rcond=None)
    return _kkt(prob, z, sigma2)


def kkt_residual_output(model: StateSpaceModel, sigma2: float, u, x0=None) -> float:
    prob = dense_problem(model)
    z = np.asarray(u, dtype=float)
    if prob.nx0:
        z = np.concatenate([np.asarray(x0, dtype=float), z])
    return _kkt(prob, z, sigma2)
