"""Linear state space models with a piecewise-linear penalty on inputs or outputs.

    x_n = A x_{n-1} + b_n u_n,   y_n = c_n^T x_n,   n = 1..N

Input regularization ("input" side) minimizes

    (x0 - x0b)^T Q0 (x0 - x0b) + s^2 sum kappa_n(u_n) + sum (y_n - yb_n)^2
        + (xN - xNb)^T QN (xN - xNb)

and output regularization ("output" side) minimizes

    (x0 - x0b)^T Q0 (x0 - x0b) + sum u_n^2 + s^2 sum kappa_n(y_n - yb_n)
        + (xN - xNb)^T QN (xN - xNb)

with s^2 = 2 sigma^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .plcost import SegmentedCost, make_l1

INPUT = "input"
OUTPUT = "output"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    b: np.ndarray  # (N, M), row n is b_n
    c: np.ndarray  # (N, M), row n is c_n
    Q0: np.ndarray
    QN: np.ndarray
    x0_breve: np.ndarray
    xN_breve: np.ndarray
    y_breve: np.ndarray
    costs: tuple
    side: str = INPUT
    fixed_initial_state: bool = False
    name: str = field(default="custom", compare=False)

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.y_breve.size

    @property
    def total_segments(self) -> int:
        return sum(c.n_segments for c in self.costs)

    def shifted_costs(self) -> list:
        """Costs as functions of the penalized variable itself (u_n or y_n)."""
        if self.side == OUTPUT:
            return [k.shifted(y) for k, y in zip(self.costs, self.y_breve)]
        return list(self.costs)

    def replace(self, **kw) -> "StateSpaceModel":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return make_model(**d)


def make_model(A, b, c, Q0=None, QN=None, x0_breve=None, xN_breve=None, y_breve=None,
               costs=None, side=INPUT, fixed_initial_state=False, name="custom") -> StateSpaceModel:
    """Build a model with float arrays and defaults (zero targets, L1 costs)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    M = A.shape[0]
    try:
        b = np.asarray(b, dtype=float).reshape(-1, M)
        c = np.asarray(c, dtype=float).reshape(-1, M)
    except ValueError:
        raise ModelError(f"b and c need {M} entries per row (state dimension)") from None
    N = b.shape[0]
    if y_breve is None:
        y_breve = np.zeros(N)
    y_breve = np.asarray(y_breve, dtype=float).reshape(-1)
    Q0 = np.zeros((M, M)) if Q0 is None else np.atleast_2d(np.asarray(Q0, dtype=float))
    QN = np.zeros((M, M)) if QN is None else np.atleast_2d(np.asarray(QN, dtype=float))
    x0_breve = np.zeros(M) if x0_breve is None else np.asarray(x0_breve, dtype=float).reshape(-1)
    xN_breve = np.zeros(M) if xN_breve is None else np.asarray(xN_breve, dtype=float).reshape(-1)
    if costs is None:
        costs = [make_l1(0.0)] * N
    model = StateSpaceModel(A, b, c, Q0, QN, x0_breve, xN_breve, y_breve, tuple(costs),
                            side, bool(fixed_initial_state), name)
    problems = validate(model)
    if problems:
        raise ModelError("; ".join(problems))
    return model


def _psd_violation(Q, what):
    if not np.allclose(Q, Q.T, atol=1e-12 * (1 + np.abs(Q).max(initial=0))):
        return f"{what} is not symmetric"
    lam = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    if lam.size and lam[0] < -1e-8 * (1 + np.linalg.norm(Q, np.inf)):
        return f"{what} has a negative eigenvalue {lam[0]:.3g}"
    return None


def validate(model: StateSpaceModel) -> list:
    """List of violated invariants; empty when the model is consistent."""
    out = []
    A = model.A
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return [f"A must be square, got {A.shape}"]
    M, N = A.shape[0], model.y_breve.size
    for name in ("b", "c"):
        arr = getattr(model, name)
        if arr.shape != (N, M):
            out.append(f"{name} has shape {arr.shape}, expected {(N, M)}")
    for name in ("Q0", "QN"):
        Q = getattr(model, name)
        if Q.shape != (M, M):
            out.append(f"{name} has shape {Q.shape}, expected {(M, M)}")
        else:
            msg = _psd_violation(Q, name)
            if msg:
                out.append(msg)
    for name in ("x0_breve", "xN_breve"):
        if getattr(model, name).shape != (M,):
            out.append(f"{name} must have length {M}")
    if len(model.costs) != N:
        out.append(f"{len(model.costs)} costs for {N} {'inputs' if model.side == INPUT else 'outputs'}")
    if not all(isinstance(k, SegmentedCost) for k in model.costs):
        out.append("costs must be SegmentedCost instances")
    if model.side not in (INPUT, OUTPUT):
        out.append(f"unknown side {model.side!r}")
    for name in ("A", "b", "c", "Q0", "QN", "x0_breve", "xN_breve", "y_breve"):
        if not np.all(np.isfinite(getattr(model, name))):
            out.append(f"{name} has non-finite entries")
    return out


def lasso_model(F, y_breve, costs: Optional[Sequence[SegmentedCost]] = None) -> StateSpaceModel:
    """min ||F u - y||^2 + s^2 sum kappa_n(u_n): state accumulates F u, so x_N = F u."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    L, K = F.shape
    y_breve = np.asarray(y_breve, dtype=float).reshape(-1)
    if y_breve.size != L:
        raise ModelError(f"F has {L} rows but y has length {y_breve.size}")
    return make_model(np.eye(L), F.T, np.zeros((K, L)), QN=np.eye(L), xN_breve=y_breve,
                      y_breve=np.zeros(K), costs=costs, side=INPUT, fixed_initial_state=True,
                      name="lasso")


def output_model(F, y_breve, costs: Optional[Sequence[SegmentedCost]] = None,
                 q0: float = 1.0) -> StateSpaceModel:
    """min q0 ||x||^2 + s^2 sum kappa_n((F x)_n - y_n): a static state observed row by row."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    L, K = F.shape
    y_breve = np.asarray(y_breve, dtype=float).reshape(-1)
    if y_breve.size != L:
        raise ModelError(f"F has {L} rows but y has length {y_breve.size}")
    if q0 <= 0:
        raise ModelError("output regularization needs q0 > 0")
    return make_model(np.eye(K), np.zeros((L, K)), F, Q0=q0 * np.eye(K), y_breve=y_breve,
                      costs=costs, side=OUTPUT, name="output")


_TREND_A = np.array([[1.0, 1.0], [0.0, 1.0]])


def trend_filter_model(y_breve, cost: Optional[SegmentedCost] = None) -> StateSpaceModel:
    """Piecewise-linear trend: slope changes u_n penalized, squared fit to y."""
    y_breve = np.asarray(y_breve, dtype=float).reshape(-1)
    N = y_breve.size
    if N < 2:
        raise ModelError("trend filter needs at least 2 observations")
    cost = make_l1(0.0) if cost is None else cost
    return make_model(_TREND_A, np.tile([0.0, 1.0], (N, 1)), np.tile([1.0, 0.0], (N, 1)),
                      y_breve=y_breve, costs=[cost] * N, side=INPUT, name="trend_filter")


def median_smoother_model(y_breve, q0: float = 1e-3,
                          cost: Optional[SegmentedCost] = None) -> StateSpaceModel:
    """Same dynamics as the trend filter, L1 penalty on the residuals y_n - yb_n."""
    if not q0 > 0:
        raise ModelError("median smoother needs q0 > 0 (the forward pass inverts Q0)")
    y_breve = np.asarray(y_breve, dtype=float).reshape(-1)
    N = y_breve.size
    if N < 2:
        raise ModelError("median smoother needs at least 2 observations")
    cost = make_l1(0.0) if cost is None else cost
    return make_model(_TREND_A, np.tile([0.0, 1.0], (N, 1)), np.tile([1.0, 0.0], (N, 1)),
                      Q0=q0 * np.eye(2), y_breve=y_breve, costs=[cost] * N, side=OUTPUT,
                      name="median_smoother")


def simulate(model: StateSpaceModel, x0, u) -> tuple:
    """States x_0..x_N as an (N+1, M) array and outputs y_1..y_N."""
    u = np.asarray(u, dtype=float).reshape(-1)
    x = np.empty((model.N + 1, model.M))
    x[0] = x0
    for n in range(model.N):
        x[n + 1] = model.A @ x[n] + model.b[n] * u[n]
    y = np.einsum("nm,nm->n", model.c, x[1:])
    return x, y


def cost_from_spec(spec) -> SegmentedCost:
    """Cost from a dict: {"type": "l1"|"hinge1"|"hinge2"|"vapnik", ...} or explicit
    {"breakpoints": [...], "slopes": [...], "offset": v}."""
    from . import plcost

    if isinstance(spec, SegmentedCost):
        return spec
    kind = spec.get("type", "custom")
    if kind == "l1":
        return plcost.make_l1(float(spec.get("center", 0.0)))
    if kind == "hinge1":
        return plcost.make_hinge1(float(spec.get("a", 0.0)))
    if kind == "hinge2":
        return plcost.make_hinge2(float(spec.get("a", 0.0)))
    if kind == "vapnik":
        if "a" not in spec or "b" not in spec:
            raise ModelError("vapnik cost needs 'a' and 'b'")
        return plcost.make_vapnik(float(spec["a"]), float(spec["b"]))
    if kind == "custom":
        return SegmentedCost.from_dict(spec)
    raise ModelError(f"unknown cost type {kind!r}")


def model_to_dict(model: StateSpaceModel) -> dict:
    d = {k: getattr(model, k).tolist() for k in
         ("A", "b", "c", "Q0", "QN", "x0_breve", "xN_breve", "y_breve")}
    d["costs"] = [c.to_dict() for c in model.costs]
    d.update(side=model.side, fixed_initial_state=model.fixed_initial_state, name=model.name)
    return d


def model_from_dict(d: dict) -> StateSpaceModel:
    """Inverse of model_to_dict; ``costs`` may be a single spec applied to every index."""
    d = dict(d)
    missing = [k for k in ("A", "b", "c") if k not in d]
    if missing:
        raise ModelError(f"model is missing {', '.join(missing)}")
    costs = d.pop("costs", None)
    if costs is not None:
        n = np.asarray(d["b"], dtype=float).reshape(-1, np.atleast_2d(d["A"]).shape[0]).shape[0]
        costs = [cost_from_spec(costs)] * n if isinstance(costs, dict) else [cost_from_spec(c) for c in costs]
    known = {"Q0", "QN", "x0_breve", "xN_breve", "y_breve", "side", "fixed_initial_state", "name"}
    extra = set(d) - known - {"A", "b", "c"}
    if extra:
        raise ModelError(f"unknown model fields: {', '.join(sorted(extra))}")
    return make_model(costs=costs, **d)
