"""Parametric forms of bffd and ffbdd: every quantity as an affine function of sigma^2.

With the active segment of every coordinate fixed, the backward precision
W is linear in 1/sigma^2, xi is affine in 1/sigma^2, and all estimates are
affine in sigma^2.  The passes below carry the two coefficients of each
intermediate and return them, so one pass gives the estimates on a whole
interval of sigma^2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .gaussmp import SingularMessageError, sym
from .plcost import Segment, segment_params
from .solvers import SolverError, UnboundedError, deflation_floor, deflation_size, fused_solve, _q0_inverse
from .ssm import StateSpaceModel

SIGMA2 = "sigma2"
INV_SIGMA2 = "inv_sigma2"


class DegreeError(ArithmeticError):
    """A product would leave the span {sigma^-2, 1, sigma^2}."""


@dataclass(frozen=True)
class ParamAffine:
    """t * c1 + c0 with t = sigma^2 (param "sigma2") or t = 1/sigma^2 ("inv_sigma2")."""

    param: str
    c1: np.ndarray
    c0: np.ndarray

    def __post_init__(self):
        if self.param not in (SIGMA2, INV_SIGMA2):
            raise ValueError(f"unknown parameter tag {self.param!r}")
        object.__setattr__(self, "c1", np.asarray(self.c1, dtype=float))
        object.__setattr__(self, "c0", np.asarray(self.c0, dtype=float))
        if self.c1.shape != self.c0.shape:
            raise ValueError("coefficient shapes differ")

    @classmethod
    def const(cls, c0, param=SIGMA2) -> "ParamAffine":
        c0 = np.asarray(c0, dtype=float)
        return cls(param, np.zeros_like(c0), c0)

    @property
    def is_linear(self) -> bool:
        return not self.c0.any()

    @property
    def is_const(self) -> bool:
        return not self.c1.any()

    def at(self, sigma2):
        t = sigma2 if self.param == SIGMA2 else 1.0 / sigma2
        return t * self.c1 + self.c0

    def _powers(self):
        # degree in sigma^2 -> coefficient
        return {1 if self.param == SIGMA2 else -1: self.c1, 0: self.c0}

    @staticmethod
    def _from_powers(terms, shape):
        terms = {k: v for k, v in terms.items() if np.any(v)}
        bad = [k for k in terms if k not in (-1, 0, 1)]
        if bad or (1 in terms and -1 in terms):
            raise DegreeError(f"result has sigma^2 powers {sorted(terms)}")
        zero = np.zeros(shape)
        if -1 in terms:
            return ParamAffine(INV_SIGMA2, terms[-1], terms.get(0, zero))
        return ParamAffine(SIGMA2, terms.get(1, zero), terms.get(0, zero))

    def _combine(self, other, op):
        if not isinstance(other, ParamAffine):
            other = ParamAffine.const(other, self.param)
        terms = {}
        for i, a in self._powers().items():
            for j, b in other._powers().items():
                prod = op(a, b)
                terms[i + j] = terms.get(i + j, 0.0) + prod
        shape = np.shape(op(self.c0, other.c0))
        return self._from_powers(terms, shape)

    def __add__(self, other):
        if not isinstance(other, ParamAffine):
            return ParamAffine(self.param, self.c1, self.c0 + other)
        terms = {}
        for p in (self, other):
            for k, v in p._powers().items():
                terms[k] = terms.get(k, 0.0) + v
        return self._from_powers(terms, np.broadcast_shapes(self.c0.shape, other.c0.shape))

    __radd__ = __add__

    def __neg__(self):
        return ParamAffine(self.param, -self.c1, -self.c0)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, ParamAffine):
            return ParamAffine(self.param, self.c1 * other, self.c0 * other)
        return self._combine(other, np.multiply)

    def __rmul__(self, other):
        return self * other

    def __matmul__(self, other):
        if not isinstance(other, ParamAffine):
            return ParamAffine(self.param, self.c1 @ other, self.c0 @ other)
        return self._combine(other, np.matmul)

    def __rmatmul__(self, other):
        return ParamAffine(self.param, other @ self.c1, other @ self.c0)

    def inverse(self) -> "ParamAffine":
        """1 / (t c1) for a linear scalar quantity, returned in the opposite parameter."""
        if not self.is_linear:
            raise DegreeError("only linear quantities have an affine inverse")
        other = INV_SIGMA2 if self.param == SIGMA2 else SIGMA2
        with np.errstate(divide="ignore"):
            return ParamAffine(other, 1.0 / self.c1, np.zeros_like(self.c0))


def eval_at(p: ParamAffine, sigma2):
    return p.at(sigma2)


def _params(active):
    out = []
    for a in active:
        out.append(segment_params(a) if isinstance(a, Segment) else a)
    return out


@dataclass
class ParamBffdOutput:
    u1: np.ndarray
    u0: np.ndarray
    w1: np.ndarray  # W_U = w1 / sigma^2
    xi1: np.ndarray  # xi_U = xi1 / sigma^2 + xi0
    xi0: np.ndarray
    x1: np.ndarray  # (N+1, M)
    x0: np.ndarray
    decoupled: np.ndarray
    rank_deficient: bool
    c: np.ndarray

    @property
    def u_hat(self) -> ParamAffine:
        return ParamAffine(SIGMA2, self.u1, self.u0)

    @property
    def x_hat(self) -> ParamAffine:
        return ParamAffine(SIGMA2, self.x1, self.x0)

    @property
    def y_hat(self) -> ParamAffine:
        return ParamAffine(SIGMA2, np.einsum("nm,nm->n", self.c, self.x1[1:]),
                           np.einsum("nm,nm->n", self.c, self.x0[1:]))

    @property
    def Vb_U(self) -> ParamAffine:
        with np.errstate(divide="ignore"):
            return ParamAffine(SIGMA2, np.where(self.w1 > 0, 1.0 / self.w1, np.inf),
                               np.zeros_like(self.w1))

    @property
    def mb_U(self) -> ParamAffine:
        with np.errstate(divide="ignore", invalid="ignore"):
            return ParamAffine(SIGMA2, self.xi0 / self.w1, self.xi1 / self.w1)


def param_bffd(model: StateSpaceModel, active: Sequence, free_value: Optional[np.ndarray] = None
               ) -> ParamBffdOutput:
    """bffd with coefficient pairs.  ``active`` holds Segments or SegmentGaussParams.

    ``free_value`` sets decoupled flat inputs (default 0).
    """
    N, M = model.N, model.M
    A, B, C = model.A, model.b, model.c
    msgs = _params(active)
    if len(msgs) != N:
        raise ValueError(f"{len(msgs)} active segments for {N} inputs")
    is_point = np.array([m.is_point for m in msgs], dtype=bool)
    val = np.array([m.value for m in msgs], dtype=float)
    free_value = np.zeros(N) if free_value is None else np.asarray(free_value, dtype=float)
    yb = model.y_breve

    W1 = model.QN.astype(float).copy()
    xi1 = model.QN @ model.xN_breve
    xi0 = np.zeros(M)
    Wb1S = np.empty((N, M))
    bxi1S = np.empty(N)
    bxi0S = np.empty(N)
    bWb1S = np.empty(N)
    decoupled = np.zeros(N, dtype=bool)
    dmax = 0.0
    CC = C[:, :, None] * C[:, None, :]
    for n in range(N - 1, -1, -1):
        c, b = C[n], B[n]
        W1 = W1 + CC[n]
        xi1 = xi1 + c * yb[n]
        Wb1 = W1 @ b
        bWb1 = float(b @ Wb1)
        bxi1 = float(b @ xi1)
        bxi0 = float(b @ xi0)
        Wb1S[n], bxi1S[n], bxi0S[n], bWb1S[n] = Wb1, bxi1, bxi0, bWb1
        if is_point[n]:
            # H = 0, h = b m: only the 1/sigma^2 part of xi moves
            xi1 = xi1 - Wb1 * val[n]
        elif bWb1 > deflation_floor(W1, dmax):
            dmax = max(dmax, deflation_size(Wb1, bWb1))
            H1 = 1.0 / bWb1
            xi1 = xi1 - Wb1 * (H1 * bxi1)
            xi0 = xi0 - Wb1 * (H1 * (val[n] + bxi0))
            W1 = W1 - H1 * Wb1[:, None] * Wb1
        else:
            decoupled[n] = True
        xi1 = A.T @ xi1
        xi0 = A.T @ xi0
        W1 = sym(A.T @ W1 @ A)

    rank_def = False
    x1 = np.empty((N + 1, M))
    x0 = np.empty((N + 1, M))
    if model.fixed_initial_state:
        x1[0] = 0.0
        x0[0] = model.x0_breve
    else:
        F1 = model.Q0 + W1
        rhs = np.column_stack([xi0, model.Q0 @ model.x0_breve + xi1])
        sol, rank_def = fused_solve(F1, rhs)
        x1[0], x0[0] = sol[:, 0], sol[:, 1]
    u1 = np.empty(N)
    u0 = np.empty(N)
    uxi1 = np.empty(N)
    uxi0 = np.empty(N)
    for n in range(N):
        a1 = A @ x1[n]
        a0 = A @ x0[n]
        uxi1[n] = bxi1S[n] - Wb1S[n] @ a0
        uxi0[n] = bxi0S[n] - Wb1S[n] @ a1
        if is_point[n]:
            u1[n], u0[n] = 0.0, val[n]
        elif decoupled[n]:
            net1, net0 = uxi1[n], uxi0[n] + val[n]
            scale = 1.0 + abs(bxi1S[n]) + abs(bxi0S[n]) + abs(val[n])
            if abs(net1) > 1e-8 * scale or abs(net0) > 1e-8 * scale:
                raise UnboundedError(f"input {n} is decoupled with net slope ({net1:.3g}, {net0:.3g})")
            u1[n], u0[n] = 0.0, free_value[n]
        else:
            u1[n] = (uxi0[n] + val[n]) / bWb1S[n]
            u0[n] = uxi1[n] / bWb1S[n]
        x1[n + 1] = a1 + B[n] * u1[n]
        x0[n + 1] = a0 + B[n] * u0[n]
    return ParamBffdOutput(u1, u0, bWb1S, uxi1, uxi0, x1, x0, decoupled, rank_def, C)


@dataclass
class ParamFfbddOutput:
    y1: np.ndarray
    y0: np.ndarray
    mf1: np.ndarray  # forward message on Y_n: m = sigma^2 mf1 + mf0, V = sigma^2 v1
    mf0: np.ndarray
    v1: np.ndarray
    u1: np.ndarray
    u0: np.ndarray
    d1: np.ndarray  # dual means xi~_{X_n} = d1 / sigma^2 + d0, shape (N+1, M)
    d0: np.ndarray
    x0_1: np.ndarray
    x0_0: np.ndarray

    @property
    def y_hat(self) -> ParamAffine:
        return ParamAffine(SIGMA2, self.y1, self.y0)

    @property
    def u_hat(self) -> ParamAffine:
        return ParamAffine(SIGMA2, self.u1, self.u0)

    @property
    def mf_Y(self) -> ParamAffine:
        return ParamAffine(SIGMA2, self.mf1, self.mf0)

    @property
    def Vf_Y(self) -> ParamAffine:
        return ParamAffine(SIGMA2, self.v1, np.zeros_like(self.v1))

    @property
    def xi_tilde_X(self) -> ParamAffine:
        return ParamAffine(INV_SIGMA2, self.d1, self.d0)

    @property
    def x0_hat(self) -> ParamAffine:
        return ParamAffine(SIGMA2, self.x0_1, self.x0_0)


def param_ffbdd(model: StateSpaceModel, active: Sequence) -> ParamFfbddOutput:
    """ffbdd with coefficient pairs.  ``active`` holds Segments or SegmentGaussParams
    for the shifted costs (acting on y_n itself)."""
    N, M = model.N, model.M
    A, B, C = model.A, model.b, model.c
    msgs = _params(active)
    if len(msgs) != N:
        raise ValueError(f"{len(msgs)} active segments for {N} outputs")
    is_point = np.array([m.is_point for m in msgs], dtype=bool)
    val = np.array([m.value for m in msgs], dtype=float)
    Q0inv = _q0_inverse(model)

    V1 = Q0inv.copy()
    AT = A.T
    BB = B[:, :, None] * B[:, None, :]
    m1 = np.zeros(M)
    m0 = model.x0_breve.astype(float).copy()
    Vc1S = np.empty((N, M))
    cm1S = np.empty(N)
    cm0S = np.empty(N)
    cVc1S = np.empty(N)
    dmax = 0.0
    for n in range(N):
        c, b = C[n], B[n]
        m1 = A @ m1
        m0 = A @ m0
        V1 = A @ V1 @ AT + BB[n]
        Vc1 = V1 @ c
        cVc1 = float(c @ Vc1)
        cm1 = float(c @ m1)
        cm0 = float(c @ m0)
        Vc1S[n], cm1S[n], cm0S[n], cVc1S[n] = Vc1, cm1, cm0, cVc1
        if is_point[n]:
            if cVc1 <= deflation_floor(V1, dmax):
                raise SingularMessageError(f"c^T V c vanishes at point observation {n}")
            dmax = max(dmax, deflation_size(Vc1, cVc1))
            G1 = 1.0 / cVc1
            m1 = m1 - Vc1 * (G1 * cm1)
            m0 = m0 + Vc1 * (G1 * (val[n] - cm0))
            V1 = sym(V1 - G1 * Vc1[:, None] * Vc1)
        else:
            m1 = m1 + Vc1 * val[n]
    d1 = np.empty((N + 1, M))
    d0 = np.empty((N + 1, M))
    if not model.QN.any():
        d1[N] = 0.0
        d0[N] = 0.0
    else:
        QNinv = sym(np.linalg.inv(model.QN))
        sol, bad = fused_solve(V1 + QNinv, np.column_stack([m0 - model.xN_breve, m1]))
        if bad:
            raise SolverError("singular fused covariance at the terminal state")
        d1[N], d0[N] = sol[:, 0], sol[:, 1]
    y1 = np.empty(N)
    y0 = np.empty(N)
    mf1 = np.empty(N)
    mf0 = np.empty(N)
    u1 = np.empty(N)
    u0 = np.empty(N)
    e1, e0 = d1[N], d0[N]
    for n in range(N - 1, -1, -1):
        c, b = C[n], B[n]
        v1 = cVc1S[n]
        mf1[n] = cm1S[n] - Vc1S[n] @ e0
        mf0[n] = cm0S[n] - Vc1S[n] @ e1
        if is_point[n]:
            t1 = (mf0[n] - val[n]) / v1
            t0 = mf1[n] / v1
            y1[n], y0[n] = 0.0, val[n]
        else:
            t1, t0 = 0.0, -val[n]
            y1[n] = mf1[n] + v1 * val[n]
            y0[n] = mf0[n]
        e1 = e1 + c * t1
        e0 = e0 + c * t0
        u1[n] = -(b @ e0)
        u0[n] = -(b @ e1)
        e1 = A.T @ e1
        e0 = A.T @ e0
        d1[n], d0[n] = e1, e0
    return ParamFfbddOutput(y1, y0, mf1, mf0, cVc1S.copy(), u1, u0, d1, d0,
                            -(Q0inv @ d0[0]), model.x0_breve - Q0inv @ d1[0])
