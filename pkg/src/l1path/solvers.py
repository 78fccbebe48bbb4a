"""MAP solvers at a fixed sigma^2.

bffd: backward information filter, then forward decisions on u_n
(input regularization).  ffbdd: forward Kalman filter, then a backward
recursion of dual means that decides y_n (output regularization).

Cost edges receive degenerate messages only (``SegmentGaussParams``):
a flat message with slope xi or a point mass at m.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gaussmp import SingularMessageError, sym
from .plcost import SegmentGaussParams
from .ssm import ModelError, StateSpaceModel

TAU_SCALAR = 1e-12
TAU_COND = 1e12


class SolverError(RuntimeError):
    pass


class UnboundedError(SolverError):
    """A flat input with no backward information but a nonzero net slope."""


def scalar_floor(M) -> float:
    return TAU_SCALAR * (1.0 + float(np.abs(M).max()))


TAU_DEFLATE = 1e-9


def deflation_floor(M, dmax: float) -> float:
    """Floor for b^T W b (or c^T V c) below which the direction counts as exhausted.

    ``dmax`` is the largest rank-one term removed so far in the pass; roundoff
    left in M by those subtractions scales with it.
    """
    return max(scalar_floor(M), TAU_DEFLATE * dmax)


def deflation_size(v, q: float) -> float:
    return float(np.abs(v).max()) ** 2 / q


def fused_solve(F, rhs):
    """Solve a symmetric PSD system; minimum-norm solution when singular.

    Returns (x, rank_deficient).
    """
    F = sym(F)
    try:
        L = np.linalg.cholesky(F)
        if np.linalg.cond(L) ** 2 < TAU_COND:
            y = np.linalg.solve(L, rhs)
            return np.linalg.solve(L.T, y), False
    except np.linalg.LinAlgError:
        pass
    x, *_ = np.linalg.lstsq(F, rhs, rcond=1.0 / TAU_COND)
    return x, True


def _u_arrays(msgs: Sequence[SegmentGaussParams], N):
    if len(msgs) != N:
        raise ModelError(f"{len(msgs)} messages for {N} coordinates")
    is_point = np.array([m.is_point for m in msgs], dtype=bool)
    val = np.array([m.value for m in msgs], dtype=float)
    return is_point, val


@dataclass
class BffdOutput:
    u_hat: np.ndarray
    y_hat: np.ndarray
    x_hat: np.ndarray  # (N+1, M), row 0 is x0
    Wb_U: np.ndarray  # backward message on U_n, canonical form
    xib_U: np.ndarray
    decoupled: np.ndarray = field(default=None)
    rank_deficient: bool = False

    @property
    def Vb_U(self):
        with np.errstate(divide="ignore"):
            return np.where(self.Wb_U > 0, 1.0 / np.where(self.Wb_U > 0, self.Wb_U, 1.0), np.inf)

    @property
    def mb_U(self):
        return np.where(self.Wb_U > 0, self.xib_U / np.where(self.Wb_U > 0, self.Wb_U, 1.0), np.nan)

    @property
    def identifiable(self) -> bool:
        return not (self.rank_deficient or self.decoupled.any())


def bffd(model: StateSpaceModel, sigma2: float, u_msgs: Sequence[SegmentGaussParams],
         y_msgs: Optional[tuple] = None) -> BffdOutput:
    """Input-regularized MAP estimate for the given input messages.

    ``y_msgs`` optionally replaces the observation messages by canonical
    pairs (W_Y, xi_Y) as two length-N arrays.

    A flat input whose b_n lies in the null space of the backward precision
    is decoupled: its value does not change the fit.  It is set to 0 when
    its net slope vanishes, otherwise the problem is unbounded.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    N, M = model.N, model.M
    A, B, C = model.A, model.b, model.c
    is_point, val = _u_arrays(u_msgs, N)
    inv = 1.0 / sigma2
    if y_msgs is None:
        Wy = np.full(N, inv)
        xiy = inv * model.y_breve
    else:
        Wy, xiy = (np.asarray(a, dtype=float) for a in y_msgs)

    W = inv * model.QN
    xi = inv * (model.QN @ model.xN_breve)
    WbS = np.empty((N, M))  # b^T W'' per step
    bxiS = np.empty(N)
    bWbS = np.empty(N)
    decoupled = np.zeros(N, dtype=bool)
    dmax = 0.0
    for n in range(N - 1, -1, -1):
        c, b = C[n], B[n]
        W2 = W + Wy[n] * np.outer(c, c)
        xi2 = xi + c * xiy[n]
        Wb = W2 @ b
        bWb = float(b @ Wb)
        bxi = float(b @ xi2)
        WbS[n], bxiS[n], bWbS[n] = Wb, bxi, bWb
        if is_point[n]:
            xi3, W3 = xi2 - Wb * val[n], W2
        elif bWb > deflation_floor(W2, dmax):
            dmax = max(dmax, deflation_size(Wb, bWb))
            H = 1.0 / bWb
            xi3 = xi2 - Wb * (H * (val[n] + bxi))
            W3 = W2 - H * Wb[:, None] * Wb
        else:
            decoupled[n] = True
            xi3, W3 = xi2, W2
        xi = A.T @ xi3
        W = sym(A.T @ W3 @ A)

    rank_def = False
    if model.fixed_initial_state:
        x = model.x0_breve.copy()
    else:
        Wf = inv * model.Q0
        x, rank_def = fused_solve(Wf + W, Wf @ model.x0_breve + xi)

    x_hat = np.empty((N + 1, M))
    x_hat[0] = x
    u_hat = np.empty(N)
    WbU = bWbS.copy()
    xibU = np.empty(N)
    for n in range(N):
        x3 = A @ x
        xibU[n] = bxiS[n] - WbS[n] @ x3
        if is_point[n]:
            u = val[n]
        elif decoupled[n]:
            net = xibU[n] + val[n]
            if abs(net) > 1e-9 * (1.0 + abs(xibU[n]) + abs(val[n])):
                raise UnboundedError(f"input {n} is decoupled with net slope {net:.3g}")
            u = 0.0
        else:
            u = (xibU[n] + val[n]) / WbU[n]
        u_hat[n] = u
        x = x3 + B[n] * u
        x_hat[n + 1] = x
    y_hat = np.einsum("nm,nm->n", C, x_hat[1:])
    return BffdOutput(u_hat, y_hat, x_hat, WbU, xibU, decoupled, rank_def)


def bffd_matrix(F, y_breve, sigma2: float, u_msgs: Sequence[SegmentGaussParams]) -> BffdOutput:
    """bffd for min ||F u - y||^2 + s^2 sum kappa(u_n), with the identity state matrix unrolled."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    F = np.atleast_2d(np.asarray(F, dtype=float))
    L, K = F.shape
    y_breve = np.asarray(y_breve, dtype=float).reshape(-1)
    is_point, val = _u_arrays(u_msgs, K)
    inv = 1.0 / sigma2
    W = inv * np.eye(L)
    xi = inv * y_breve
    WbS = np.empty((K, L))
    bxiS = np.empty(K)
    bWbS = np.empty(K)
    decoupled = np.zeros(K, dtype=bool)
    dmax = 0.0
    for n in range(K - 1, -1, -1):
        f = F[:, n]
        Wb = W @ f
        bWb = float(f @ Wb)
        bxi = float(f @ xi)
        WbS[n], bxiS[n], bWbS[n] = Wb, bxi, bWb
        if is_point[n]:
            xi = xi - Wb * val[n]
        elif bWb > deflation_floor(W, dmax):
            dmax = max(dmax, deflation_size(Wb, bWb))
            H = 1.0 / bWb
            xi = xi - Wb * (H * (val[n] + bxi))
            W = sym(W - H * Wb[:, None] * Wb)
        else:
            decoupled[n] = True
    x = np.zeros(L)
    x_hat = np.empty((K + 1, L))
    x_hat[0] = x
    u_hat = np.empty(K)
    xibU = np.empty(K)
    for n in range(K):
        xibU[n] = bxiS[n] - WbS[n] @ x
        if is_point[n]:
            u = val[n]
        elif decoupled[n]:
            net = xibU[n] + val[n]
            if abs(net) > 1e-9 * (1.0 + abs(xibU[n]) + abs(val[n])):
                raise UnboundedError(f"input {n} is decoupled with net slope {net:.3g}")
            u = 0.0
        else:
            u = (xibU[n] + val[n]) / bWbS[n]
        u_hat[n] = u
        x = x + F[:, n] * u
        x_hat[n + 1] = x
    return BffdOutput(u_hat, np.zeros(K), x_hat, bWbS, xibU, decoupled, False)


@dataclass
class FfbddOutput:
    y_hat: np.ndarray
    u_hat: np.ndarray
    xi_tilde_X: np.ndarray  # (N+1, M), row n is the dual mean of X_n
    mf_Y: np.ndarray
    Vf_Y: np.ndarray
    x0_hat: np.ndarray


def _q0_inverse(model):
    Q0 = model.Q0
    if model.fixed_initial_state:
        return np.zeros_like(Q0)
    if np.linalg.cond(Q0) > TAU_COND:
        raise SolverError("forward filtering needs an invertible Q0")
    return sym(np.linalg.inv(Q0))


def ffbdd(model: StateSpaceModel, sigma2: float, y_msgs: Sequence[SegmentGaussParams],
          u_msgs: Optional[tuple] = None) -> FfbddOutput:
    """Output-regularized MAP estimate for the given observation messages.

    ``u_msgs`` optionally replaces the input messages by moment pairs
    (V_U, m_U) as two length-N arrays; the default is (sigma^2, 0).
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    N, M = model.N, model.M
    A, B, C = model.A, model.b, model.c
    is_point, val = _u_arrays(y_msgs, N)
    if u_msgs is None:
        Vu, mu = np.full(N, sigma2), np.zeros(N)
    else:
        Vu, mu = (np.asarray(a, dtype=float) for a in u_msgs)
    Q0inv = _q0_inverse(model)
    V = sigma2 * Q0inv
    m = model.x0_breve.copy()
    VcS = np.empty((N, M))
    cmS = np.empty(N)
    cVcS = np.empty(N)
    dmax = 0.0
    for n in range(N):
        c, b = C[n], B[n]
        m2 = A @ m + b * mu[n]
        V2 = A @ V @ A.T + Vu[n] * np.outer(b, b)
        Vc = V2 @ c
        cVc = float(c @ Vc)
        cm = float(c @ m2)
        VcS[n], cmS[n], cVcS[n] = Vc, cm, cVc
        if is_point[n]:
            if cVc <= deflation_floor(V2, dmax):
                raise SingularMessageError(f"c^T V c vanishes at point observation {n}")
            dmax = max(dmax, deflation_size(Vc, cVc))
            G = 1.0 / cVc
            m = m2 + Vc * (G * (val[n] - cm))
            V = sym(V2 - G * Vc[:, None] * Vc)
        else:
            m = m2 + Vc * val[n]
            V = V2
    if not model.QN.any():
        xt = np.zeros(M)
    else:
        if np.linalg.cond(model.QN) > TAU_COND:
            raise SolverError("terminal dual needs Q_N = 0 or invertible")
        QNinv = sym(np.linalg.inv(model.QN))
        xt, bad = fused_solve(V + sigma2 * QNinv, m - model.xN_breve)
        if bad:
            raise SolverError("singular fused covariance at the terminal state")
    xi_tilde = np.empty((N + 1, M))
    xi_tilde[N] = xt
    y_hat = np.empty(N)
    u_hat = np.empty(N)
    mfY = np.empty(N)
    for n in range(N - 1, -1, -1):
        c, b = C[n], B[n]
        VfY = cVcS[n]
        mf = cmS[n] - VcS[n] @ xt
        mfY[n] = mf
        if is_point[n]:
            xtY = (mf - val[n]) / VfY
            y_hat[n] = val[n]
        else:
            xtY = -val[n]
            y_hat[n] = mf - VfY * xtY
        xt2 = xt + c * xtY
        u_hat[n] = mu[n] - Vu[n] * (b @ xt2)
        xt = A.T @ xt2
        xi_tilde[n] = xt
    x0_hat = model.x0_breve - sigma2 * (Q0inv @ xt)
    return FfbddOutput(y_hat, u_hat, xi_tilde, mfY, cVcS.copy(), x0_hat)


def ffbdd_matrix(F, y_breve, sigma2: float, y_msgs: Sequence[SegmentGaussParams]) -> FfbddOutput:
    """ffbdd for min ||x||^2 + s^2 sum kappa((F x)_n - y_n) with a static state."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    F = np.atleast_2d(np.asarray(F, dtype=float))
    L, K = F.shape
    is_point, val = _u_arrays(y_msgs, L)
    V = sigma2 * np.eye(K)
    m = np.zeros(K)
    VcS = np.empty((L, K))
    cmS = np.empty(L)
    cVcS = np.empty(L)
    dmax = 0.0
    for n in range(L):
        c = F[n]
        Vc = V @ c
        cVc = float(c @ Vc)
        cm = float(c @ m)
        VcS[n], cmS[n], cVcS[n] = Vc, cm, cVc
        if is_point[n]:
            if cVc <= deflation_floor(V, dmax):
                raise SingularMessageError(f"c^T V c vanishes at point observation {n}")
            dmax = max(dmax, deflation_size(Vc, cVc))
            G = 1.0 / cVc
            m = m + Vc * (G * (val[n] - cm))
            V = sym(V - G * Vc[:, None] * Vc)
        else:
            m = m + Vc * val[n]
    xt = np.zeros(K)
    xi_tilde = np.empty((L + 1, K))
    xi_tilde[L] = xt
    y_hat = np.empty(L)
    mfY = np.empty(L)
    for n in range(L - 1, -1, -1):
        mf = cmS[n] - VcS[n] @ xt
        mfY[n] = mf
        if is_point[n]:
            xtY = (mf - val[n]) / cVcS[n]
            y_hat[n] = val[n]
        else:
            xtY = -val[n]
            y_hat[n] = mf - cVcS[n] * xtY
        xt = xt + F[n] * xtY
        xi_tilde[n] = xt
    return FfbddOutput(y_hat, np.zeros(L), xi_tilde, mfY, cVcS.copy(), -sigma2 * xt)


@dataclass
class CrosscheckReport:
    u_diff: float
    y_diff: float
    x0_diff: float

    @property
    def max_diff(self) -> float:
        return max(self.u_diff, self.y_diff, self.x0_diff)


def gaussian_map_crosscheck(model: StateSpaceModel, sigma2: float, u_clamp=None,
                            y_slopes=None) -> CrosscheckReport:
    """Solve one Gaussian MAP problem with both recursions and compare.

    Inputs are clamped (point masses at ``u_clamp``, default 0) and the
    observations carry flat messages with slopes ``y_slopes`` (default y
    of the model), which both algorithms accept.  Needs invertible Q0.
    """
    N = model.N
    u_clamp = np.zeros(N) if u_clamp is None else np.asarray(u_clamp, dtype=float)
    y_slopes = model.y_breve if y_slopes is None else np.asarray(y_slopes, dtype=float)
    free = model.replace(fixed_initial_state=False)
    a = bffd(free, sigma2, [SegmentGaussParams.point(v) for v in u_clamp],
             y_msgs=(np.zeros(N), y_slopes))
    b = ffbdd(free, sigma2, [SegmentGaussParams.flat(v) for v in y_slopes],
              u_msgs=(np.zeros(N), u_clamp))
    return CrosscheckReport(float(np.max(np.abs(a.u_hat - b.u_hat), initial=0.0)),
                            float(np.max(np.abs(a.y_hat - b.y_hat), initial=0.0)),
                            float(np.max(np.abs(a.x_hat[0] - b.x0_hat))))
