"""Gaussian messages that may be degenerate, and the node rules that combine them.

A message is stored either in moment form (m, V) or in canonical form
(xi, W).  Both V = 0 (point mass) and W = 0 (flat message) are legal, and
the degeneracy class is read off the stored form and exact zeros rather
than from near-zero numerics.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

TAU_NUM = 1e-9
TAU_COND = 1e12


class MessageError(ValueError):
    """Raised for malformed messages or unsupported combinations."""


class SingularMessageError(MessageError):
    """A matrix that must be inverted is singular."""


class UnsupportedBranchError(MessageError):
    """Both messages at a cost edge are nondegenerate."""


def tau_psd(M) -> float:
    M = np.atleast_2d(M)
    return 1e-8 * (1.0 + float(np.linalg.norm(M, np.inf)))


def sym(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def _check_psd(M, what):
    if M.size == 0:
        return
    if not np.allclose(M, M.T, rtol=0.0, atol=tau_psd(M)):
        raise MessageError(f"{what} is not symmetric")
    lam = np.linalg.eigvalsh(sym(M))
    if lam[0] < -tau_psd(M):
        raise MessageError(f"{what} is not PSD (min eigenvalue {lam[0]:.3e})")


@dataclass(frozen=True)
class GaussianMsg:
    """A Gaussian message in exactly one of the two parametrizations."""

    form: str  # "moment" or "canonical"
    m: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.form == "moment":
            if self.m is None or self.V is None or self.xi is not None or self.W is not None:
                raise MessageError("moment message needs m and V only")
            vec, mat = self.m, self.V
        elif self.form == "canonical":
            if self.xi is None or self.W is None or self.m is not None or self.V is not None:
                raise MessageError("canonical message needs xi and W only")
            vec, mat = self.xi, self.W
        else:
            raise MessageError(f"unknown form {self.form!r}")
        if vec.ndim != 1 or mat.shape != (vec.size, vec.size):
            raise MessageError(f"shape mismatch: vector {vec.shape}, matrix {mat.shape}")

    @classmethod
    def moment(cls, m, V) -> "GaussianMsg":
        m = np.atleast_1d(np.asarray(m, dtype=float)).copy()
        V = np.atleast_2d(np.asarray(V, dtype=float))
        _check_psd(V, "V")
        return cls("moment", m=m, V=sym(V))

    @classmethod
    def canonical(cls, xi, W) -> "GaussianMsg":
        xi = np.atleast_1d(np.asarray(xi, dtype=float)).copy()
        W = np.atleast_2d(np.asarray(W, dtype=float))
        _check_psd(W, "W")
        return cls("canonical", xi=xi, W=sym(W))

    @classmethod
    def point(cls, m) -> "GaussianMsg":
        m = np.atleast_1d(np.asarray(m, dtype=float))
        return cls.moment(m, np.zeros((m.size, m.size)))

    @classmethod
    def flat(cls, xi) -> "GaussianMsg":
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return cls.canonical(xi, np.zeros((xi.size, xi.size)))

    @property
    def dim(self) -> int:
        return (self.m if self.form == "moment" else self.xi).size

    @property
    def is_point(self) -> bool:
        return self.form == "moment" and not self.V.any()

    @property
    def is_flat(self) -> bool:
        return self.form == "canonical" and not self.W.any()

    def to_canonical(self) -> "GaussianMsg":
        if self.form == "canonical":
            return self
        W = _inv_checked(self.V, "V")
        return GaussianMsg.canonical(W @ self.m, W)

    def to_moment(self) -> "GaussianMsg":
        if self.form == "moment":
            return self
        V = _inv_checked(self.W, "W")
        return GaussianMsg.moment(V @ self.xi, V)


def _inv_checked(M, what):
    if np.linalg.cond(M) > TAU_COND:
        raise SingularMessageError(f"{what} is singular (cond > {TAU_COND:g})")
    return sym(np.linalg.inv(M))


def _same_dim(z1, z2):
    if z1.dim != z2.dim:
        raise MessageError(f"dimension mismatch {z1.dim} vs {z2.dim}")


def _need(z, form):
    if z.form != form:
        raise MessageError(f"expected {form} message, got {z.form}")


@dataclass(frozen=True)
class PosteriorPair:
    m: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class DualPair:
    xi_t: np.ndarray
    W_t: Optional[np.ndarray] = None


def equality_fwd(z1: GaussianMsg, z2: GaussianMsg) -> GaussianMsg:
    _need(z1, "canonical")
    _need(z2, "canonical")
    _same_dim(z1, z2)
    return GaussianMsg.canonical(z1.xi + z2.xi, z1.W + z2.W)


def addition_fwd(z1: GaussianMsg, z2: GaussianMsg) -> GaussianMsg:
    _need(z1, "moment")
    _need(z2, "moment")
    _same_dim(z1, z2)
    return GaussianMsg.moment(z1.m + z2.m, z1.V + z2.V)


def linear_fwd(A, z: GaussianMsg) -> GaussianMsg:
    _need(z, "moment")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != z.dim:
        raise MessageError(f"A has {A.shape[1]} columns, message has dim {z.dim}")
    return GaussianMsg.moment(A @ z.m, A @ z.V @ A.T)


def linear_bwd(A, z: GaussianMsg) -> GaussianMsg:
    """Backward through Z2 = A Z1, given the canonical message on Z2."""
    _need(z, "canonical")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != z.dim:
        raise MessageError(f"A has {A.shape[0]} rows, message has dim {z.dim}")
    return GaussianMsg.canonical(A.T @ z.xi, A.T @ z.W @ A)


def observe_through_row(zin: GaussianMsg, c, y_msg: GaussianMsg) -> GaussianMsg:
    """Forward moment message after an equality node tied to Y = c^T X.

    The scalar message on Y must be flat (W = 0) or a point mass (V = 0).
    """
    _need(zin, "moment")
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size != zin.dim or y_msg.dim != 1:
        raise MessageError("observe_through_row: dimension mismatch")
    Vc = zin.V @ c
    if y_msg.is_flat:
        # G = 0, g = c xi_Y
        return GaussianMsg.moment(zin.m + Vc * y_msg.xi[0], zin.V)
    if y_msg.is_point:
        cVc = float(c @ Vc)
        if cVc <= TAU_NUM * 1e-3 * (1.0 + np.max(np.abs(zin.V), initial=0.0)):
            raise SingularMessageError("c^T V c vanishes at a point observation")
        G = 1.0 / cVc
        m = zin.m + Vc * G * (y_msg.m[0] - c @ zin.m)
        return GaussianMsg.moment(m, zin.V - G * np.outer(Vc, Vc))
    raise UnsupportedBranchError("observation message is neither flat nor a point mass")


def input_through_column(zin: GaussianMsg, b, u_msg: GaussianMsg) -> GaussianMsg:
    """Backward canonical message before the node X'' = X''' + b U.

    The scalar message on U must be a point mass (V = 0) or flat (W = 0).
    """
    _need(zin, "canonical")
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != zin.dim or u_msg.dim != 1:
        raise MessageError("input_through_column: dimension mismatch")
    Wb = zin.W @ b
    if u_msg.is_point:
        # H = 0, h = b m_U
        return GaussianMsg.canonical(zin.xi - Wb * u_msg.m[0], zin.W)
    if u_msg.is_flat:
        bWb = float(b @ Wb)
        if bWb <= TAU_NUM * 1e-3 * (1.0 + np.max(np.abs(zin.W), initial=0.0)):
            raise SingularMessageError("b^T W b vanishes at a flat input")
        H = 1.0 / bWb
        xi = zin.xi - Wb * H * (u_msg.xi[0] + b @ zin.xi)
        return GaussianMsg.canonical(xi, zin.W - H * np.outer(Wb, Wb))
    raise UnsupportedBranchError("input message is neither flat nor a point mass")


def _posterior_canonical(fwd: GaussianMsg, bwd: GaussianMsg) -> PosteriorPair:
    f, g = fwd.to_canonical(), bwd.to_canonical()
    V = _inv_checked(f.W + g.W, "W_f + W_b")
    return PosteriorPair(V @ (f.xi + g.xi), V)


def _posterior_moment(fwd: GaussianMsg, bwd: GaussianMsg) -> PosteriorPair:
    Wt = _inv_checked(fwd.V + bwd.V, "V_f + V_b")
    VfWt = fwd.V @ Wt
    return PosteriorPair(fwd.m - VfWt @ (fwd.m - bwd.m), sym(fwd.V - VfWt @ fwd.V))


def posterior(fwd: GaussianMsg, bwd: GaussianMsg) -> PosteriorPair:
    _same_dim(fwd, bwd)
    if fwd.is_point:
        return PosteriorPair(fwd.m.copy(), np.zeros_like(fwd.V))
    if bwd.is_point:
        return PosteriorPair(bwd.m.copy(), np.zeros_like(bwd.V))
    if fwd.is_flat and bwd.is_flat:
        raise MessageError("posterior undefined: both messages flat")
    if fwd.form == "moment" and bwd.form == "moment":
        return _posterior_moment(fwd, bwd)
    return _posterior_canonical(fwd, bwd)


def dual_mean(fwd: GaussianMsg, bwd: GaussianMsg, method: Optional[str] = None) -> DualPair:
    """Dual mean xi~ = W~ (m_f - m_b) and, when available, W~.

    ``method`` forces one of the equivalent routes: "moments" uses the
    definition, "forward" uses xi_f - W_f m and "backward" uses W_b m - xi_b.
    """
    _same_dim(fwd, bwd)
    if method is None:
        if bwd.is_flat:
            return DualPair(-bwd.xi.copy(), np.zeros_like(bwd.W))
        if fwd.is_flat:
            return DualPair(fwd.xi.copy(), np.zeros_like(fwd.W))
        method = "moments" if fwd.form == bwd.form == "moment" else (
            "forward" if fwd.form == "canonical" else "backward")
    if method == "moments":
        f, g = fwd.to_moment(), bwd.to_moment()
        Wt = _inv_checked(f.V + g.V, "V_f + V_b")
        return DualPair(Wt @ (f.m - g.m), Wt)
    post = posterior(fwd, bwd)
    if method == "forward":
        f = fwd.to_canonical()
        return DualPair(f.xi - f.W @ post.m, sym(f.W - f.W @ post.V @ f.W))
    if method == "backward":
        g = bwd.to_canonical()
        return DualPair(g.W @ post.m - g.xi, sym(g.W - g.W @ post.V @ g.W))
    raise MessageError(f"unknown dual_mean method {method!r}")
