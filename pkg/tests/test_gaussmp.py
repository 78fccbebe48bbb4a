import numpy as np
import pytest
from hypothesis import given, strategies as st

from l1path.gaussmp import (
    GaussianMsg, MessageError, SingularMessageError, UnsupportedBranchError, addition_fwd,
    dual_mean, equality_fwd, input_through_column, linear_bwd, linear_fwd, observe_through_row,
    posterior, tau_psd,
)
from conftest import random_psd


def _pd(rng, d):
    return random_psd(rng, d) + 0.5 * np.eye(d)


def test_forms_are_exclusive():
    with pytest.raises(MessageError):
        GaussianMsg("moment", m=np.zeros(1), V=np.eye(1), xi=np.zeros(1))
    with pytest.raises(MessageError):
        GaussianMsg("weird", m=np.zeros(1), V=np.eye(1))
    with pytest.raises(MessageError):
        GaussianMsg.moment([0.0, 1.0], np.eye(3))


def test_non_psd_rejected():
    with pytest.raises(MessageError):
        GaussianMsg.moment([0.0, 0.0], np.diag([1.0, -1.0]))
    with pytest.raises(MessageError):
        GaussianMsg.canonical([0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])


def test_tau_psd_scales_with_norm():
    assert tau_psd(np.zeros((2, 2))) == pytest.approx(1e-8)
    assert tau_psd(np.diag([3.0, 1.0])) == pytest.approx(4e-8)


def test_degenerate_flags():
    p = GaussianMsg.point([1.0, 2.0])
    f = GaussianMsg.flat([0.5])
    assert p.is_point and not p.is_flat
    assert f.is_flat and not f.is_point
    assert not GaussianMsg.moment([0.0], [[1e-300]]).is_point


def test_conversions_roundtrip(rng):
    for d in range(1, 7):
        V = _pd(rng, d)
        z = GaussianMsg.moment(rng.normal(size=d), V)
        back = z.to_canonical().to_moment()
        np.testing.assert_allclose(back.m, z.m, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(back.V, z.V, rtol=1e-9, atol=1e-9)


def test_singular_conversion_raises():
    with pytest.raises(SingularMessageError):
        GaussianMsg.point([1.0]).to_canonical()
    with pytest.raises(SingularMessageError):
        GaussianMsg.flat([1.0, 0.0]).to_moment()


def test_elementary_rules_small():
    a = GaussianMsg.canonical([1.0], [[2.0]])
    b = GaussianMsg.canonical([3.0], [[1.0]])
    e = equality_fwd(a, b)
    assert e.xi[0] == 4.0 and e.W[0, 0] == 3.0
    s = addition_fwd(GaussianMsg.moment([1.0], [[2.0]]), GaussianMsg.moment([2.0], [[1.0]]))
    assert s.m[0] == 3.0 and s.V[0, 0] == 3.0
    with pytest.raises(MessageError):
        equality_fwd(a, GaussianMsg.moment([0.0], [[1.0]]))


def _joint_posterior(mf, Vf, mb, Vb):
    Wf, Wb = np.linalg.inv(Vf), np.linalg.inv(Vb)
    V = np.linalg.inv(Wf + Wb)
    return V @ (Wf @ mf + Wb @ mb), V


def test_posterior_and_dual_routes_1000_instances(rng):
    """All posterior and dual-mean routes agree on random nondegenerate pairs."""
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        mf, mb = rng.normal(size=d), rng.normal(size=d)
        Vf, Vb = _pd(rng, d), _pd(rng, d)
        fm, bm = GaussianMsg.moment(mf, Vf), GaussianMsg.moment(mb, Vb)
        m_ref, V_ref = _joint_posterior(mf, Vf, mb, Vb)
        for f, b in ((fm, bm), (fm.to_canonical(), bm), (fm, bm.to_canonical()),
                     (fm.to_canonical(), bm.to_canonical())):
            p = posterior(f, b)
            worst = max(worst, np.abs(p.m - m_ref).max(), np.abs(p.V - V_ref).max())
        xi_ref = np.linalg.solve(Vf + Vb, mf - mb)
        for method in ("moments", "forward", "backward"):
            dp = dual_mean(fm, bm, method)
            worst = max(worst, np.abs(dp.xi_t - xi_ref).max() / (1 + np.abs(xi_ref).max()))
    assert worst < 1e-8


def test_posterior_degenerate_cases():
    pt = GaussianMsg.point([1.0, -1.0])
    other = GaussianMsg.moment([5.0, 5.0], np.eye(2))
    assert np.array_equal(posterior(pt, other).m, [1.0, -1.0])
    assert np.array_equal(posterior(other, pt).m, [1.0, -1.0])
    fl = GaussianMsg.flat([0.0, 0.0])
    p = posterior(fl, other)
    np.testing.assert_allclose(p.m, [5.0, 5.0])
    with pytest.raises(MessageError):
        posterior(fl, GaussianMsg.flat([1.0, 0.0]))


def test_dual_mean_flat_backward():
    fwd = GaussianMsg.moment([1.0], [[2.0]])
    assert dual_mean(fwd, GaussianMsg.flat([0.25])).xi_t[0] == -0.25
    assert dual_mean(GaussianMsg.flat([0.5]), fwd).xi_t[0] == 0.5


def test_linear_rules_match_dense(rng):
    for _ in range(200):
        d, k = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        A = rng.normal(size=(k, d))
        z = GaussianMsg.moment(rng.normal(size=d), _pd(rng, d))
        out = linear_fwd(A, z)
        np.testing.assert_allclose(out.V, A @ z.V @ A.T, atol=1e-12)
        w = GaussianMsg.canonical(rng.normal(size=k), _pd(rng, k))
        back = linear_bwd(A, w)
        np.testing.assert_allclose(back.xi, A.T @ w.xi, atol=1e-12)
    with pytest.raises(MessageError):
        linear_fwd(np.eye(3), GaussianMsg.moment([0.0], [[1.0]]))


def test_observe_through_row_point_matches_conditioning(rng):
    for _ in range(300):
        d = int(rng.integers(1, 7))
        m, V = rng.normal(size=d), _pd(rng, d)
        c = rng.normal(size=d)
        y = float(rng.normal())
        out = observe_through_row(GaussianMsg.moment(m, V), c, GaussianMsg.point([y]))
        # conditioning on c^T x = y: the result satisfies the constraint exactly
        assert c @ out.m == pytest.approx(y, abs=1e-9 * (1 + abs(y)))
        assert abs(c @ out.V @ c) < 1e-9 * (1 + np.abs(V).max())


def test_observe_through_row_flat_shifts_mean():
    out = observe_through_row(GaussianMsg.moment([0.0, 0.0], np.diag([2.0, 1.0])),
                              [1.0, 0.0], GaussianMsg.flat([0.5]))
    np.testing.assert_allclose(out.m, [1.0, 0.0])


def test_observe_and_input_reject_gaussian_scalars():
    z = GaussianMsg.moment([0.0], [[1.0]])
    with pytest.raises(UnsupportedBranchError):
        observe_through_row(z, [1.0], GaussianMsg.moment([0.0], [[1.0]]))
    w = GaussianMsg.canonical([0.0], [[1.0]])
    with pytest.raises(UnsupportedBranchError):
        input_through_column(w, [1.0], GaussianMsg.moment([0.0], [[1.0]]))


def test_input_through_column_flat_is_marginalization(rng):
    """A flat input with zero slope integrates U out: W' = W - W b b^T W / b^T W b."""
    for _ in range(300):
        d = int(rng.integers(1, 7))
        W, xi, b = _pd(rng, d), rng.normal(size=d), rng.normal(size=d)
        out = input_through_column(GaussianMsg.canonical(xi, W), b, GaussianMsg.flat([0.0]))
        np.testing.assert_allclose(out.W @ b, 0.0, atol=1e-9 * (1 + np.abs(W).max()))
        assert b @ out.xi == pytest.approx(0.0, abs=1e-9 * (1 + np.abs(xi).max() * np.abs(b).max()))


def test_input_through_column_singular():
    with pytest.raises(SingularMessageError):
        input_through_column(GaussianMsg.canonical([0.0, 0.0], np.diag([1.0, 0.0])), [0.0, 1.0],
                             GaussianMsg.flat([0.0]))


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_posterior_symmetric_in_arguments(d, seed):
    rng = np.random.default_rng(seed)
    f = GaussianMsg.moment(rng.normal(size=d), _pd(rng, d))
    b = GaussianMsg.moment(rng.normal(size=d), _pd(rng, d))
    p, q = posterior(f, b), posterior(b, f)
    np.testing.assert_allclose(p.m, q.m, atol=1e-9)
    np.testing.assert_allclose(p.V, q.V, atol=1e-9)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_dual_mean_antisymmetric(d, seed):
    rng = np.random.default_rng(seed)
    f = GaussianMsg.moment(rng.normal(size=d), _pd(rng, d))
    b = GaussianMsg.moment(rng.normal(size=d), _pd(rng, d))
    np.testing.assert_allclose(dual_mean(f, b).xi_t, -dual_mean(b, f).xi_t, atol=1e-9)
