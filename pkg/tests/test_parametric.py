import numpy as np
import pytest
from hypothesis import given, strategies as st

from l1path.parametric import (
    INV_SIGMA2, SIGMA2, DegreeError, ParamAffine, eval_at, param_bffd, param_ffbdd,
)
from l1path.plcost import SegmentGaussParams, make_l1, segment_params
from l1path.solvers import bffd, ffbdd
from l1path.ssm import INPUT, OUTPUT, make_model, median_smoother_model
from conftest import random_model


def _rel(a, b):
    return float(np.max(np.abs(a - b), initial=0.0)) / max(1.0, float(np.max(np.abs(b), initial=0.0)))


def test_affine_arithmetic():
    a = ParamAffine(SIGMA2, 2.0, 1.0)
    b = ParamAffine(INV_SIGMA2, 3.0, 0.0)
    prod = a * b  # (2 s + 1) * 3 / s = 6 + 3 / s
    assert prod.param == INV_SIGMA2 and float(prod.c1) == 3.0 and float(prod.c0) == 6.0
    assert eval_at(a + 1.0, 2.0) == 6.0
    assert eval_at(a - a, 5.0) == 0.0
    with pytest.raises(DegreeError):
        a * a
    with pytest.raises(DegreeError):
        a + b


def test_matrix_products_cancel_parameters():
    H = ParamAffine(SIGMA2, np.eye(2) * 2.0, np.zeros((2, 2)))
    W = ParamAffine(INV_SIGMA2, np.diag([1.0, 3.0]), np.zeros((2, 2)))
    P = H @ W
    assert P.is_const
    np.testing.assert_allclose(P.c0, np.diag([2.0, 6.0]))


def test_inverse_switches_parameter():
    V = ParamAffine(SIGMA2, 4.0, 0.0)
    W = V.inverse()
    assert W.param == INV_SIGMA2 and W.at(2.0) == pytest.approx(1 / 8)
    with pytest.raises(DegreeError):
        ParamAffine(SIGMA2, 1.0, 1.0).inverse()


def test_shapes_checked():
    with pytest.raises(ValueError):
        ParamAffine(SIGMA2, np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        ParamAffine("t", 0.0, 0.0)


def test_backward_message_single_observation():
    # y = u with target 2: mb = 2 and Vb = sigma^2
    m = make_model([[0.0]], [[1.0]], [[1.0]], y_breve=[2.0], costs=[make_l1()],
                   fixed_initial_state=True)
    p = param_bffd(m, [make_l1().segment(2)])
    assert float(p.mb_U.c0[0]) == pytest.approx(2.0) and float(p.mb_U.c1[0]) == 0.0
    assert p.Vb_U.is_linear and float(p.Vb_U.c1[0]) == pytest.approx(1.0)
    assert p.u_hat.at(0.5)[0] == pytest.approx(1.5)


def test_point_clamped_observations_give_constant_outputs(rng):
    y = rng.normal(size=6)
    m = median_smoother_model(y)
    act = [SegmentGaussParams.point(v) for v in y]
    p = param_ffbdd(m, act)
    assert not p.y1.any()
    np.testing.assert_allclose(p.y0, y)


def test_qn_zero_gives_zero_terminal_dual(rng):
    m = median_smoother_model(rng.normal(size=5))
    p = param_ffbdd(m, [c.segment(0) for c in m.shifted_costs()])
    assert not p.d1[-1].any() and not p.d0[-1].any()


@given(st.integers(0, 2**32 - 1))
def test_param_bffd_matches_concrete(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, INPUT)
    act = [k.segment(int(rng.integers(k.n_segments))) for k in m.costs]
    p = param_bffd(m, act)
    for s2 in 10 ** rng.uniform(-3, 3, 4):
        o = bffd(m, s2, [segment_params(a) for a in act])
        assert _rel(p.u_hat.at(s2), o.u_hat) < 1e-9
        assert _rel(p.x_hat.at(s2), o.x_hat) < 1e-9


@given(st.integers(0, 2**32 - 1))
def test_param_ffbdd_matches_concrete(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, OUTPUT)
    act = [k.segment(int(rng.integers(k.n_segments))) for k in m.shifted_costs()]
    p = param_ffbdd(m, act)
    for s2 in 10 ** rng.uniform(-3, 3, 4):
        o = ffbdd(m, s2, [segment_params(a) for a in act])
        assert _rel(p.y_hat.at(s2), o.y_hat) < 1e-9
        assert _rel(p.u_hat.at(s2), o.u_hat) < 1e-9
        assert _rel(p.xi_tilde_X.at(s2), o.xi_tilde_X) < 1e-9


def test_active_length_checked():
    m = median_smoother_model(np.zeros(3))
    with pytest.raises(ValueError):
        param_ffbdd(m, [m.costs[0].segment(0)])


def two_input_model():
    """Two inputs into a 2-d state; the first input's backward message is N(s2 + 2, 2 s2)
    when the second input sits on the right line of |u|."""
    return make_model(np.eye(2), [[1, 0], [1, 1]], [[0, 0], [1, 0]], QN=np.diag([0.0, 1.0]),
                      y_breve=[0.0, 2.0], costs=[make_l1()] * 2, fixed_initial_state=True)


def test_two_input_backward_message():
    p = param_bffd(two_input_model(), [make_l1().segment(1), make_l1().segment(2)])
    assert (float(p.mb_U.c1[0]), float(p.mb_U.c0[0])) == pytest.approx((1.0, 2.0))
    assert (float(p.Vb_U.c1[0]), float(p.Vb_U.c0[0])) == pytest.approx((2.0, 0.0))
