import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l1path.oracle import (
    _prox, brute_force_active_sets, dense_problem, kkt_residual_input, kkt_residual_output,
    objective, solve_input_reg, solve_output_reg,
)
from l1path.plcost import make_hinge1, make_l1, make_vapnik
from l1path.ssm import INPUT, OUTPUT, lasso_model, output_model, simulate

from conftest import random_model


def test_prox_soft_threshold():
    a, s = np.array([[0.0]]), np.array([[-1.0, 1.0]])
    v = np.array([-3.0, -0.5, 0.0, 0.7, 2.0])
    x, seg = _prox(v, 1.0, np.repeat(a, 5, 0), np.repeat(s, 5, 0))
    np.testing.assert_array_equal(x, np.sign(v) * np.maximum(np.abs(v) - 1.0, 0.0))
    np.testing.assert_array_equal(seg, [0, 1, 1, 1, 2])


@settings(max_examples=40)
@given(st.floats(-5, 5), st.floats(0.01, 3))
def test_prox_minimizes(v, t):
    c = make_vapnik(-0.5, 1.0)
    a, s = c.breakpoints[None, :], c.slopes[None, :]
    x, _ = _prox(np.array([v]), t, a, s)
    f = lambda z: 0.5 * (z - v) ** 2 + t * c.eval(z)
    grid = np.linspace(-8, 8, 4001)
    assert f(x[0]) <= min(f(g) for g in grid) + 1e-12


@pytest.mark.parametrize("side", [INPUT, OUTPUT])
def test_dense_form_matches_simulation(rng, side):
    for _ in range(10):
        m = random_model(rng, side)
        prob = dense_problem(m)
        z = rng.normal(size=prob.nz)
        x0, u = prob.split(z)
        s2 = float(rng.uniform(0.1, 2.0))
        assert prob.objective(z, s2) == pytest.approx(objective(m, s2, u, x0 if prob.nx0 else None),
                                                      rel=1e-10, abs=1e-10)


def test_scalar_lasso_closed_form():
    # min (u - 3)^2 + 2 s2 |u| -> u = 3 - s2
    m = lasso_model(np.eye(1), [3.0])
    u, rep = solve_input_reg(m, 1.0)
    assert rep.converged and u[0] == pytest.approx(2.0, abs=1e-12)
    assert kkt_residual_input(m, 1.0, [2.0]) < 1e-12
    assert kkt_residual_input(m, 1.0, [2.5]) == pytest.approx(1.0)


def test_input_solver_against_brute_force(rng):
    for _ in range(15):
        L, K = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        m = lasso_model(rng.normal(size=(L, K)), rng.normal(size=L), [make_hinge1(0.2)] * K)
        s2 = float(10 ** rng.uniform(-1, 0.5))
        u, rep = solve_input_reg(m, s2)
        ub = brute_force_active_sets(m, s2)
        assert rep.converged
        assert objective(m, s2, u) == pytest.approx(objective(m, s2, ub), abs=1e-9)


def test_output_solver_against_brute_force(rng):
    for _ in range(15):
        K, L = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        m = output_model(rng.normal(size=(L, K)), rng.normal(size=L), [make_l1()] * L)
        s2 = float(10 ** rng.uniform(-1, 0.5))
        u, y, rep = solve_output_reg(m, s2)
        ub, yb, x0b = brute_force_active_sets(m, s2)
        assert rep.converged
        assert rep.objective == pytest.approx(objective(m, s2, ub, x0b), abs=1e-9)
        _, ysim = simulate(m, rep.x0, u)
        np.testing.assert_allclose(y, ysim, atol=1e-10)
        assert kkt_residual_output(m, s2, u, rep.x0) < 1e-8


def test_solvers_reject_wrong_side():
    with pytest.raises(ValueError):
        solve_input_reg(output_model(np.eye(1), [1.0]), 1.0)
    with pytest.raises(ValueError):
        solve_output_reg(lasso_model(np.eye(1), [1.0]), 1.0)


def test_brute_force_limit():
    m = lasso_model(np.eye(20), np.ones(20))
    with pytest.raises(ValueError, match="exceed"):
        brute_force_active_sets(m, 1.0)
