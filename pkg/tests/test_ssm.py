import json

import numpy as np
import pytest

from l1path.plcost import make_l1, make_vapnik
from l1path.ssm import (
    INPUT, OUTPUT, ModelError, cost_from_spec, lasso_model, make_model, median_smoother_model,
    model_from_dict, model_to_dict, output_model, simulate, trend_filter_model, validate,
)


def test_lasso_model_reproduces_Fu(rng):
    F = rng.normal(size=(5, 3))
    m = lasso_model(F, rng.normal(size=5))
    u = rng.normal(size=3)
    x, _ = simulate(m, m.x0_breve, u)
    np.testing.assert_allclose(x[-1], F @ u, atol=1e-12)
    assert m.side == INPUT and m.fixed_initial_state and m.N == 3 and m.M == 5


def test_output_model_outputs(rng):
    F = rng.normal(size=(4, 2))
    m = output_model(F, rng.normal(size=4))
    x0 = rng.normal(size=2)
    _, y = simulate(m, x0, np.zeros(4))
    np.testing.assert_allclose(y, F @ x0, atol=1e-12)
    assert m.side == OUTPUT
    with pytest.raises(ModelError):
        output_model(F, np.zeros(4), q0=0.0)


def test_trend_filter_is_piecewise_linear():
    y = np.arange(6.0)
    m = trend_filter_model(y)
    u = np.zeros(6)
    u[2] = 1.0
    _, out = simulate(m, np.array([0.0, 1.0]), u)
    # level increments by the slope; the slope kicks at n = 2
    assert np.allclose(np.diff(out), [1, 1, 2, 2, 2])
    with pytest.raises(ModelError):
        trend_filter_model([1.0])


def test_median_smoother_needs_q0():
    with pytest.raises(ModelError):
        median_smoother_model(np.zeros(4), q0=0.0)
    m = median_smoother_model(np.zeros(4))
    assert m.side == OUTPUT and not m.QN.any()


def test_validation_messages():
    with pytest.raises(ModelError, match="b has shape"):
        make_model(np.eye(2), np.zeros((3, 2)), np.zeros((3, 2)), y_breve=np.zeros(4))
    with pytest.raises(ModelError, match="entries per row"):
        make_model(np.eye(2), np.zeros((3, 3)), np.zeros((3, 2)))
    with pytest.raises(ModelError, match="negative eigenvalue"):
        make_model(np.eye(1), np.ones((2, 1)), np.ones((2, 1)), Q0=[[-1.0]])
    with pytest.raises(ModelError, match="costs"):
        make_model(np.eye(1), np.ones((2, 1)), np.ones((2, 1)), costs=[make_l1()])
    with pytest.raises(ModelError, match="non-finite"):
        make_model(np.eye(1), np.ones((2, 1)), np.ones((2, 1)), y_breve=[0.0, np.nan])
    m = lasso_model(np.eye(2), [1.0, 2.0])
    assert validate(m) == []


def test_shifted_costs_on_output_side():
    m = output_model(np.eye(2), [3.0, -1.0], [make_l1(0.0)] * 2)
    sc = m.shifted_costs()
    assert sc[0].breakpoints.tolist() == [3.0] and sc[1].breakpoints.tolist() == [-1.0]
    li = lasso_model(np.eye(2), [3.0, -1.0])
    assert li.shifted_costs()[0].breakpoints.tolist() == [0.0]


def test_model_dict_roundtrip(rng):
    m = output_model(rng.normal(size=(3, 2)), rng.normal(size=3), [make_vapnik(-1, 1)] * 3, q0=2.0)
    back = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
    assert back.side == m.side and np.array_equal(back.c, m.c) and np.array_equal(back.Q0, m.Q0)
    assert back.costs[0].breakpoints.tolist() == [-1.0, 1.0]


def test_cost_specs():
    assert cost_from_spec({"type": "l1", "center": 2.0}).breakpoints.tolist() == [2.0]
    assert cost_from_spec({"type": "vapnik", "a": -1, "b": 1}).n_segments == 5
    assert cost_from_spec({"breakpoints": [0.0], "slopes": [0.0, 1.0]})(2.0) == 2.0
    with pytest.raises(ModelError):
        cost_from_spec({"type": "nope"})
    with pytest.raises(ModelError):
        model_from_dict({"A": [[1.0]], "b": [[1.0]], "c": [[1.0]], "bogus": 1})


def test_replace_revalidates():
    m = lasso_model(np.eye(2), [1.0, 2.0])
    with pytest.raises(ModelError):
        m.replace(Q0=-np.eye(2))
