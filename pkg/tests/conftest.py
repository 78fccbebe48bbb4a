import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("thorough", parent=settings.get_profile("default"), max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_psd(rng, d, rank=None, scale=1.0):
    rank = d if rank is None else rank
    G = rng.normal(size=(d, rank))
    return scale * G @ G.T


def random_model(rng, side, max_m=4, max_n=12, fixed=None):
    """Random stable model with invertible weights and mixed L1 / Vapnik costs."""
    from l1path.plcost import make_l1, make_vapnik
    from l1path.ssm import INPUT, make_model

    M, N = int(rng.integers(1, max_m + 1)), int(rng.integers(1, max_n + 1))
    Q, _ = np.linalg.qr(rng.normal(size=(M, M)))
    A = Q * rng.uniform(0.6, 1.0)
    costs = [make_vapnik(-0.5, 0.5) if rng.random() < 0.5 else make_l1(rng.normal())
             for _ in range(N)]
    if fixed is None:
        fixed = side == INPUT and rng.random() < 0.3
    return make_model(A, rng.normal(size=(N, M)), rng.normal(size=(N, M)),
                      Q0=random_psd(rng, M) + 0.1 * np.eye(M), QN=random_psd(rng, M) + 0.1 * np.eye(M),
                      x0_breve=rng.normal(size=M), xN_breve=rng.normal(size=M),
                      y_breve=rng.normal(size=N), costs=costs, side=side, fixed_initial_state=fixed)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: timing-based checks")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
