import numpy as np
import pytest

from bequest.model import ModelParams
from bequest.primal import solve


def make_params(**changes) -> ModelParams:
    base = dict(mu=0.08, r=0.04, sigma=0.2, lam=0.04, c=0.02, b=1.0)
    base.update(changes)
    return ModelParams(**base)


def random_params(rng: np.random.Generator, regime: str) -> ModelParams:
    """Draw valid inputs whose consumption rate falls in the requested regime."""
    r = rng.uniform(0.01, 0.06)
    mu = r + rng.uniform(0.02, 0.08)
    sigma = rng.uniform(0.12, 0.35)
    lam = rng.uniform(0.01, 0.08)
    b = rng.uniform(0.5, 2.0)
    if regime == "zero":
        c = 0.0
    elif regime == "low":
        c = r * b * rng.uniform(0.05, 0.95)
    else:
        c = r * b * rng.uniform(1.1, 2.5)
    return ModelParams(mu=mu, r=r, sigma=sigma, lam=lam, c=c, b=b)


@pytest.fixture
def zero_params():
    return make_params(c=0.0)


@pytest.fixture
def low_params():
    return make_params(c=0.02)


@pytest.fixture
def high_params():
    return make_params(c=0.06)


@pytest.fixture
def zero_solution(zero_params):
    return solve(zero_params)


@pytest.fixture
def low_solution(low_params):
    return solve(low_params)


@pytest.fixture
def high_solution(high_params):
    return solve(high_params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
