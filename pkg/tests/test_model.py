import math

import numpy as np
import pytest
from pydantic import ValidationError

from bequest.model import (
    ModelParams,
    Regime,
    alpha_residuals,
    classify_regime,
    derive_constants,
    market_price_ratio,
    q_residual,
)

from .conftest import make_params, random_params


def test_standard_constants():
    params = make_params(c=0.0)
    k = derive_constants(params)
    assert k.m == pytest.approx(0.02, abs=1e-15)
    assert k.q == pytest.approx(0.5, abs=1e-12)
    assert k.alpha1 == pytest.approx(2.0, abs=1e-12)
    assert k.alpha2 == pytest.approx(-1.0, abs=1e-12)
    assert k.p == pytest.approx(2.0, abs=1e-12)
    assert k.w_safe == 1.0
    assert k.regime is Regime.ZERO
    assert abs(q_residual(params, k)) < 1e-14
    assert all(abs(res) < 1e-14 for res in alpha_residuals(params, k))


def test_regime_and_safe_level():
    low = derive_constants(make_params(c=0.02))
    assert low.regime is Regime.LOW
    assert low.w_safe == 1.0
    high = derive_constants(make_params(c=0.06))
    assert high.regime is Regime.HIGH
    assert high.w_safe == pytest.approx(1.5)


def test_tie_is_low_consumption():
    assert classify_regime(make_params(c=0.04)) is Regime.LOW


def test_coefficient_identities():
    k = derive_constants(make_params())
    assert k.a1_coef + k.a2_coef == pytest.approx(1.0, abs=1e-14)
    assert k.b1_coef + k.b2_coef == pytest.approx(1.0, abs=1e-14)
    assert k.a1_coef / k.alpha1 == pytest.approx(k.b1_coef, rel=1e-14)


def test_random_draws_respect_root_bounds(rng):
    for _ in range(10_000):
        params = random_params(rng, rng.choice(["zero", "low", "high"]))
        k = derive_constants(params)
        assert 0.0 < k.q < 1.0
        assert k.alpha1 > 1.0
        assert k.alpha2 < 0.0
        assert k.p > 1.0
        assert abs(q_residual(params, k)) < 1e-12
        assert all(abs(res) < 1e-12 for res in alpha_residuals(params, k))
        assert 1.0 - k.q == pytest.approx(1.0 / (1.0 - k.alpha2), abs=1e-12)


def test_q_monotone_in_hazard_and_market_price():
    base = make_params(c=0.0)
    for lam in np.linspace(0.01, 0.1, 10):
        p = base.replace(lam=lam)
        assert derive_constants(p.replace(lam=lam * 1.01)).q > derive_constants(p).q
    for sigma in np.linspace(0.1, 0.4, 10):
        # larger sigma means smaller m
        p = base.replace(sigma=sigma)
        assert derive_constants(p.replace(sigma=sigma * 1.01)).q > derive_constants(p).q


def test_sigma_squared_one_minus_q_increases_with_sigma():
    base = make_params(c=0.0)
    values = [s ** 2 * (1.0 - derive_constants(base.replace(sigma=s)).q) for s in np.linspace(0.05, 1.0, 40)]
    assert np.all(np.diff(values) > 0.0)


@pytest.mark.parametrize(
    "changes",
    [
        {"mu": 0.04},
        {"mu": 0.03},
        {"sigma": 0.0},
        {"r": 0.0},
        {"lam": 0.0},
        {"c": -0.01},
        {"b": 0.0},
        {"mu": math.nan},
        {"c": math.inf},
    ],
)
def test_invalid_params_rejected(changes):
    with pytest.raises(ValidationError):
        make_params(**changes)


def test_lambda_alias_and_replace():
    params = ModelParams(**{"mu": 0.08, "r": 0.04, "sigma": 0.2, "lambda": 0.05, "c": 0.0, "b": 1.0})
    assert params.lam == 0.05
    assert params.replace(**{"lambda": 0.06}).lam == 0.06
    assert params.as_dict()["lambda"] == 0.05
    with pytest.raises(ValidationError):
        params.replace(mu=0.01)


def test_market_price_ratio():
    assert market_price_ratio(make_params()) == pytest.approx(1.0)
