import math

import numpy as np
import pytest

from bequest.errors import ConfigError, RegimeError
from bequest.montecarlo import (
    MAX_DT,
    SimConfig,
    _advance,
    check_no_ruin_zero_c,
    check_step_refinement,
    compare_to_benchmark,
    hjb_residual,
    hjb_residuals,
    laplace_hitting_check,
    simulate,
)
from bequest.primal import eval_phi, solve, zero_consumption_strategy
from bequest.settings import MonteCarloSettings

from .conftest import make_params


@pytest.mark.parametrize(
    "changes",
    [
        {"n_paths": 0},
        {"dt": 1.0 / 100.0},
        {"dt": 0.0},
        {"w0": -0.1},
        {"w0": math.nan},
        {"horizon_cap": -1.0},
        {"block_size": 0},
        {"n_jobs": 0},
        {"strategy": "all-in"},
    ],
)
def test_invalid_config_rejected(changes):
    values = dict(w0=0.5)
    values.update(changes)
    with pytest.raises(ConfigError):
        SimConfig(**values)


def test_short_horizon_rejected(low_params):
    config = SimConfig(w0=0.5, horizon_cap=100.0)
    with pytest.raises(ConfigError):
        config.horizon(low_params)
    assert SimConfig(w0=0.5).horizon(low_params) == pytest.approx(50.0 / low_params.lam)


def test_start_at_zero_is_ruin(low_params, low_solution):
    result = simulate(low_params, SimConfig(w0=0.0, n_paths=100), low_solution)
    assert result.p_hat == 0.0
    assert result.n_ruined == 100


@pytest.mark.parametrize("name", ["low_solution", "high_solution"])
def test_start_at_safe_level_succeeds(name, request):
    solution = request.getfixturevalue(name)
    result = simulate(solution.params, SimConfig(w0=solution.w_safe, n_paths=100), solution)
    assert result.p_hat == 1.0
    assert result.n_safe == 100
    assert result.std_err == 0.0


def test_same_seed_reproduces_across_workers(low_params, low_solution):
    base = SimConfig(w0=0.5, n_paths=600, seed=11, block_size=200)
    first = simulate(low_params, base, low_solution)
    again = simulate(low_params, base, low_solution)
    spread = simulate(low_params, SimConfig(w0=0.5, n_paths=600, seed=11, block_size=200, n_jobs=2), low_solution)
    assert first == again
    assert first == spread


def test_callable_strategy_without_solution(zero_params, zero_solution):
    config = SimConfig(w0=0.5, n_paths=200, seed=3, strategy=lambda w: zero_consumption_strategy(zero_solution, w))
    assert simulate(zero_params, config).n_paths == 200


def test_hjb_residual_closed_form(zero_solution):
    grid = np.linspace(0.0, 1.0, 1001)
    assert hjb_residual(zero_solution, grid) < 1e-10
    assert hjb_residuals(zero_solution, grid).size == 999


def test_hjb_residual_skips_goal_with_kink(high_solution):
    grid = np.array([0.5, 1.0, 1.25])
    assert hjb_residuals(high_solution, grid).size == 2


def test_zero_consumption_checks_need_c_zero(low_params):
    config = SimConfig(w0=0.5, n_paths=10)
    with pytest.raises(RegimeError):
        check_no_ruin_zero_c(low_params, config)
    with pytest.raises(RegimeError):
        laplace_hitting_check(low_params, config)


def test_unknown_benchmark(low_params):
    with pytest.raises(ConfigError):
        compare_to_benchmark(low_params, SimConfig(w0=0.5, n_paths=10), "all-in")


def test_bridge_crossing_ruins_between_grid_points(low_params):
    w = np.array([0.05, 0.05])
    h = np.full(2, MAX_DT)
    w_next, ruined, safe = _advance(low_params, lambda x: np.full_like(x, 5.0), w, h, np.zeros(2),
                                    np.array([0.2, 0.35]), 1.0)
    vol2 = 1.0 * MAX_DT
    p_down = math.exp(-2.0 * w[0] * w_next[0] / vol2)
    assert 0.2 < p_down < 0.35
    assert np.all(w_next > 0.0)
    assert ruined.tolist() == [True, False]
    assert not safe.any()


def test_bridge_crossing_reaches_safe_level(low_params):
    w = np.array([0.98, 0.98])
    h = np.full(2, MAX_DT)
    w_next, ruined, safe = _advance(low_params, lambda x: np.full_like(x, 5.0), w, h, np.zeros(2),
                                    np.array([0.5, 0.9]), 1.0)
    p_up = math.exp(-2.0 * (1.0 - w[0]) * (1.0 - w_next[0]) / MAX_DT)
    assert 0.5 < p_up < 0.9
    assert np.all(w_next < 1.0)
    assert not ruined.any()
    assert safe.tolist() == [True, False]


def test_no_crossing_without_volatility(low_params):
    w = np.array([1e-4])
    w_next, ruined, safe = _advance(low_params, np.zeros_like, w, np.full(1, MAX_DT), np.zeros(1),
                                    np.zeros(1), 1.0)
    assert w_next[0] < w[0]
    assert not ruined[0] and not safe[0]


def test_refinement_from_safe_level(low_params, low_solution):
    report = check_step_refinement(low_params, SimConfig(w0=1.0, n_paths=50), low_solution)
    assert report.coarse.p_hat == report.fine.p_hat == 1.0
    assert report.passed


def test_refinement_is_reproducible(high_params, high_solution):
    config = SimConfig(w0=0.3, n_paths=40, seed=6, block_size=16, dt=MAX_DT)
    first = check_step_refinement(high_params, config, high_solution)
    spread = check_step_refinement(high_params, SimConfig(w0=0.3, n_paths=40, seed=6, block_size=16, n_jobs=2),
                                   high_solution)
    assert first == spread
    assert first.coarse.n_paths == first.fine.n_paths == 40


ACCEPTANCE_C = (0.0, 0.01, 0.02, 0.04, 0.06)
ACCEPTANCE_FRACTIONS = (0.1, 0.3, 0.6, 0.9)


@pytest.mark.slow
def test_estimate_matches_success_probability_grid():
    inside = 0
    misses = []
    for c in ACCEPTANCE_C:
        solution = solve(make_params(c=c))
        for fraction in ACCEPTANCE_FRACTIONS:
            w0 = fraction * solution.w_safe
            result = simulate(solution.params, SimConfig(w0=w0, n_paths=20_000, seed=2024, n_jobs=-1), solution)
            gap = abs(result.p_hat - eval_phi(solution, w0))
            assert result.n_capped == 0
            if gap <= 3.0 * result.std_err:
                inside += 1
            else:
                misses.append((c, w0, gap / result.std_err))
    assert inside >= 19, misses


@pytest.mark.slow
@pytest.mark.parametrize("c,w0", [(0.06, 0.15), (0.02, 0.1), (0.06, 1.2)])
def test_estimate_matches_success_probability(c, w0):
    params = make_params(c=c)
    result = simulate(params, SimConfig(w0=w0, n_paths=20_000, seed=2024))
    expected = eval_phi(solve(params), w0)
    assert abs(result.p_hat - expected) <= 3.0 * result.std_err
    assert result.n_capped == 0


@pytest.mark.slow
def test_standard_error_shrinks_with_more_paths(low_params, low_solution):
    small = simulate(low_params, SimConfig(w0=0.5, n_paths=2000, seed=5), low_solution)
    large = simulate(low_params, SimConfig(w0=0.5, n_paths=8000, seed=5), low_solution)
    assert large.std_err < small.std_err
    assert large.std_err == pytest.approx(0.5 * small.std_err, rel=0.1)


@pytest.mark.slow
def test_step_refinement_agrees(high_params, high_solution):
    defaults = MonteCarloSettings()
    config = SimConfig(w0=0.1 * high_solution.w_safe, n_paths=defaults.n_paths, dt=defaults.dt, seed=defaults.seed)
    report = check_step_refinement(high_params, config, high_solution)
    assert report.coarse.n_paths == report.fine.n_paths == config.n_paths
    assert report.coarse.p_hat > 0.0
    assert abs(report.fine.p_hat - report.coarse.p_hat) < 2.0 * report.coarse.std_err
    assert report.passed


@pytest.mark.slow
def test_no_ruin_without_consumption(zero_params):
    report = check_no_ruin_zero_c(zero_params, SimConfig(w0=0.5, n_paths=2000, seed=17))
    assert report.n_ruined == 0
    assert report.vol_expected == pytest.approx(2.0, abs=1e-12)
    assert report.passed, report


@pytest.mark.slow
def test_discounted_hitting_time(zero_params):
    report = laplace_hitting_check(zero_params, SimConfig(w0=0.5, n_paths=2000, seed=23))
    assert report.expected == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert 0 < report.n_hit < 2000
    assert report.passed, report


@pytest.mark.slow
@pytest.mark.parametrize("benchmark", ["ruin-min", "zero-consumption", "ruin-at-safe"])
def test_optimal_not_beaten_by_benchmark(low_params, benchmark):
    comparison = compare_to_benchmark(low_params, SimConfig(w0=0.5, n_paths=3000, seed=31), benchmark)
    assert comparison.passed, comparison
    assert comparison.optimal.n_paths == comparison.alternative.n_paths == 3000
