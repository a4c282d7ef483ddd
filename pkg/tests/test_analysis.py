import math

import numpy as np
import pytest

from bequest.analysis import (
    LeveragingStatus,
    MonotonicityKind,
    check_b_independence,
    check_c_sensitivity,
    check_leveraging,
    check_zero_consumption_sensitivity,
    classify_monotonicity,
    compare_strategies,
    consumption_threshold,
    monotonicity_sign,
)
from bequest.errors import RegimeError
from bequest.model import derive_constants
from bequest.primal import eval_pi, solve, value_derivatives, wealth_of_ratio

from .conftest import make_params, random_params

# r >= lambda + m, so a consumption threshold exists
STEEP = dict(mu=0.08, r=0.06, sigma=0.2, lam=0.02, b=1.0)
N_DRAWS = 50


def closed_form_threshold(params):
    k = derive_constants(params)
    a1, a2 = k.alpha1, k.alpha2
    rhs = -a2 / (a1 - 1.0) * ((1.0 - a2) / a1) ** (-(1.0 - a2) / (a1 - 1.0))
    x = (a1 + a2 - 2.0) * rhs ** ((a1 - 1.0) / (a1 - a2))
    return params.r * params.b / (1.0 + x)


def turning_ratio(solution):
    k = solution.constants
    a1, a2 = k.alpha1, k.alpha2
    return (-a2 * (1.0 - a2) / (a1 * (a1 - 1.0))) ** (1.0 / (a1 - a2))


def pi_on_goal_interval(solution, n=400):
    w = np.linspace(0.0, solution.params.b, n + 1)[:-1]
    return w, value_derivatives(solution, w)[3]


def assert_turning_pattern(solution, report, n=201):
    """Finite-difference signs of pi* on [0, b) against the classification."""
    b = solution.params.b
    w = np.linspace(0.0, b, n + 1)[:-1]
    pi = value_derivatives(solution, w)[3]
    steps = np.diff(pi)
    noise = 1e-9 * max(1.0, float(np.max(np.abs(pi))))
    if report.kind is MonotonicityKind.INCREASING:
        assert np.all(steps > -noise)
    elif report.kind is MonotonicityKind.DECREASING:
        assert np.all(steps < noise)
    else:
        margin = 2.0 * b / n
        assert np.all(steps[w[1:] < report.w_star - margin] < noise)
        assert np.all(steps[w[:-1] > report.w_star + margin] > -noise)


def test_increasing_when_rate_below_hazard():
    for lam in (0.04, 0.06):
        solution = solve(make_params(lam=lam))
        report = classify_monotonicity(solution)
        assert report.kind is MonotonicityKind.INCREASING
        assert report.case == "i"
        assert report.w_star is None
        _, pi = pi_on_goal_interval(solution)
        assert np.all(np.diff(pi) > -1e-12)


def test_decreasing_then_increasing_between_thresholds():
    solution = solve(make_params(mu=0.10, r=0.04, sigma=0.2, lam=0.02, c=0.02, b=1.0))
    report = classify_monotonicity(solution)
    assert report.case == "ii"
    assert report.kind is MonotonicityKind.DECREASING_THEN_INCREASING
    assert report.c_star is None
    assert 0.0 < report.w_star < 1.0
    expected = float(wealth_of_ratio(solution, turning_ratio(solution)))
    assert report.w_star == pytest.approx(expected, rel=1e-9)
    assert_turning_pattern(solution, report)


def test_consumption_threshold_matches_closed_form():
    params = make_params(c=0.02, **STEEP)
    c_star = consumption_threshold(params)
    assert c_star == pytest.approx(closed_form_threshold(params), rel=1e-8)
    assert c_star == pytest.approx(0.0350, abs=5e-4)
    assert 0.0 < c_star < params.r * params.b


def test_no_threshold_below_rate_condition():
    assert consumption_threshold(make_params()) is None


def test_small_consumption_turns_once():
    solution = solve(make_params(c=0.0175, **STEEP))
    report = classify_monotonicity(solution)
    assert report.case == "iii"
    assert report.kind is MonotonicityKind.DECREASING_THEN_INCREASING
    expected = float(wealth_of_ratio(solution, turning_ratio(solution)))
    assert report.w_star == pytest.approx(expected, rel=1e-9)
    w, pi = pi_on_goal_interval(solution)
    steps = np.diff(pi)
    before = w[1:] < report.w_star - 0.01
    after = w[:-1] > report.w_star + 0.01
    assert np.all(steps[before] < 0.0)
    assert np.all(steps[after] > 0.0)


def test_large_consumption_decreases_everywhere():
    solution = solve(make_params(c=0.0475, **STEEP))
    report = classify_monotonicity(solution)
    assert report.case == "iv"
    assert report.kind is MonotonicityKind.DECREASING
    assert report.f_at_zb <= 0.0
    _, pi = pi_on_goal_interval(solution)
    assert np.all(np.diff(pi) < 0.0)


def test_sign_function_at_turning_ratio():
    solution = solve(make_params(c=0.0175, **STEEP))
    assert abs(float(monotonicity_sign(solution, turning_ratio(solution)))) < 1e-12


def test_classification_requires_low_consumption(zero_solution, high_solution):
    with pytest.raises(RegimeError):
        classify_monotonicity(zero_solution)
    with pytest.raises(RegimeError):
        classify_monotonicity(high_solution)


@pytest.mark.parametrize("c,b2", [(0.0, 1.5), (0.02, 1.5), (0.06, 2.0)])
def test_strategy_ignores_goal_below_smaller_goal(c, b2):
    report = check_b_independence(make_params(c=c), 1.0, b2, np.linspace(0.0, 1.0, 201))
    assert report.n_points == 200
    assert report.passed, report.max_deviation


def test_leveraged_with_volatility_threshold(zero_params):
    report = check_leveraging(zero_params)
    assert report.status is LeveragingStatus.ALWAYS
    assert report.ratio == pytest.approx(2.0, abs=1e-12)
    assert report.sigma_l > zero_params.sigma
    at_threshold = check_leveraging(zero_params.replace(sigma=report.sigma_l))
    assert at_threshold.ratio == pytest.approx(1.0, abs=1e-8)


def test_always_leveraged_for_high_hazard():
    report = check_leveraging(make_params(c=0.0, lam=0.06))
    assert report.status is LeveragingStatus.ALWAYS
    assert report.sigma_l is None
    assert report.ratio == pytest.approx(1.0 + math.sqrt(3.0), abs=1e-10)


def test_not_leveraged_at_high_volatility():
    report = check_leveraging(make_params(c=0.0, sigma=1.0))
    assert report.status is LeveragingStatus.NOT_ALWAYS
    assert report.ratio < 1.0


def test_leveraging_requires_zero_consumption(low_params):
    with pytest.raises(RegimeError):
        check_leveraging(low_params)


def test_comparison_with_crossing(low_solution):
    report = compare_strategies(low_solution, np.linspace(0.0, 1.0, 401))
    assert report.dominates_zero_consumption is False
    assert 0.0 < report.crossing_wealth < 1.0
    names = [check.name for check in report.checks]
    assert "above_zero_consumption_below_crossing" in names
    assert "below_zero_consumption_above_crossing" in names
    assert report.passed, report.checks


def test_comparison_dominating_zero_consumption():
    solution = solve(make_params(c=0.02, b=0.5))
    report = compare_strategies(solution, np.linspace(0.0, 0.5, 401))
    assert report.dominates_zero_consumption is True
    assert report.crossing_wealth is None
    assert report.passed, report.checks


def test_comparison_reports_jump_at_goal(high_solution):
    report = compare_strategies(high_solution, np.linspace(0.0, 1.0, 401))
    jump = next(check for check in report.checks if check.name == "downward_jump_at_goal")
    assert jump.min_slack == pytest.approx(eval_pi(high_solution, 1.0).jump)
    assert jump.min_slack > 0.0
    assert report.passed, report.checks


def test_comparison_needs_consumption(zero_solution):
    with pytest.raises(RegimeError):
        compare_strategies(zero_solution, np.linspace(0.0, 1.0, 11))


@pytest.mark.parametrize("c", [0.01, 0.02, 0.035])
def test_more_consumption_raises_small_wealth_investment(c):
    report = check_c_sensitivity(make_params(c=c))
    assert report.passed, report.derivative


def test_zero_consumption_sensitivities(zero_params):
    reports = {report.name: report for report in check_zero_consumption_sensitivity(zero_params)}
    assert reports["d_pi_d_lambda"].derivative > 0.0
    assert reports["d_pi_d_sigma"].derivative < 0.0
    assert all(report.passed for report in reports.values())


def test_sensitivity_regime_guards(zero_params, low_params):
    with pytest.raises(RegimeError):
        check_c_sensitivity(zero_params)
    with pytest.raises(RegimeError):
        check_zero_consumption_sensitivity(low_params)


@pytest.mark.parametrize("regime", ["zero", "low", "high"])
def test_goal_independence_random(regime, rng):
    for _ in range(N_DRAWS):
        params = random_params(rng, regime)
        b1 = params.b
        report = check_b_independence(params, b1, 1.5 * b1, np.linspace(0.0, b1, 201))
        assert report.n_points == 200
        assert report.passed, (params, report.max_deviation)


@pytest.mark.parametrize("regime", ["low", "high"])
def test_strategy_comparisons_random(regime, rng):
    for _ in range(N_DRAWS):
        solution = solve(random_params(rng, regime))
        report = compare_strategies(solution, np.linspace(0.0, solution.params.b, 201))
        assert report.passed, (solution.params, report.checks)


def test_downward_jump_at_goal_random(rng):
    for _ in range(N_DRAWS):
        solution = solve(random_params(rng, "high"))
        kink = eval_pi(solution, solution.params.b)
        assert kink.left > kink.right > 0.0
        report = compare_strategies(solution, np.linspace(0.0, solution.params.b, 201))
        jump = next(check for check in report.checks if check.name == "downward_jump_at_goal")
        assert jump.min_slack == pytest.approx(kink.jump)


def test_monotonicity_matches_finite_differences_random(rng):
    kinds = set()
    for _ in range(N_DRAWS):
        solution = solve(random_params(rng, "low"))
        report = classify_monotonicity(solution)
        kinds.add(report.kind)
        assert_turning_pattern(solution, report)
    assert MonotonicityKind.INCREASING in kinds
    assert len(kinds) >= 2
