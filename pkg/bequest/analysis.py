"""
Qualitative properties of the optimal investment strategy.

Each check returns a small report object carrying the numbers it was decided
on, so the verification crew can tabulate slacks next to pass/fail flags.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from .errors import RegimeError
from .model import ModelParams, Regime, derive_constants, market_price_ratio
from .primal import (
    Solution,
    eval_pi,
    eval_pi_one_sided,
    solve,
    value_derivatives,
    wealth_of_ratio,
)
from .roots import bisect_threshold, bracketed_root

logger = logging.getLogger(__name__)

B_INDEPENDENCE_TOL = 1e-9
SENSITIVITY_STEP = 1e-5


class MonotonicityKind(str, Enum):
    INCREASING = "IncreasingEverywhere"
    DECREASING_THEN_INCREASING = "DecreasingThenIncreasing"
    DECREASING = "DecreasingEverywhere"


class LeveragingStatus(str, Enum):
    ALWAYS = "AlwaysLeveraged"
    NOT_ALWAYS = "NotAlwaysLeveraged"


@dataclass(frozen=True)
class MonotonicityReport:
    kind: MonotonicityKind
    case: str
    w_star: Optional[float] = None
    c_star: Optional[float] = None
    f_at_z0: float = float("nan")
    f_at_zb: float = float("nan")


@dataclass(frozen=True)
class BIndependenceReport:
    b1: float
    b2: float
    max_deviation: float
    n_points: int

    @property
    def passed(self) -> bool:
        return self.max_deviation < B_INDEPENDENCE_TOL


@dataclass(frozen=True)
class LeveragingReport:
    status: LeveragingStatus
    ratio: float
    sigma_l: Optional[float] = None


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    min_slack: float
    n_points: int

    @property
    def passed(self) -> bool:
        return self.n_points == 0 or self.min_slack > 0.0


@dataclass
class StrategyComparison:
    checks: List[InequalityCheck] = field(default_factory=list)
    dominates_zero_consumption: Optional[bool] = None
    crossing_wealth: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


@dataclass(frozen=True)
class SensitivityReport:
    name: str
    derivative: float
    step: float
    expected_sign: int

    @property
    def passed(self) -> bool:
        return self.derivative * self.expected_sign > 0.0


def monotonicity_sign(solution: Solution, y) -> np.ndarray:
    """f(y), whose sign is the sign of d pi*/dw at the wealth mapped to y = z/z_0."""
    k = solution.constants
    y = np.asarray(y, dtype=float)
    log_y = np.log(y)
    with np.errstate(over="ignore"):
        return -(k.alpha1 * (k.alpha1 - 1.0) * np.exp((k.alpha1 - 1.0) * log_y)
                 + k.alpha2 * (1.0 - k.alpha2) * np.exp((k.alpha2 - 1.0) * log_y))


def consumption_threshold(params: ModelParams) -> Optional[float]:
    """
    c* in (0, rb] separating decreasing-then-increasing from decreasing
    strategies. Defined only when r >= lambda + m; None otherwise.
    """
    k = derive_constants(params)
    excess = k.alpha1 + k.alpha2 - 2.0
    if excess < 0.0:
        return None
    rb = params.r * params.b
    if excess == 0.0:
        return rb
    a1, a2 = k.alpha1, k.alpha2
    log_rhs = math.log(-a2 / (a1 - 1.0)) - (1.0 - a2) / (a1 - 1.0) * math.log((1.0 - a2) / a1)
    power = (a1 - a2) / (a1 - 1.0)

    # decreasing in c: positive below c*, negative above
    def gap(c: float) -> float:
        x = rb / c - 1.0
        if x <= 0.0:
            return -math.inf
        return power * math.log(x / excess) - log_rhs

    c_star = bisect_threshold(gap, rb * 1e-12, rb * (1.0 - 1e-12))
    logger.debug(f"c*={c_star!r} for r*b={rb!r}")
    return c_star


def classify_monotonicity(solution: Solution) -> MonotonicityReport:
    """How pi* varies with wealth on [0, b] when 0 < c <= rb."""
    if solution.regime is not Regime.LOW:
        raise RegimeError("Monotonicity classification covers 0 < c <= rb only")
    prm = solution.params
    z_b0 = solution.boundaries.z_b0
    f_z0 = float(monotonicity_sign(solution, 1.0))
    f_zb = float(monotonicity_sign(solution, z_b0))

    # at r == lambda, f(z_0) is zero up to rounding
    if prm.r <= prm.lam or f_z0 >= 0.0:
        kind, w_star = MonotonicityKind.INCREASING, None
    elif f_zb > 0.0:
        kind = MonotonicityKind.DECREASING_THEN_INCREASING
        t = bracketed_root(lambda s: float(monotonicity_sign(solution, math.exp(s))),
                           math.log(z_b0), 0.0)
        w_star = float(wealth_of_ratio(solution, math.exp(t)))
    else:
        kind, w_star = MonotonicityKind.DECREASING, None

    m = solution.constants.m
    c_star = consumption_threshold(prm) if prm.r >= prm.lam + m else None
    if prm.r <= prm.lam:
        case = "i"
    elif prm.r < prm.lam + m:
        case = "ii"
    else:
        case = "iii" if kind is MonotonicityKind.DECREASING_THEN_INCREASING else "iv"

    report = MonotonicityReport(
        kind=kind, case=case, w_star=w_star, c_star=c_star, f_at_z0=f_z0, f_at_zb=f_zb
    )
    logger.info(f"Monotonicity: {kind.value} (case {case}), w*={w_star}, c*={c_star}")
    return report


def check_b_independence(params: ModelParams, b1: float, b2: float, w_grid) -> BIndependenceReport:
    """Largest gap between the strategies for goals b1 < b2 on wealth below b1."""
    w = np.asarray(w_grid, dtype=float)
    w = w[(w >= 0.0) & (w < b1)]
    first = solve(params.replace(b=b1))
    second = solve(params.replace(b=b2))
    if w.size == 0:
        return BIndependenceReport(b1=b1, b2=b2, max_deviation=0.0, n_points=0)
    pi_1 = value_derivatives(first, w)[3]
    pi_2 = value_derivatives(second, w)[3]
    deviation = float(np.max(np.abs(pi_1 - pi_2)))
    return BIndependenceReport(b1=b1, b2=b2, max_deviation=deviation, n_points=int(w.size))


def _leverage_ratio(params: ModelParams) -> float:
    k = derive_constants(params)
    return market_price_ratio(params) * (1.0 - k.alpha2)


def check_leveraging(params: ModelParams) -> LeveragingReport:
    """
    Whether the zero-consumption investor borrows at every wealth level
    (pi*/w > 1), and the volatility above which that stops.
    """
    if params.c > 0.0:
        raise RegimeError("Leveraging check applies to c = 0")
    ratio = _leverage_ratio(params)
    status = LeveragingStatus.ALWAYS if ratio > 1.0 else LeveragingStatus.NOT_ALWAYS

    sigma_l = None
    if params.lam < 0.5 * (params.mu + params.r):
        def log_ratio(sigma: float) -> float:
            return math.log(_leverage_ratio(params.replace(sigma=sigma)))

        lo, hi = params.sigma, params.sigma
        while log_ratio(lo) <= 0.0:
            lo *= 0.5
        while log_ratio(hi) > 0.0:
            hi *= 2.0
        sigma_l = bisect_threshold(log_ratio, lo, hi)
    return LeveragingReport(status=status, ratio=ratio, sigma_l=sigma_l)


def compare_strategies(solution: Solution, w_grid) -> StrategyComparison:
    """
    Slacks of pi* against the ruin-minimising rule below c/r, the
    safe-level rule between c/r and b, the zero-consumption rule, and the
    downward jump at b when c > rb.
    """
    if solution.regime is Regime.ZERO:
        raise RegimeError("Strategy comparison needs c > 0")
    prm, k = solution.params, solution.constants
    kappa, scale = solution.kappa, prm.c / prm.r
    w = np.asarray(w_grid, dtype=float)
    w = w[(w >= 0.0) & (w < prm.b)]
    pi = value_derivatives(solution, w)[3] if w.size else w
    report = StrategyComparison()

    def add(name: str, mask: np.ndarray, slack: np.ndarray) -> None:
        n = int(mask.sum())
        report.checks.append(
            InequalityCheck(name, float(slack[mask].min()) if n else math.inf, n)
        )

    ruin_min = kappa * (scale - w) * (k.alpha1 - 1.0)
    add("above_ruin_minimizing", (w > 0.0) & (w < scale), pi - ruin_min)

    if solution.regime is Regime.LOW:
        browne = kappa * (w - scale) * (1.0 - k.alpha2)
        add("above_safe_level_rule", (w > scale) & (w < prm.b), pi - browne)

    zero_c = kappa * w * (1.0 - k.alpha2)
    dominates = k.alpha1 * solution.boundaries.z_b0 ** (k.alpha1 - 1.0) > 1.0
    report.dominates_zero_consumption = dominates
    if dominates:
        add("above_zero_consumption", w >= 0.0, pi - zero_c)
    else:
        y_cross = k.alpha1 ** (-1.0 / (k.alpha1 - 1.0))
        crossing = float(wealth_of_ratio(solution, y_cross))
        report.crossing_wealth = crossing
        add("above_zero_consumption_below_crossing", w < crossing, pi - zero_c)
        add("below_zero_consumption_above_crossing", w > crossing, zero_c - pi)

    if solution.has_kink:
        kink = eval_pi(solution, prm.b)
        report.checks.append(InequalityCheck("downward_jump_at_goal", kink.jump, 1))
    return report


def check_c_sensitivity(params: ModelParams, w_small: Optional[float] = None) -> SensitivityReport:
    """Central difference of pi*(w_small) in c; positive near zero wealth."""
    if params.c <= 0.0:
        raise RegimeError("Consumption sensitivity needs c > 0")
    w = params.b / 100.0 if w_small is None else w_small
    h = SENSITIVITY_STEP * params.c
    up = eval_pi_one_sided(solve(params.replace(c=params.c + h)), w)
    down = eval_pi_one_sided(solve(params.replace(c=params.c - h)), w)
    return SensitivityReport("d_pi_d_c", (up - down) / (2.0 * h), h, expected_sign=1)


def check_zero_consumption_sensitivity(params: ModelParams, w: Optional[float] = None) -> List[SensitivityReport]:
    """With c = 0, pi* rises with the hazard rate and falls with volatility."""
    if params.c > 0.0:
        raise RegimeError("Zero-consumption sensitivity applies to c = 0")
    w = params.b / 2.0 if w is None else w

    def pi_at(p: ModelParams) -> float:
        return eval_pi_one_sided(solve(p), w)

    reports = []
    for name, field_name, sign in (("d_pi_d_lambda", "lam", 1), ("d_pi_d_sigma", "sigma", -1)):
        base = getattr(params, field_name)
        h = SENSITIVITY_STEP * base
        up = pi_at(params.replace(**{field_name: base + h}))
        down = pi_at(params.replace(**{field_name: base - h}))
        reports.append(SensitivityReport(name, (up - down) / (2.0 * h), h, expected_sign=sign))
    return reports
