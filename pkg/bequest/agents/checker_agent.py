import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from ..analysis import (
    MonotonicityKind,
    check_b_independence,
    check_c_sensitivity,
    check_leveraging,
    check_zero_consumption_sensitivity,
    classify_monotonicity,
    compare_strategies,
)
from ..dual import boundary_equation_lhs, check_smooth_pasting, dual_ode_residual, dual_values, stopping_inequalities
from ..errors import BequestError
from ..model import Regime, alpha_residuals, q_residual
from ..montecarlo import hjb_residual
from ..primal import Solution, legendre_phi, solve, value_derivatives
from ..settings import Tolerances

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["check", "value", "tolerance", "slack", "passed"]


def residual_row(name: str, value: float, tolerance: float) -> Dict:
    slack = tolerance - abs(value)
    return {"check": name, "value": value, "tolerance": tolerance, "slack": slack, "passed": bool(slack >= 0.0)}


def margin_row(name: str, margin: float) -> Dict:
    """Strict inequality: passes when the margin is positive."""
    return {"check": name, "value": margin, "tolerance": 0.0, "slack": margin, "passed": bool(margin > 0.0)}


class CheckerAgent:
    """
    Deterministic checks of a solution: quadratic roots, free-boundary
    conditions, HJB and dual ODE residuals, the Legendre round trip and the
    strategy properties. Produces one report row per check.
    """

    def __init__(self, tolerances: Optional[Tolerances] = None, grid_points: int = 1000):
        self.tol = tolerances or Tolerances()
        self.grid_points = grid_points

    def run(self, solution: Solution) -> pd.DataFrame:
        rows: List[Dict] = []
        steps: List[Callable[[Solution], List[Dict]]] = [
            self.constant_checks,
            self.dual_checks,
            self.value_checks,
            self.strategy_checks,
        ]
        for step in steps:
            try:
                rows.extend(step(solution))
            except BequestError as e:
                logger.warning(f"Check group {step.__name__} aborted: {e}")
                rows.append({"check": step.__name__, "value": math.nan, "tolerance": math.nan,
                             "slack": math.nan, "passed": False})
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def constant_checks(self, solution: Solution) -> List[Dict]:
        prm, k = solution.params, solution.constants
        tol = self.tol.quadratic
        a1_res, a2_res = alpha_residuals(prm, k)
        rows = [
            residual_row("q_quadratic", q_residual(prm, k), tol),
            residual_row("alpha1_quadratic", a1_res, tol),
            residual_row("alpha2_quadratic", a2_res, tol),
            residual_row("one_minus_q_identity", (1.0 - k.q) - 1.0 / (1.0 - k.alpha2), tol),
            margin_row("q_in_unit_interval", min(k.q, 1.0 - k.q)),
            margin_row("alpha1_above_one", k.alpha1 - 1.0),
            margin_row("alpha2_negative", -k.alpha2),
        ]
        return rows

    def dual_checks(self, solution: Solution) -> List[Dict]:
        if solution.dual is None:
            return []
        prm, k, bounds = solution.params, solution.constants, solution.boundaries
        scale = prm.c / prm.r
        lhs = float(boundary_equation_lhs(prm, k, bounds.z_b0))
        rows = [residual_row("boundary_equation", lhs - (scale - prm.b), self.tol.boundary_equation * max(1.0, scale))]
        for name, value in check_smooth_pasting(solution.dual).items():
            rows.append(residual_row(f"smooth_pasting_{name}", value, self.tol.smooth_pasting))
        below, above = stopping_inequalities(k, bounds.z_b0)
        rows.append(margin_row("stopping_inequality_lower", below))
        rows.append(margin_row("stopping_inequality_upper", above))
        if solution.regime is Regime.LOW:
            rows.append(margin_row("zb_below_inverse_goal", 1.0 / prm.b - bounds.z_b))
            rows.append(margin_row("z0_above_inverse_goal", bounds.z_0 - 1.0 / prm.b))

        lo, hi = solution.dual.domain
        z = np.linspace(lo, hi, self.grid_points + 2)[1:-1]
        if solution.has_kink:
            z = z[z != bounds.z_b]
        _, first, second = dual_values(solution.dual, z)
        ode = dual_ode_residual(solution.dual, z)
        rows.append(residual_row("dual_ode_residual", float(np.max(np.abs(ode))), self.tol.dual_ode))
        rows.append(margin_row("dual_convexity", float(second.min())))
        rows.append(residual_row("dual_decreasing", float(max(first.max(), 0.0)), 1e-12))
        return rows

    def value_checks(self, solution: Solution) -> List[Dict]:
        prm = solution.params
        grid = np.linspace(0.0, solution.w_safe, self.grid_points)
        tol = self.tol.hjb_zero_consumption if solution.regime is Regime.ZERO else self.tol.hjb_positive_consumption
        rows = [residual_row("hjb_residual", hjb_residual(solution, grid[1:-1]), tol)]

        phi = value_derivatives(solution, grid)[0]
        phi[-1] = 1.0
        rows.append(residual_row("phi_at_zero", float(phi[0]), 0.0))
        steps = np.diff(phi)
        rows.append(residual_row("phi_nondecreasing", float(max(-steps.min(), 0.0)), 1e-12))
        curvature = steps[1:] - steps[:-1]
        rows.append(residual_row("phi_concave", float(max(curvature.max(), 0.0)), 1e-10))

        if solution.dual is not None:
            top = prm.c / prm.r if solution.has_kink else prm.b
            w = np.linspace(0.0, top, 41)
            inside = w < solution.w_safe
            exact = np.ones_like(w)
            exact[inside] = value_derivatives(solution, w[inside])[0]
            recovered = np.array([legendre_phi(solution, float(x)) for x in w])
            rows.append(residual_row("legendre_round_trip", float(np.max(np.abs(recovered - exact))),
                                     self.tol.legendre))
        return rows

    def strategy_checks(self, solution: Solution) -> List[Dict]:
        prm = solution.params
        rows: List[Dict] = []
        grid = np.linspace(0.0, prm.b, 201)

        if solution.regime is Regime.ZERO:
            report = check_leveraging(prm)
            rows.append({"check": f"leveraging_{report.status.value}", "value": report.ratio,
                         "tolerance": 1.0, "slack": report.ratio - 1.0, "passed": True})
            for sensitivity in check_zero_consumption_sensitivity(prm):
                rows.append(margin_row(sensitivity.name, sensitivity.derivative * sensitivity.expected_sign))
            independence = check_b_independence(prm, prm.b, 2.0 * prm.b, grid)
            rows.append(residual_row("b_independence", independence.max_deviation, self.tol.b_independence))
            return rows

        comparison = compare_strategies(solution, grid)
        for check in comparison.checks:
            if check.n_points:
                rows.append(margin_row(check.name, check.min_slack))

        independence = check_b_independence(prm, prm.b, 1.5 * prm.b, grid)
        rows.append(residual_row("b_independence", independence.max_deviation, self.tol.b_independence))

        if solution.regime is Regime.LOW:
            report = classify_monotonicity(solution)
            rows.append({"check": f"monotonicity_{report.kind.value}_case_{report.case}",
                         "value": report.w_star if report.w_star is not None else math.nan,
                         "tolerance": math.nan, "slack": math.nan,
                         "passed": self._monotonicity_agrees(solution, report.kind)})
            sensitivity = check_c_sensitivity(prm)
            rows.append(margin_row(sensitivity.name, sensitivity.derivative))

        rows.append(self._tie_row(solution))
        return rows

    def _monotonicity_agrees(self, solution: Solution, kind: MonotonicityKind) -> bool:
        w = np.linspace(0.0, solution.params.b, 201)
        pi = value_derivatives(solution, w)[3]
        signs = np.sign(np.diff(pi))
        signs = signs[signs != 0]
        if kind is MonotonicityKind.INCREASING:
            return bool(np.all(signs > 0))
        if kind is MonotonicityKind.DECREASING:
            return bool(np.all(signs < 0))
        changes = int(np.sum(signs[1:] != signs[:-1]))
        return bool(signs[0] < 0 < signs[-1] and changes == 1)

    def _tie_row(self, solution: Solution) -> Dict:
        # both solvers at c = rb must give the same strategy below b
        prm = solution.params
        tie = prm.replace(c=prm.r * prm.b)
        low = solve(tie, regime=Regime.LOW)
        high = solve(tie, regime=Regime.HIGH)
        w = np.linspace(0.0, prm.b, 201)[:-1]
        phi_l, _, _, pi_l = value_derivatives(low, w)
        phi_h, _, _, pi_h = value_derivatives(high, w)
        gap = float(max(np.max(np.abs(phi_l - phi_h)), np.max(np.abs(pi_l - pi_h))))
        return residual_row("continuity_at_c_equals_rb", gap, self.tol.tie_agreement)
