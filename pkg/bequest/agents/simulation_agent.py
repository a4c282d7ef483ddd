import logging
from typing import Dict, List, Optional, Sequence

import pandas as pd

from ..model import Regime
from ..montecarlo import (
    SimConfig,
    check_no_ruin_zero_c,
    check_step_refinement,
    compare_to_benchmark,
    laplace_hitting_check,
    simulate,
)
from ..primal import Solution, eval_phi
from ..settings import MonteCarloSettings
from .checker_agent import REPORT_COLUMNS

logger = logging.getLogger(__name__)


class SimulationAgent:
    """Monte Carlo cross-checks of the analytic success probability."""

    def __init__(
        self,
        settings: Optional[MonteCarloSettings] = None,
        n_sigma: float = 3.0,
        start_fractions: Sequence[float] = (0.25, 0.5, 0.75),
        benchmarks: Sequence[str] = ("ruin-min", "zero-consumption"),
    ):
        self.settings = settings or MonteCarloSettings()
        self.n_sigma = n_sigma
        self.start_fractions = list(start_fractions)
        self.benchmarks = list(benchmarks)

    def config(self, params, w0: float, strategy="optimal") -> SimConfig:
        s = self.settings
        return SimConfig(
            w0=w0,
            n_paths=s.n_paths,
            dt=s.dt,
            seed=s.seed,
            horizon_cap=s.horizon_lifetimes / params.lam,
            strategy=strategy,
            n_jobs=s.n_jobs,
            block_size=s.block_size,
        )

    def run(self, solution: Solution) -> pd.DataFrame:
        prm = solution.params
        rows: List[Dict] = []
        for fraction in self.start_fractions:
            w0 = fraction * solution.w_safe
            result = simulate(prm, self.config(prm, w0), solution)
            expected = eval_phi(solution, w0)
            band = self.n_sigma * result.std_err
            gap = abs(result.p_hat - expected)
            rows.append({
                "check": f"mc_success_probability_w0_{w0:.6g}",
                "value": result.p_hat,
                "tolerance": band,
                "slack": band - gap,
                "passed": bool(gap <= band),
            })
            if result.n_capped:
                logger.warning(f"⚠️ {result.n_capped} capped paths at w0={w0:.6g}")

        w0 = 0.5 * solution.w_safe
        if solution.regime is Regime.ZERO:
            no_ruin = check_no_ruin_zero_c(prm, self.config(prm, w0))
            rows.append({"check": "mc_no_ruin_without_consumption", "value": float(no_ruin.n_ruined),
                         "tolerance": 0.0, "slack": -float(no_ruin.n_ruined), "passed": no_ruin.passed})
            laplace = laplace_hitting_check(prm, self.config(prm, w0))
            band = self.n_sigma * laplace.std_err
            gap = abs(laplace.estimate - laplace.expected)
            rows.append({"check": "mc_hitting_time_laplace", "value": laplace.estimate,
                         "tolerance": band, "slack": band - gap, "passed": laplace.passed})

        refinement = check_step_refinement(prm, self.config(prm, 0.1 * solution.w_safe), solution)
        band = 2.0 * refinement.coarse.std_err
        rows.append({"check": "mc_step_refinement", "value": refinement.difference,
                     "tolerance": band, "slack": band - abs(refinement.difference), "passed": refinement.passed})

        for name in self.benchmarks:
            comparison = compare_to_benchmark(prm, self.config(prm, w0), name)
            band = self.n_sigma * comparison.joint_std_err
            margin = comparison.optimal.p_hat + band - comparison.alternative.p_hat
            rows.append({"check": f"mc_optimal_beats_{name}", "value": comparison.alternative.p_hat,
                         "tolerance": band, "slack": margin, "passed": comparison.passed})
        logger.info(f"Monte Carlo suite finished with {len(rows)} checks")
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)
