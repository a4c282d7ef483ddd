import logging
from typing import Optional

import pandas as pd

from .agents.checker_agent import CheckerAgent
from .agents.narrator_agent import NarratorAgent
from .agents.simulation_agent import SimulationAgent
from .agents.tabulator_agent import TabulatorAgent
from .model import ModelParams
from .primal import Solution, solve
from .settings import VerificationSettings

logger = logging.getLogger(__name__)


class VerificationCrew:
    def __init__(self, settings: Optional[VerificationSettings] = None):
        self.settings = settings or VerificationSettings()
        tol = self.settings.tolerances
        self.tabulator = TabulatorAgent()
        self.checker = CheckerAgent(tolerances=tol, grid_points=self.settings.grid_points)
        self.simulator = SimulationAgent(
            settings=self.settings.monte_carlo,
            n_sigma=tol.mc_standard_errors,
            start_fractions=self.settings.mc_start_fractions,
            benchmarks=self.settings.benchmarks,
        )
        self.narrator = NarratorAgent()

    def solve(self, params: ModelParams, z_b0: Optional[float] = None) -> Solution:
        logger.info("🔄 Step 1: Solving the bequest problem...")
        solution = solve(params, z_b0=z_b0)
        if z_b0 is not None:
            logger.warning(f"⚠️ Free boundary ratio overridden with z_b0={z_b0!r}")
        return solution

    def run(self, params: ModelParams, quick: bool = False, z_b0: Optional[float] = None) -> pd.DataFrame:
        """
        Run the verification pipeline

        Args:
            params: Model inputs
            quick: Skip the Monte Carlo suite
            z_b0: Corrupt the free boundary ratio (negative control)
        """
        solution = self.solve(params, z_b0=z_b0)

        logger.info("📏 Step 2: Checking residuals, free boundaries and strategy properties...")
        report = self.checker.run(solution)

        if quick:
            logger.info("⏭️ Step 3: Monte Carlo suite skipped (--quick)")
        else:
            logger.info("🎲 Step 3: Running Monte Carlo cross-checks...")
            report = pd.concat([report, self.simulator.run(solution)], ignore_index=True)

        logger.info("📝 Step 4: Summarising...")
        self.narrator.summarize_report(report)
        return report
