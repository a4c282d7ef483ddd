import logging
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import ConfigError
from ..model import ModelParams
from ..primal import Solution, solve, strategy_point

logger = logging.getLogger(__name__)

COLUMNS = ["w", "phi", "pi_star", "z"]
SWEEPABLE = ("mu", "r", "sigma", "lambda", "c", "b")


class TabulatorAgent:
    """Turns a solved problem into strategy tables and parameter sweeps."""

    def __init__(self, grid_points: int = 101):
        self.grid_points = grid_points

    def wealth_grid(
        self,
        solution: Solution,
        n: Optional[int] = None,
        lo: Optional[float] = None,
        hi: Optional[float] = None,
    ) -> np.ndarray:
        n = self.grid_points if n is None else n
        lo = 0.0 if lo is None else lo
        hi = solution.w_safe if hi is None else hi
        if n < 2:
            raise ConfigError(f"Grid needs at least 2 points, got {n}")
        if not (0.0 <= lo < hi <= solution.w_safe):
            raise ConfigError(
                f"Grid bounds must satisfy 0 <= lo < hi <= w_safe={solution.w_safe!r}, got [{lo!r}, {hi!r}]"
            )
        grid = np.linspace(lo, hi, n)
        grid[-1] = hi
        return grid

    def tabulate(self, solution: Solution, grid: Sequence[float]) -> pd.DataFrame:
        """
        Strategy table over a wealth grid.

        When the control jumps at b the goal appears twice, first with the
        left and then with the right investment amount.
        """
        b = solution.params.b
        grid = list(grid)
        rows = []
        kink = solution.has_kink and grid[0] <= b <= grid[-1]
        for w in grid:
            if kink and w == b:
                continue
            rows.append(self._row(solution, w))
        if kink:
            rows.append(self._row(solution, b, "left"))
            rows.append(self._row(solution, b, "right"))
        table = pd.DataFrame(rows, columns=COLUMNS)
        # stable sort keeps the left value ahead of the right one at b
        table = table.sort_values("w", kind="mergesort").reset_index(drop=True)
        logger.info(f"Tabulated {len(table)} rows for {solution.regime.value}")
        return table

    def _row(self, solution: Solution, w: float, side: str = "left") -> Dict:
        point = strategy_point(solution, float(w), side=side)
        return {
            "w": point.w,
            "phi": point.phi,
            "pi_star": point.pi_star,
            "z": np.nan if point.z is None else point.z,
        }

    def metadata(self, solution: Solution) -> Dict:
        meta = {
            "regime": solution.regime.value,
            "params": solution.params.as_dict(),
            "constants": solution.constants.as_dict(),
            "boundaries": None if solution.boundaries is None else solution.boundaries.as_dict(),
        }
        return meta

    def sweep(self, params: ModelParams, name: str, values: Sequence[float], w0: float) -> pd.DataFrame:
        """phi(w0), pi*(w0) and the free boundaries as one input varies."""
        if name not in SWEEPABLE:
            raise ConfigError(f"Cannot sweep '{name}'; choose one of {', '.join(SWEEPABLE)}")
        rows = []
        for value in values:
            solution = solve(params.replace(**{name: float(value)}))
            phi, pi = 1.0, np.nan
            if w0 <= solution.w_safe:
                point = strategy_point(solution, w0)
                phi, pi = point.phi, point.pi_star
            bounds = solution.boundaries
            rows.append({
                name: float(value),
                "regime": solution.regime.value,
                "phi": phi,
                "pi_star": pi,
                "z_b0": np.nan if bounds is None else bounds.z_b0,
                "z_b": np.nan if bounds is None else bounds.z_b,
                "z_0": np.nan if bounds is None else bounds.z_0,
            })
        logger.info(f"Swept {name} over {len(rows)} values")
        return pd.DataFrame(rows)
