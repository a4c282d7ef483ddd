"""
Value function phi(w) and optimal investment pi*(w) on [0, w_safe].

c = 0 uses the closed power form. For c > 0 wealth below b is reached through
the dual: w = -phi_hat_z(z), phi = phi_hat(z) + w z, phi_w = z and
pi* = kappa * z * phi_hat_zz, all of which reduce to closed expressions in
y = z / z_0. Above b (only when c > rb) the second branch is explicit in w.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .dual import DualFunction, FreeBoundaries, build_dual, dual_values
from .errors import DomainError, NoBracketError, RegimeError
from .model import DerivedConstants, ModelParams, Regime, derive_constants, market_price_ratio
from .roots import bracketed_root, bracketed_roots

logger = logging.getLogger(__name__)

# below this fraction of r*b the free boundary ratio underflows
ZERO_DISPATCH_RATIO = 1e-10

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class Solution:
    params: ModelParams
    constants: DerivedConstants
    regime: Regime
    boundaries: Optional[FreeBoundaries] = None
    dual: Optional[DualFunction] = None

    @property
    def w_safe(self) -> float:
        return self.constants.w_safe

    @property
    def kappa(self) -> float:
        return market_price_ratio(self.params)

    @property
    def has_kink(self) -> bool:
        return self.regime is Regime.HIGH


@dataclass(frozen=True)
class StrategyPoint:
    w: float
    phi: float
    pi_star: float
    z: Optional[float] = None


@dataclass(frozen=True)
class KinkValue:
    """One-sided investment amounts where the feedback control jumps."""

    left: float
    right: float

    @property
    def jump(self) -> float:
        return self.left - self.right


def solve(
    params: ModelParams,
    regime: Optional[Regime] = None,
    z_b0: Optional[float] = None,
) -> Solution:
    """
    Solve the bequest problem for the given inputs.

    Args:
        params: Validated model inputs
        regime: Optional LOW/HIGH override, honoured only when c = rb
        z_b0: Optional boundary ratio override (verification hook)

    Returns:
        Solution whose boundaries and dual are set iff the consumption
        rate is positive
    """
    constants = derive_constants(params)
    tiny = params.c < ZERO_DISPATCH_RATIO * params.r * params.b
    if params.c == 0.0 or (tiny and regime is None and z_b0 is None):
        if regime not in (None, Regime.ZERO):
            raise RegimeError(f"Regime {regime.value} needs a positive consumption rate")
        if params.c > 0.0:
            logger.info(f"c={params.c!r} is negligible against r*b; using the zero-consumption form")
        return Solution(params=params, constants=constants, regime=Regime.ZERO)
    if regime is Regime.ZERO:
        raise RegimeError("Zero-consumption form requested with c > 0")

    dual = build_dual(params, constants, regime=regime, z_b0=z_b0)
    logger.info(f"Solved {dual.regime.value} problem, safe level {constants.w_safe:.6g}")
    return Solution(
        params=params,
        constants=constants,
        regime=dual.regime,
        boundaries=dual.boundaries,
        dual=dual,
    )


def _require_dual(solution: Solution) -> DualFunction:
    if solution.dual is None:
        raise RegimeError("This operation needs the dual problem (c > 0)")
    return solution.dual


def _powers(solution: Solution, y: np.ndarray):
    k = solution.constants
    log_y = np.log(y)
    with np.errstate(over="ignore"):
        return np.exp((k.alpha1 - 1.0) * log_y), np.exp((k.alpha2 - 1.0) * log_y)


def wealth_of_ratio(solution: Solution, y: ArrayLike) -> np.ndarray:
    """Wealth w = -phi_hat_z(z_0 y) for y in [z_b0, 1]."""
    k = solution.constants
    u1, u2 = _powers(solution, np.asarray(y, dtype=float))
    scale = solution.params.c / solution.params.r
    return scale * (1.0 - k.a1_coef * u1 - k.a2_coef * u2)


def phi_of_ratio(solution: Solution, y: ArrayLike) -> np.ndarray:
    k = solution.constants
    y = np.asarray(y, dtype=float)
    u1, u2 = _powers(solution, y)
    scale = solution.params.c / solution.params.r
    return scale * k.k_coef * solution.boundaries.z_0 * y * (u2 - u1)


def pi_of_ratio(solution: Solution, y: ArrayLike) -> np.ndarray:
    k = solution.constants
    u1, u2 = _powers(solution, np.asarray(y, dtype=float))
    scale = solution.params.c / solution.params.r
    return solution.kappa * scale * k.k_coef * (k.alpha1 * u1 - k.alpha2 * u2)


def inversion_residual(solution: Solution, w: float, z: float) -> float:
    """Residual of (c/r)[A1 y^(alpha1-1) + A2 y^(alpha2-1)] = c/r - w at y = z / z_0."""
    y = z / solution.boundaries.z_0
    return float(solution.params.c / solution.params.r - wealth_of_ratio(solution, y)
                 - (solution.params.c / solution.params.r - w))


def invert_dual(solution: Solution, w: float) -> float:
    """Dual variable z in [z_b, z_0] that corresponds to wealth w in [0, b]."""
    dual = _require_dual(solution)
    prm, k = solution.params, solution.constants
    if not 0.0 <= w <= prm.b:
        raise DomainError(f"Dual inversion needs 0 <= w <= b, got w={w!r}")
    z_b0, z_0 = dual.boundaries.z_b0, dual.boundaries.z_0
    if w == 0.0:
        return z_0
    if w == prm.b:
        return dual.boundaries.z_b

    target = 1.0 - prm.r * w / prm.c
    e1, e2 = k.alpha1 - 1.0, k.alpha2 - 1.0

    def residual(t: float) -> float:
        with np.errstate(over="ignore"):
            return float(k.a1_coef * np.exp(e1 * t) + k.a2_coef * np.exp(e2 * t) - target)

    def slope(t: float) -> float:
        with np.errstate(over="ignore"):
            return float(k.a1_coef * e1 * np.exp(e1 * t) + k.a2_coef * e2 * np.exp(e2 * t))

    t = bracketed_root(residual, math.log(z_b0), 0.0, fprime=slope, snap=True)
    return z_0 * math.exp(t)


def invert_dual_many(solution: Solution, w: ArrayLike) -> np.ndarray:
    """Vectorised invert_dual for wealth values in [0, b]."""
    dual = _require_dual(solution)
    prm, k = solution.params, solution.constants
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(w < 0.0) or np.any(w > prm.b):
        raise DomainError("Dual inversion needs 0 <= w <= b")
    z_b0, z_0 = dual.boundaries.z_b0, dual.boundaries.z_0
    t = np.zeros_like(w)
    t[w == prm.b] = math.log(z_b0)
    interior = (w > 0.0) & (w < prm.b)
    if interior.any():
        target = 1.0 - prm.r * w[interior] / prm.c
        e1, e2 = k.alpha1 - 1.0, k.alpha2 - 1.0

        def residual(s: np.ndarray) -> np.ndarray:
            return k.a1_coef * np.exp(e1 * s) + k.a2_coef * np.exp(e2 * s) - target

        def slope(s: np.ndarray) -> np.ndarray:
            return k.a1_coef * e1 * np.exp(e1 * s) + k.a2_coef * e2 * np.exp(e2 * s)

        lo = np.full(target.shape, math.log(z_b0))
        try:
            t[interior] = bracketed_roots(residual, lo, np.zeros_like(lo), fprime=slope)
        except NoBracketError:
            # rounding at a bracket end, or an overridden z_b0; the scalar path snaps
            t[interior] = [math.log(invert_dual(solution, float(x)) / z_0) for x in w[interior]]
    z = z_0 * np.exp(t)
    z[w == prm.b] = dual.boundaries.z_b
    return z


def _high_branch(solution: Solution, w: np.ndarray):
    # explicit branch on (b, c/r] when c > rb
    prm, k = solution.params, solution.constants
    scale = prm.c / prm.r
    gap = scale - prm.b
    if gap <= 0.0:
        # forced high solver at c = rb: the branch collapses onto w = c/r
        return np.ones_like(w), np.zeros_like(w), np.zeros_like(w), np.zeros_like(w)
    z_b = solution.boundaries.z_b
    u = np.clip((scale - w) / gap, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = 1.0 - gap * z_b / k.p * np.power(u, k.p)
        phi_w = z_b * np.power(u, k.p - 1.0)
        phi_ww = -z_b * (k.p - 1.0) * np.power(u, k.p - 2.0) / gap
    pi = solution.kappa * (scale - w) * (k.alpha1 - 1.0)
    return phi, phi_w, phi_ww, pi


def _zero_branch(solution: Solution, w: np.ndarray):
    prm, k = solution.params, solution.constants
    x = w / prm.b
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.power(x, k.q)
        phi_w = k.q / prm.b * np.power(x, k.q - 1.0)
        phi_ww = k.q * (k.q - 1.0) / prm.b ** 2 * np.power(x, k.q - 2.0)
    pi = solution.kappa * w * (1.0 - k.alpha2)
    return phi, phi_w, phi_ww, pi


def _check_wealth(solution: Solution, w: float, upper: Optional[float] = None) -> None:
    if w < 0.0 or math.isnan(w):
        raise DomainError(f"Wealth must be non-negative, got {w!r}")
    if upper is not None and w > upper:
        raise DomainError(f"Wealth {w!r} lies above the safe level {upper!r}")


def eval_phi(solution: Solution, w: float) -> float:
    """Maximum probability of meeting the bequest goal from wealth w."""
    _check_wealth(solution, w)
    if w >= solution.w_safe:
        return 1.0
    if solution.regime is Regime.ZERO:
        return float(_zero_branch(solution, np.array([w]))[0][0])
    if w > solution.params.b:
        return float(_high_branch(solution, np.array([w]))[0][0])
    y = invert_dual(solution, w) / solution.boundaries.z_0
    return float(min(max(phi_of_ratio(solution, y), 0.0), 1.0))


def eval_pi_one_sided(solution: Solution, w: float, side: str = "left") -> float:
    """Optimal amount in the risky asset; `side` only matters at the kink w = b."""
    _check_wealth(solution, w, upper=solution.w_safe)
    prm = solution.params
    if solution.regime is Regime.ZERO:
        return float(_zero_branch(solution, np.array([w]))[3][0])
    if w > prm.b or (w == prm.b and side == "right" and solution.has_kink):
        return float(_high_branch(solution, np.array([w]))[3][0])
    y = invert_dual(solution, w) / solution.boundaries.z_0
    return float(pi_of_ratio(solution, y))


def eval_pi(solution: Solution, w: float) -> Union[float, KinkValue]:
    """Optimal investment at w; a KinkValue at w = b when c > rb."""
    if solution.has_kink and w == solution.params.b:
        return KinkValue(
            left=eval_pi_one_sided(solution, w, "left"),
            right=eval_pi_one_sided(solution, w, "right"),
        )
    return eval_pi_one_sided(solution, w)


def strategy_point(solution: Solution, w: float, side: str = "left") -> StrategyPoint:
    """phi, pi* and the dual variable at w, inverting the dual at most once."""
    _check_wealth(solution, w, upper=solution.w_safe)
    prm = solution.params
    if solution.regime is Regime.ZERO:
        phi, _, _, pi = _zero_branch(solution, np.array([w]))
        return StrategyPoint(w=w, phi=min(float(phi[0]), 1.0), pi_star=float(pi[0]))
    if w > prm.b:
        phi, _, _, pi = _high_branch(solution, np.array([w]))
        return StrategyPoint(w=w, phi=float(phi[0]), pi_star=float(pi[0]))
    z = invert_dual(solution, w)
    y = z / solution.boundaries.z_0
    phi = 1.0 if w >= solution.w_safe else min(max(float(phi_of_ratio(solution, y)), 0.0), 1.0)
    pi = float(pi_of_ratio(solution, y))
    if side == "right" and solution.has_kink and w == prm.b:
        pi = float(_high_branch(solution, np.array([w]))[3][0])
    return StrategyPoint(w=w, phi=phi, pi_star=pi, z=z)


def value_derivatives(solution: Solution, w: ArrayLike):
    """
    Vectorised (phi, phi_w, phi_ww, pi*) on 0 < w < w_safe.

    Below b the derivatives come through the dual: phi_w = z and
    phi_ww = -1 / phi_hat_zz(z).
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(w < 0.0) or np.any(w > solution.w_safe):
        raise DomainError("Derivatives are defined on [0, w_safe] only")
    if solution.regime is Regime.ZERO:
        return _zero_branch(solution, w)

    phi = np.empty_like(w)
    phi_w = np.empty_like(w)
    phi_ww = np.empty_like(w)
    pi = np.empty_like(w)
    above = w > solution.params.b
    if above.any():
        phi[above], phi_w[above], phi_ww[above], pi[above] = _high_branch(solution, w[above])
    below = ~above
    if below.any():
        z = invert_dual_many(solution, w[below])
        y = z / solution.boundaries.z_0
        _, _, second = dual_values(solution.dual, z)
        phi[below] = phi_of_ratio(solution, y)
        phi_w[below] = z
        phi_ww[below] = -1.0 / second
        pi[below] = pi_of_ratio(solution, y)
    return phi, phi_w, phi_ww, pi


def phi_w(solution: Solution, w: ArrayLike) -> np.ndarray:
    return value_derivatives(solution, w)[1]


def phi_ww(solution: Solution, w: ArrayLike) -> np.ndarray:
    return value_derivatives(solution, w)[2]


def legendre_phi(solution: Solution, w: float, n_grid: int = 4001) -> float:
    """
    phi(w) recovered as min over z of phi_hat(z) + w z.

    A grid search over the dual domain is refined with a bounded scalar
    minimisation on the neighbouring cells.
    """
    dual = _require_dual(solution)
    _check_wealth(solution, w, upper=solution.w_safe)
    lo, hi = dual.domain
    grid = np.linspace(lo, hi, n_grid)

    def objective(z: float) -> float:
        return float(dual_values(dual, z)[0][0] + w * z)

    values = dual_values(dual, grid)[0] + w * grid
    i = int(np.argmin(values))
    left, right = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    best = float(values[i])
    if right > left:
        result = minimize_scalar(objective, bounds=(left, right), method="bounded",
                                 options={"xatol": 1e-13 * max(hi, 1.0)})
        best = min(best, float(result.fun))
    return best


def ruin_minimizing_strategy(solution: Solution, w: ArrayLike) -> np.ndarray:
    """kappa (c/r - w) / (p - 1), floored at zero above c/r."""
    scale = solution.params.c / solution.params.r
    w = np.asarray(w, dtype=float)
    return solution.kappa * np.maximum(scale - w, 0.0) * (solution.constants.alpha1 - 1.0)


def zero_consumption_strategy(solution: Solution, w: ArrayLike) -> np.ndarray:
    """kappa w / (1 - q), the optimal rule when nothing is consumed."""
    return solution.kappa * np.asarray(w, dtype=float) * (1.0 - solution.constants.alpha2)


def safe_level_strategy(solution: Solution, w: ArrayLike) -> np.ndarray:
    """kappa (w - c/r) / (1 - q), floored at zero below c/r."""
    scale = solution.params.c / solution.params.r
    w = np.asarray(w, dtype=float)
    return solution.kappa * np.maximum(w - scale, 0.0) * (1.0 - solution.constants.alpha2)


BENCHMARKS = {
    "ruin-min": ruin_minimizing_strategy,
    "zero-consumption": zero_consumption_strategy,
    "ruin-at-safe": safe_level_strategy,
}


def feedback_strategy(solution: Solution, n_table: int = 8001) -> Callable[[np.ndarray], np.ndarray]:
    """
    Vectorised w -> pi*(w) for path simulation.

    Below b the control is tabulated along y = z / z_0 (no root finding) and
    interpolated in wealth; the left value is used at the kink w = b.
    """
    if solution.regime is Regime.ZERO:
        return lambda w: zero_consumption_strategy(solution, w)

    prm = solution.params
    t = np.linspace(math.log(solution.boundaries.z_b0), 0.0, n_table)
    y = np.exp(t)
    wealth = wealth_of_ratio(solution, y)[::-1]
    control = pi_of_ratio(solution, y)[::-1]
    wealth[0], wealth[-1] = 0.0, prm.b
    high = solution.has_kink

    def strategy(w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = np.interp(w, wealth, control)
        if high:
            above = w > prm.b
            if np.any(above):
                out = np.where(above, _high_branch(solution, w)[3], out)
        return out

    return strategy
