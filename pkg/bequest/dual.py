"""
Free-boundary problems for the convex dual of the success probability.

For 0 < c <= rb the dual is the value of an optimal stopping problem on
[z_b, z_0] (linear payoff 1 - bz below z_b, zero above z_0). For c > rb it
solves a two-phase problem on [0, z_0] whose source term switches at z_b.
Both cases share the ratio z_b0 = z_b / z_0, the unique root in (0, 1) of

    (c/r) [A1 y^(alpha1-1) + A2 y^(alpha2-1)] = c/r - b.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import DomainError, RegimeError
from .model import DerivedConstants, ModelParams, Regime, derive_constants
from .roots import bracketed_root

logger = logging.getLogger(__name__)

BRACKET_EPS = 1e-14

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class FreeBoundaries:
    z_b0: float
    z_b: float
    z_0: float
    regime: Regime

    def as_dict(self) -> dict:
        return {"z_b0": self.z_b0, "z_b": self.z_b, "z_0": self.z_0, "regime": self.regime.value}


@dataclass(frozen=True)
class DualFunction:
    boundaries: FreeBoundaries
    constants: DerivedConstants
    params: ModelParams

    @property
    def regime(self) -> Regime:
        return self.boundaries.regime

    @property
    def domain(self) -> Tuple[float, float]:
        lo = self.boundaries.z_b if self.regime is Regime.LOW else 0.0
        return lo, self.boundaries.z_0


@dataclass(frozen=True)
class DualPoint:
    value: float
    first: float
    second: float
    # (left, right) second derivatives where the dual is only C^1
    second_sided: Optional[Tuple[float, float]] = None


def _require_consumption(params: ModelParams) -> None:
    if params.c <= 0.0:
        raise RegimeError("The dual free-boundary problems need a positive consumption rate")


def _resolve_regime(params: ModelParams, constants: DerivedConstants, regime: Optional[Regime]) -> Regime:
    if regime is None or regime is constants.regime:
        return constants.regime
    tie = params.c == params.r * params.b
    if tie and regime in (Regime.LOW, Regime.HIGH):
        return regime
    raise RegimeError(
        f"Regime {regime.value} requested but parameters give {constants.regime.value}"
    )


def boundary_equation_lhs(params: ModelParams, constants: DerivedConstants, y: ArrayLike) -> ArrayLike:
    """(c/r)[A1 y^(alpha1-1) + A2 y^(alpha2-1)]; increasing in y on (0, 1]."""
    log_y = np.log(np.asarray(y, dtype=float))
    with np.errstate(over="ignore"):
        g = (constants.a1_coef * np.exp((constants.alpha1 - 1.0) * log_y)
             + constants.a2_coef * np.exp((constants.alpha2 - 1.0) * log_y))
    return params.c / params.r * g


def solve_zb0(params: ModelParams, constants: Optional[DerivedConstants] = None) -> float:
    """Ratio z_b / z_0 in (0, 1) shared by both positive-consumption regimes."""
    _require_consumption(params)
    constants = constants or derive_constants(params)
    a1, a2 = constants.a1_coef, constants.a2_coef
    e1, e2 = constants.alpha1 - 1.0, constants.alpha2 - 1.0
    scale = params.c / params.r
    target = scale - params.b

    # solved in t = ln y so that roots near 0 keep full relative precision
    def residual(t: float) -> float:
        with np.errstate(over="ignore"):
            return float(scale * (a1 * np.exp(e1 * t) + a2 * np.exp(e2 * t)) - target)

    def slope(t: float) -> float:
        with np.errstate(over="ignore"):
            return float(scale * (a1 * e1 * np.exp(e1 * t) + a2 * e2 * np.exp(e2 * t)))

    t = bracketed_root(residual, math.log(BRACKET_EPS), math.log1p(-BRACKET_EPS), fprime=slope)
    z_b0 = math.exp(t)
    logger.debug(f"z_b0={z_b0!r} (residual {residual(t):.3e})")
    return z_b0


def stopping_inequalities(constants: DerivedConstants, z_b0: float) -> Tuple[float, float]:
    """
    Margins of the two inequalities equivalent to z_b < 1/b < z_0.

    Both are positive for every z_b0 in (0, 1).
    """
    a1, a2 = constants.alpha1, constants.alpha2
    y1 = z_b0 ** (a1 - 1.0)
    y2 = z_b0 ** (a2 - 1.0)
    below = constants.b1_coef * y1 + constants.b2_coef * y2 - 1.0
    above = (1.0 + constants.k_coef * (z_b0 ** a1 - z_b0 ** a2)
             - constants.a1_coef * y1 - constants.a2_coef * y2)
    return below, above


def solve_boundaries(
    params: ModelParams,
    constants: Optional[DerivedConstants] = None,
    regime: Optional[Regime] = None,
    z_b0: Optional[float] = None,
) -> FreeBoundaries:
    """
    Solve for z_b0, z_b and z_0.

    Args:
        params: Model inputs with c > 0
        constants: Precomputed constants (derived when omitted)
        regime: Force LOW or HIGH; only honoured at the tie c = rb
        z_b0: Use this ratio instead of solving for it (verification hook)

    Returns:
        FreeBoundaries for the resolved regime
    """
    _require_consumption(params)
    constants = constants or derive_constants(params)
    regime = _resolve_regime(params, constants, regime)
    if z_b0 is None:
        z_b0 = solve_zb0(params, constants)
    scale = params.c / params.r
    a1, a2 = constants.alpha1, constants.alpha2

    if regime is Regime.LOW:
        inv_zb = scale * constants.k_coef * (z_b0 ** (a2 - 1.0) - z_b0 ** (a1 - 1.0))
        z_b = 1.0 / inv_zb
        z_0 = z_b / z_b0
    else:
        inv_z0 = scale * (a1 - 1.0) / a1 * z_b0 ** a2
        z_0 = 1.0 / inv_z0
        z_b = z_0 * z_b0

    boundaries = FreeBoundaries(z_b0=z_b0, z_b=z_b, z_0=z_0, regime=regime)
    logger.info(f"Free boundaries ({regime.value}): z_b0={z_b0:.6g}, z_b={z_b:.6g}, z_0={z_0:.6g}")
    return boundaries


def build_dual(
    params: ModelParams,
    constants: Optional[DerivedConstants] = None,
    regime: Optional[Regime] = None,
    z_b0: Optional[float] = None,
) -> DualFunction:
    constants = constants or derive_constants(params)
    boundaries = solve_boundaries(params, constants, regime=regime, z_b0=z_b0)
    return DualFunction(boundaries=boundaries, constants=constants, params=params)


def _continuation(dual: DualFunction, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = dual.constants
    z_0 = dual.boundaries.z_0
    scale = dual.params.c / dual.params.r
    log_y = np.log(z / z_0)
    with np.errstate(over="ignore"):
        p1 = np.exp(k.alpha1 * log_y)
        p2 = np.exp(k.alpha2 * log_y)
        y = np.exp(log_y)
        value = scale * z_0 * (k.b1_coef * p1 + k.b2_coef * p2 - y)
        first = scale * (k.a1_coef * p1 / y + k.a2_coef * p2 / y - 1.0)
        second = scale * k.k_coef / z_0 * (k.alpha1 * p1 - k.alpha2 * p2) / (y * y)
    return value, first, second


def _lower_phase(dual: DualFunction, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # polynomial-type branch below z_b when c > rb; exact at z = 0
    a1 = dual.constants.alpha1
    z_b = dual.boundaries.z_b
    scale = dual.params.c / dual.params.r
    gap = scale - dual.params.b
    s = z / z_b
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        value = 1.0 + gap * z_b / a1 * np.power(s, a1) - scale * z
        first = gap * np.power(s, a1 - 1.0) - scale
        second = gap * (a1 - 1.0) / z_b * np.power(s, a1 - 2.0)
    return value, first, second


def dual_values(dual: DualFunction, z: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised (value, first, second) of the dual.

    At z = z_b with c > rb the lower-phase (left) second derivative is used;
    eval_dual reports both one-sided values there.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z < 0.0):
        raise DomainError("The dual variable must be non-negative")
    z_b, z_0 = dual.boundaries.z_b, dual.boundaries.z_0
    value = np.zeros_like(z)
    first = np.zeros_like(z)
    second = np.zeros_like(z)

    if dual.regime is Regime.LOW:
        below = z < z_b
        inside = ~below & (z <= z_0)
        value[below] = 1.0 - dual.params.b * z[below]
        first[below] = -dual.params.b
    else:
        below = z <= z_b
        inside = ~below & (z <= z_0)
        if below.any():
            v, d1, d2 = _lower_phase(dual, z[below])
            value[below], first[below], second[below] = v, d1, d2

    if inside.any():
        v, d1, d2 = _continuation(dual, z[inside])
        value[inside], first[inside], second[inside] = v, d1, d2
    return value, first, second


def eval_dual(dual: DualFunction, z: float) -> DualPoint:
    """Value and derivatives of the dual at a single point z >= 0."""
    if z < 0.0:
        raise DomainError(f"z must be non-negative, got {z!r}")
    value, first, second = (float(a[0]) for a in dual_values(dual, z))
    if dual.regime is Regime.HIGH and z == dual.boundaries.z_b:
        _, _, right = _continuation(dual, np.array([z]))
        return DualPoint(value, first, float("nan"), second_sided=(second, float(right[0])))
    return DualPoint(value, first, second)


def dual_ode_residual(dual: DualFunction, z: ArrayLike) -> np.ndarray:
    """Residual of the dual ODE at interior points of the solved domain."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    prm, k = dual.params, dual.constants
    value, first, second = dual_values(dual, z)
    residual = prm.lam * value - (prm.lam - prm.r) * z * first - k.m * z * z * second + prm.c * z
    if dual.regime is Regime.HIGH:
        residual = residual - prm.lam * (z <= dual.boundaries.z_b)
    return residual


def check_smooth_pasting(dual: DualFunction) -> Dict[str, float]:
    """Residuals of every boundary and pasting condition of the solved problem."""
    z_b, z_0 = dual.boundaries.z_b, dual.boundaries.z_0
    b = dual.params.b
    cont_b = [float(a[0]) for a in _continuation(dual, np.array([z_b]))]
    cont_0 = [float(a[0]) for a in _continuation(dual, np.array([z_0]))]
    residuals = {
        "value_at_z0": cont_0[0],
        "slope_at_z0": cont_0[1],
        "slope_at_zb": cont_b[1] + b,
    }
    if dual.regime is Regime.LOW:
        residuals["value_at_zb"] = cont_b[0] - (1.0 - b * z_b)
    else:
        low_b = [float(a[0]) for a in _lower_phase(dual, np.array([z_b]))]
        low_0 = [float(a[0]) for a in _lower_phase(dual, np.array([0.0]))]
        residuals["value_at_zero"] = low_0[0] - 1.0
        residuals["value_jump_at_zb"] = low_b[0] - cont_b[0]
        residuals["slope_at_zb_left"] = low_b[1] + b
    return residuals
