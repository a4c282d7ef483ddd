"""
Model inputs and closed-form constants for the bequest-goal problem.

An investor consumes at rate c, invests pi in a lognormal risky asset and the
rest at the riskless rate r, and dies at an exponential time with hazard
rate lambda. Everything the solvers need beyond the raw inputs is derived
here once, from explicit quadratic roots.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    ZERO = "ZeroConsumption"
    LOW = "LowConsumption"
    HIGH = "HighConsumption"


class ModelParams(BaseModel):
    """Market and investor inputs. Rejected at construction when invalid."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, allow_inf_nan=False)

    mu: float = Field(description="drift of the risky asset, per year")
    r: float = Field(gt=0, description="riskless rate, per year")
    sigma: float = Field(gt=0, description="volatility, per sqrt(year)")
    lam: float = Field(gt=0, alias="lambda", description="mortality hazard rate, per year")
    c: float = Field(ge=0, description="consumption rate, currency per year")
    b: float = Field(gt=0, description="bequest goal, currency")

    @model_validator(mode="after")
    def _check_excess_return(self) -> "ModelParams":
        if not self.mu > self.r:
            raise ValueError(f"mu must exceed r (got mu={self.mu}, r={self.r})")
        return self

    def replace(self, **changes) -> "ModelParams":
        """Copy with some fields changed; the copy is validated again."""
        data = self.model_dump()
        if "lambda" in changes:
            changes["lam"] = changes.pop("lambda")
        data.update(changes)
        return ModelParams(**data)

    def as_dict(self) -> dict:
        return self.model_dump(by_alias=True)


@dataclass(frozen=True)
class DerivedConstants:
    m: float
    q: float
    alpha1: float
    alpha2: float
    p: float
    w_safe: float
    regime: Regime

    # Coefficients shared by the dual and primal formulas.
    @property
    def spread(self) -> float:
        return self.alpha1 - self.alpha2

    @property
    def k_coef(self) -> float:
        return (self.alpha1 - 1.0) * (1.0 - self.alpha2) / self.spread

    @property
    def a1_coef(self) -> float:
        return self.alpha1 * (1.0 - self.alpha2) / self.spread

    @property
    def a2_coef(self) -> float:
        return self.alpha2 * (self.alpha1 - 1.0) / self.spread

    @property
    def b1_coef(self) -> float:
        return (1.0 - self.alpha2) / self.spread

    @property
    def b2_coef(self) -> float:
        return (self.alpha1 - 1.0) / self.spread

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "q": self.q,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "p": self.p,
            "w_safe": self.w_safe,
            "regime": self.regime.value,
        }


def market_price_ratio(params: ModelParams) -> float:
    """(mu - r) / sigma^2, the factor in front of every feedback strategy."""
    return (params.mu - params.r) / params.sigma ** 2


def classify_regime(params: ModelParams) -> Regime:
    # c == r*b belongs to the low-consumption case
    if params.c == 0.0:
        return Regime.ZERO
    if params.c <= params.r * params.b:
        return Regime.LOW
    return Regime.HIGH


def safe_level(params: ModelParams) -> float:
    return max(params.b, params.c / params.r)


def _q_root(r: float, lam: float, m: float) -> float:
    # smaller root of r q^2 - (r + lam + m) q + lam = 0, written without cancellation
    s = r + lam + m
    disc = math.sqrt(s * s - 4.0 * r * lam)
    return 2.0 * lam / (s + disc)


def _alpha_roots(r: float, lam: float, m: float) -> tuple:
    # roots of m a^2 - (r - lam + m) a - lam = 0; product is -lam/m
    s = r - lam + m
    disc = math.sqrt(s * s + 4.0 * m * lam)
    if s >= 0.0:
        alpha1 = (s + disc) / (2.0 * m)
        alpha2 = -2.0 * lam / (s + disc)
    else:
        alpha2 = (s - disc) / (2.0 * m)
        alpha1 = 2.0 * lam / (disc - s)
    return alpha1, alpha2


def derive_constants(params: ModelParams) -> DerivedConstants:
    """Compute m, q, alpha1, alpha2, p, the safe level and the regime."""
    m = 0.5 * ((params.mu - params.r) / params.sigma) ** 2
    q = _q_root(params.r, params.lam, m)
    alpha1, alpha2 = _alpha_roots(params.r, params.lam, m)
    constants = DerivedConstants(
        m=m,
        q=q,
        alpha1=alpha1,
        alpha2=alpha2,
        p=alpha1 / (alpha1 - 1.0),
        w_safe=safe_level(params),
        regime=classify_regime(params),
    )
    logger.debug(f"Derived constants: {constants.as_dict()}")
    return constants


def q_residual(params: ModelParams, constants: DerivedConstants) -> float:
    q = constants.q
    return params.r * q * q - (params.r + params.lam + constants.m) * q + params.lam


def alpha_residuals(params: ModelParams, constants: DerivedConstants) -> tuple:
    s = params.r - params.lam + constants.m
    return tuple(
        constants.m * a * a - s * a - params.lam for a in (constants.alpha1, constants.alpha2)
    )
