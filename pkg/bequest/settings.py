"""
Verification tolerances and Monte Carlo defaults, read from
config/verification.json when present.
"""

import json
import logging
import os
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join("config", "verification.json")


class Tolerances(BaseModel):
    model_config = ConfigDict(extra="forbid")

    quadratic: float = 1e-12
    boundary_equation: float = 1e-12
    smooth_pasting: float = 1e-10
    dual_ode: float = 1e-8
    hjb_zero_consumption: float = 1e-10
    hjb_positive_consumption: float = 1e-6
    legendre: float = 1e-8
    b_independence: float = 1e-9
    tie_agreement: float = 1e-9
    mc_standard_errors: float = 3.0


class MonteCarloSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_paths: int = Field(default=20_000, ge=1)
    steps_per_year: float = Field(default=252.0, ge=252.0)
    seed: int = 20240101
    n_jobs: int = 1
    block_size: int = Field(default=4096, ge=1)
    horizon_lifetimes: float = Field(default=50.0, ge=10.0)

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_year


class VerificationSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid_points: int = Field(default=1000, ge=2)
    tolerances: Tolerances = Tolerances()
    monte_carlo: MonteCarloSettings = MonteCarloSettings()
    mc_start_fractions: list = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    benchmarks: list = Field(default_factory=lambda: ["ruin-min", "zero-consumption"])


def load_settings(path: Optional[str] = None) -> VerificationSettings:
    """
    Load verification settings.

    Args:
        path: JSON file; defaults to config/verification.json

    Returns:
        Parsed settings, or built-in defaults when no file exists at the
        default location
    """
    config_path = path or DEFAULT_CONFIG_PATH
    if not os.path.exists(config_path):
        if path is not None:
            raise ConfigError(f"Settings file not found: {config_path}")
        logger.info("No verification config found, using defaults")
        return VerificationSettings()
    try:
        with open(config_path, "r") as f:
            data = json.load(f)
        settings = VerificationSettings(**data)
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"Invalid settings in {config_path}: {e}") from e
    logger.debug(f"Loaded verification settings from {config_path}")
    return settings
