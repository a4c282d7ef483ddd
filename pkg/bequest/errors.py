"""
Exceptions raised by the bequest-goal solvers and the verification pipeline.
"""


class BequestError(Exception):
    """Base class for solver and verification failures."""


class NoBracketError(BequestError):
    """A monotone equation did not change sign across its bracket."""

    def __init__(self, message: str, lo: float = float("nan"), hi: float = float("nan")):
        super().__init__(message)
        self.lo = lo
        self.hi = hi


class DomainError(BequestError, ValueError):
    """An evaluation point lies outside the function's domain."""


class RegimeError(BequestError):
    """An operation was requested for a consumption regime it does not cover."""


class ConfigError(BequestError, ValueError):
    """Invalid simulation or run configuration."""
