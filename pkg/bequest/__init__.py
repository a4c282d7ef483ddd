"""Maximum probability of reaching a bequest goal, with verification tooling."""

__version__ = "1.0.0"
