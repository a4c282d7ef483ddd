"""
Bracketed root finding for monotone scalar equations: bisection to machine
precision followed by a guarded Newton polish.
"""

import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy.optimize import root_scalar

from .errors import NoBracketError

logger = logging.getLogger(__name__)

MIN_RTOL = 4.0 * np.finfo(float).eps


def bracketed_root(
    func: Callable[[float], float],
    lo: float,
    hi: float,
    fprime: Optional[Callable[[float], float]] = None,
    rtol: float = MIN_RTOL,
    maxiter: int = 400,
    polish_steps: int = 3,
    snap: bool = False,
) -> float:
    """
    Find the root of a monotone function on [lo, hi].

    Args:
        func: Function whose sign changes across the bracket
        lo, hi: Bracket endpoints
        fprime: Optional derivative used for the Newton polish
        rtol: Relative tolerance of the bisection
        maxiter: Bisection iteration cap
        polish_steps: Newton steps tried after bisection
        snap: Return the closer endpoint instead of raising when both ends
            have the same sign (rounding noise at an exact endpoint root)

    Returns:
        The root, always inside [lo, hi]
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f_lo = float(func(lo))
        f_hi = float(func(hi))
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if math.isnan(f_lo) or math.isnan(f_hi) or (f_lo > 0) == (f_hi > 0):
        if snap and not (math.isnan(f_lo) or math.isnan(f_hi)):
            return lo if abs(f_lo) <= abs(f_hi) else hi
        raise NoBracketError(
            f"No sign change on [{lo!r}, {hi!r}]: f(lo)={f_lo!r}, f(hi)={f_hi!r}", lo, hi
        )

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        result = root_scalar(
            func, bracket=[lo, hi], method="bisect", xtol=1e-300, rtol=max(rtol, MIN_RTOL),
            maxiter=maxiter,
        )
    x = float(result.root)
    if not result.converged:
        logger.warning(f"Bisection stopped after {result.iterations} iterations at x={x!r}")

    if fprime is None:
        return x
    fx = float(func(x))
    for _ in range(polish_steps):
        if fx == 0.0:
            break
        slope = float(fprime(x))
        if not math.isfinite(slope) or slope == 0.0:
            break
        candidate = x - fx / slope
        if not (lo <= candidate <= hi):
            break
        f_candidate = float(func(candidate))
        if not abs(f_candidate) < abs(fx):
            break
        x, fx = candidate, f_candidate
    return x


def bisect_threshold(
    func: Callable[[float], float],
    lo: float,
    hi: float,
    rtol: float = 1e-10,
    maxiter: int = 400,
) -> float:
    """Root of a monotone function to a relative tolerance (thresholds, not polish)."""
    return bracketed_root(func, lo, hi, rtol=rtol, maxiter=maxiter, polish_steps=0)


def bracketed_roots(
    func: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    fprime: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    polish_steps: int = 3,
) -> np.ndarray:
    """
    Elementwise roots of an increasing vectorised function, one bracket per
    element. Bisects until no bracket can shrink further, then applies the
    same guarded Newton polish as bracketed_root.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    bracket_lo, bracket_hi = lo.copy(), hi.copy()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f_lo, f_hi = func(lo), func(hi)
        bad = np.flatnonzero(~((f_lo <= 0.0) & (f_hi >= 0.0)))
        if bad.size:
            i = int(bad[0])
            raise NoBracketError(
                f"No sign change for element {i}: f(lo)={f_lo[i]!r}, f(hi)={f_hi[i]!r}",
                float(lo[i]), float(hi[i]),
            )
        while True:
            mid = 0.5 * (lo + hi)
            active = (mid > lo) & (mid < hi)
            if not active.any():
                break
            positive = func(mid) > 0.0
            hi = np.where(active & positive, mid, hi)
            lo = np.where(active & ~positive, mid, lo)
        x = 0.5 * (lo + hi)
        if fprime is None:
            return x
        fx = func(x)
        for _ in range(polish_steps):
            candidate = x - fx / fprime(x)
            inside = np.isfinite(candidate) & (candidate >= bracket_lo) & (candidate <= bracket_hi)
            f_candidate = func(np.where(inside, candidate, x))
            better = inside & (np.abs(f_candidate) < np.abs(fx))
            x = np.where(better, candidate, x)
            fx = np.where(better, f_candidate, fx)
    return x
