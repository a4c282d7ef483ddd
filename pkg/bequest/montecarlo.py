"""
Monte Carlo verification of the bequest-goal solution.

Wealth follows dW = (rW + (mu - r) pi(W) - c) dt + sigma pi(W) dB, discretised
with Euler-Maruyama. Each path dies at an exponential time drawn up front and
is absorbed at 0 (ruin) or at the safe level (success), including crossings
between grid points detected by a Brownian-bridge test. Paths are processed in
fixed-size blocks with their own seed stream so that results do not depend on
how blocks are spread over workers.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigError, RegimeError
from .model import ModelParams, safe_level
from .primal import BENCHMARKS, Solution, feedback_strategy, solve, value_derivatives

logger = logging.getLogger(__name__)

MAX_DT = 1.0 / 252.0
DEFAULT_HORIZON_LIFETIMES = 50.0
MIN_HORIZON_LIFETIMES = 10.0

# path outcome codes
PENDING = 0
RUINED = 1
DIED_BELOW = 2
DIED_AT_OR_ABOVE = 3
SAFE = 4
CAPPED = 5

Strategy = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SimConfig:
    """
    Monte Carlo settings.

    Random numbers are drawn per block of block_size paths, block k seeded
    with SeedSequence(seed, spawn_key=(k,)). An estimate is therefore a
    function of seed, n_paths, dt and block_size: changing block_size
    regroups the streams and changes the sample, while n_jobs only decides
    where blocks run and never changes the result.
    """

    w0: float
    n_paths: int = 10_000
    dt: float = MAX_DT
    seed: int = 0
    horizon_cap: Optional[float] = None
    strategy: Union[str, Strategy] = "optimal"
    n_jobs: int = 1
    block_size: int = 4096

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be at least 1, got {self.n_paths}")
        if not (0.0 < self.dt <= MAX_DT * (1.0 + 1e-12)):
            raise ConfigError(f"dt must lie in (0, 1/252], got {self.dt!r}")
        if not (math.isfinite(self.w0) and self.w0 >= 0.0):
            raise ConfigError(f"Initial wealth must be finite and non-negative, got {self.w0!r}")
        if self.horizon_cap is not None and not self.horizon_cap > 0.0:
            raise ConfigError(f"horizon_cap must be positive, got {self.horizon_cap!r}")
        if self.block_size < 1:
            raise ConfigError(f"block_size must be at least 1, got {self.block_size}")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be non-zero")
        if isinstance(self.strategy, str) and self.strategy not in ("optimal", *BENCHMARKS):
            raise ConfigError(f"Unknown strategy '{self.strategy}'")

    def horizon(self, params: ModelParams) -> float:
        cap = DEFAULT_HORIZON_LIFETIMES / params.lam if self.horizon_cap is None else self.horizon_cap
        if cap < MIN_HORIZON_LIFETIMES / params.lam:
            raise ConfigError(f"horizon_cap {cap!r} is shorter than 10 expected lifetimes")
        return cap


@dataclass(frozen=True)
class SimResult:
    p_hat: float
    std_err: float
    n_paths: int
    n_ruined: int
    n_died_below_b: int
    n_died_at_or_above_b: int
    n_safe: int
    n_capped: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class _BlockOutput:
    outcomes: np.ndarray
    hit_times: np.ndarray
    n_steps: int
    sum_ret: float
    sum_ret_sq: float
    sum_log: float
    sum_log_sq: float


def _advance(
    params: ModelParams,
    strategy: Strategy,
    w: np.ndarray,
    h: np.ndarray,
    shock: np.ndarray,
    u: np.ndarray,
    w_safe: float,
):
    """
    One Euler step of length h driven by the Brownian increment `shock`.

    Between grid points the path is treated as a Brownian bridge with the
    volatility frozen at the step start, so it may touch 0 or the safe level
    even when both endpoints lie inside. The single uniform u decides both
    crossings: ruin first, then the safe level.
    """
    pi = strategy(w)
    w_next = w + (params.r * w + (params.mu - params.r) * pi - params.c) * h + params.sigma * pi * shock
    vol2 = (params.sigma * pi) ** 2 * h
    far = np.full(w.shape, math.inf)
    down = np.divide(np.maximum(w * w_next, 0.0), vol2, out=far.copy(), where=vol2 > 0.0)
    up = np.divide(np.maximum((w_safe - w) * (w_safe - w_next), 0.0), vol2, out=far, where=vol2 > 0.0)
    p_down = np.exp(-2.0 * down)
    p_up = np.exp(-2.0 * up)
    ruined = (w_next <= 0.0) | (u < p_down)
    safe = ~ruined & ((w_next >= w_safe) | (u < p_down + p_up))
    return w_next, ruined, safe


class _Paths:
    """Wealth, clock and outcome of one block of paths at one step size."""

    def __init__(self, params: ModelParams, w0: float, death: np.ndarray, cap: float):
        n = death.size
        self.params = params
        self.w_safe = safe_level(params)
        self.death = death
        self.cap = cap
        self.wealth = np.full(n, float(w0))
        self.t = np.zeros(n)
        self.outcome = np.zeros(n, dtype=np.int8)
        self.hit_times = np.full(n, math.nan)
        if w0 <= 0.0:
            self.outcome[:] = RUINED
        elif w0 >= self.w_safe:
            self.outcome[:] = SAFE
            self.hit_times[:] = 0.0

    def pending(self, idx: np.ndarray) -> np.ndarray:
        return self.outcome[idx] == PENDING

    def step(self, strategy: Strategy, idx: np.ndarray, h, shock, u, last) -> np.ndarray:
        """Advance the paths idx by h; `last` marks steps that end at death or the cap."""
        prm = self.params
        w_next, ruined, safe = _advance(prm, strategy, self.wealth[idx], h, shock, u, self.w_safe)
        self.t[idx] += h

        ended = ~ruined & ~safe & last
        died = ended & (self.death[idx] <= self.cap)
        code = np.zeros(idx.size, dtype=np.int8)
        code[ruined] = RUINED
        code[safe] = SAFE
        code[died & (w_next < prm.b)] = DIED_BELOW
        code[died & (w_next >= prm.b)] = DIED_AT_OR_ABOVE
        code[ended & ~died] = CAPPED

        self.wealth[idx] = w_next
        self.outcome[idx] = code
        self.hit_times[idx[safe]] = self.t[idx[safe]]
        return w_next


def _lifetimes(rng: np.random.Generator, params: ModelParams, n: int, cap: float, with_death: bool):
    if not with_death:
        return np.full(n, math.inf), np.full(n, cap)
    death = rng.exponential(1.0 / params.lam, size=n)
    return death, np.minimum(death, cap)


def _simulate_block(
    params: ModelParams,
    strategy: Strategy,
    w0: float,
    dt: float,
    cap: float,
    seed: int,
    block: int,
    n: int,
    with_death: bool = True,
) -> _BlockOutput:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    death, stop = _lifetimes(rng, params, n, cap, with_death)
    paths = _Paths(params, w0, death, cap)

    n_steps, sum_ret, sum_ret_sq, sum_log, sum_log_sq = 0, 0.0, 0.0, 0.0, 0.0
    alive = np.flatnonzero(paths.pending(np.arange(n)))
    while alive.size:
        remaining = stop[alive] - paths.t[alive]
        h = np.minimum(dt, remaining)
        last = remaining <= dt
        shock = rng.standard_normal(alive.size) * np.sqrt(h)
        u = rng.random(alive.size)
        w = paths.wealth[alive]
        w_next = paths.step(strategy, alive, h, shock, u, last)

        full = ~last & (w_next > 0.0)
        if full.any():
            ret = w_next[full] / w[full] - 1.0
            log_ret = np.log1p(ret)
            n_steps += int(full.sum())
            sum_ret += float(ret.sum())
            sum_ret_sq += float(np.dot(ret, ret))
            sum_log += float(log_ret.sum())
            sum_log_sq += float(np.dot(log_ret, log_ret))

        alive = alive[paths.pending(alive)]

    return _BlockOutput(paths.outcome, paths.hit_times, n_steps, sum_ret, sum_ret_sq, sum_log, sum_log_sq)


def _simulate_pair_block(
    params: ModelParams,
    strategy: Strategy,
    w0: float,
    dt: float,
    cap: float,
    seed: int,
    block: int,
    n: int,
):
    """
    The same paths at steps dt and dt/2. Both levels share death times, and
    each coarse increment is the sum of the two fine increments under it.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    death, stop = _lifetimes(rng, params, n, cap, True)
    coarse = _Paths(params, w0, death, cap)
    fine = _Paths(params, w0, death, cap)
    clock = np.zeros(n)
    half = 0.5 * dt

    active = np.arange(n)
    active = active[coarse.pending(active) | fine.pending(active)]
    while active.size:
        remaining = stop[active] - clock[active]
        h1 = np.minimum(half, remaining)
        h2 = np.minimum(half, remaining - h1)
        z = rng.standard_normal((2, active.size))
        u = rng.random((3, active.size))
        shock1 = z[0] * np.sqrt(h1)
        shock2 = z[1] * np.sqrt(h2)

        sel = coarse.pending(active)
        coarse.step(strategy, active[sel], (h1 + h2)[sel], (shock1 + shock2)[sel], u[0][sel],
                    (remaining <= dt)[sel])
        sel = fine.pending(active)
        fine.step(strategy, active[sel], h1[sel], shock1[sel], u[1][sel], (remaining <= half)[sel])
        sel = fine.pending(active)
        fine.step(strategy, active[sel], h2[sel], shock2[sel], u[2][sel], (remaining <= dt)[sel])

        clock[active] += h1 + h2
        active = active[coarse.pending(active) | fine.pending(active)]

    return coarse.outcome, fine.outcome


def resolve_strategy(solution: Solution, strategy: Union[str, Strategy]) -> Strategy:
    if callable(strategy):
        return strategy
    if strategy == "optimal":
        return feedback_strategy(solution)
    rule = BENCHMARKS[strategy]
    return lambda w: rule(solution, w)


def _block_sizes(config: SimConfig) -> list:
    return [
        min(config.block_size, config.n_paths - start)
        for start in range(0, config.n_paths, config.block_size)
    ]


def _run_blocks(params: ModelParams, strategy: Strategy, config: SimConfig, with_death: bool = True):
    cap = config.horizon(params)
    sizes = _block_sizes(config)
    jobs = (
        delayed(_simulate_block)(
            params, strategy, config.w0, config.dt, cap, config.seed, block, n, with_death
        )
        for block, n in enumerate(sizes)
    )
    outputs = Parallel(n_jobs=config.n_jobs)(jobs)
    logger.debug(f"Simulated {len(sizes)} blocks of up to {config.block_size} paths")
    return outputs


def _summarise(outcomes: np.ndarray) -> SimResult:
    counts = np.bincount(outcomes, minlength=CAPPED + 1)
    n = int(outcomes.size)
    successes = int(counts[DIED_AT_OR_ABOVE] + counts[SAFE])
    p_hat = successes / n
    return SimResult(
        p_hat=p_hat,
        std_err=math.sqrt(p_hat * (1.0 - p_hat) / n),
        n_paths=n,
        n_ruined=int(counts[RUINED]),
        n_died_below_b=int(counts[DIED_BELOW]),
        n_died_at_or_above_b=int(counts[DIED_AT_OR_ABOVE]),
        n_safe=int(counts[SAFE]),
        n_capped=int(counts[CAPPED]),
    )


def simulate(params: ModelParams, config: SimConfig, solution: Optional[Solution] = None) -> SimResult:
    """
    Estimate P(wealth at death >= b) under the configured feedback strategy.

    Args:
        params: Model inputs
        config: Simulation settings
        solution: Reused solution; solved from params when omitted

    Returns:
        SimResult with the estimate, its standard error and outcome counts
    """
    if solution is None and not callable(config.strategy):
        solution = solve(params)
    strategy = resolve_strategy(solution, config.strategy)
    outputs = _run_blocks(params, strategy, config)
    result = _summarise(np.concatenate([o.outcomes for o in outputs]))
    if result.n_capped:
        logger.warning(f"{result.n_capped} paths reached the horizon cap and count as failures")
    logger.info(f"MC estimate {result.p_hat:.5f} +/- {result.std_err:.5f} from {result.n_paths} paths")
    return result


@dataclass(frozen=True)
class RefinementReport:
    coarse: SimResult
    fine: SimResult

    @property
    def difference(self) -> float:
        return self.fine.p_hat - self.coarse.p_hat

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= 2.0 * self.coarse.std_err


def check_step_refinement(
    params: ModelParams, config: SimConfig, solution: Optional[Solution] = None
) -> RefinementReport:
    """
    Simulate at config.dt and at half of it on shared Brownian paths. The
    estimates should differ by less than two standard errors of the coarse one.
    """
    if solution is None and not callable(config.strategy):
        solution = solve(params)
    strategy = resolve_strategy(solution, config.strategy)
    cap = config.horizon(params)
    jobs = (
        delayed(_simulate_pair_block)(params, strategy, config.w0, config.dt, cap, config.seed, block, n)
        for block, n in enumerate(_block_sizes(config))
    )
    pairs = Parallel(n_jobs=config.n_jobs)(jobs)
    report = RefinementReport(
        coarse=_summarise(np.concatenate([c for c, _ in pairs])),
        fine=_summarise(np.concatenate([f for _, f in pairs])),
    )
    logger.info(
        f"Step refinement: {report.coarse.p_hat:.5f} at dt, {report.fine.p_hat:.5f} at dt/2"
    )
    return report


@dataclass(frozen=True)
class NoRuinReport:
    n_ruined: int
    n_steps: int
    ret_mean: float
    ret_mean_expected: float
    ret_mean_se: float
    log_mean: float
    log_mean_expected: float
    log_mean_se: float
    vol: float
    vol_expected: float
    vol_se: float

    @property
    def passed(self) -> bool:
        return (
            self.n_ruined == 0
            and abs(self.ret_mean - self.ret_mean_expected) < 3.0 * self.ret_mean_se
            and abs(self.log_mean - self.log_mean_expected) < 3.0 * self.log_mean_se
            and abs(self.vol - self.vol_expected) < 3.0 * self.vol_se
        )


def _expected_log_return(mean: float, scale: float, n_nodes: int = 16) -> float:
    """E[log(1 + X)] for X ~ N(mean, scale^2), one Euler step of the optimal wealth."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    step = np.maximum(mean + scale * nodes, -1.0 + 1e-12)
    return float(np.dot(weights, np.log1p(step)) / math.sqrt(2.0 * math.pi))


def check_no_ruin_zero_c(params: ModelParams, config: SimConfig) -> NoRuinReport:
    """
    Without consumption the optimal wealth is a geometric Brownian motion:
    no path is ruined and one-step returns have the predicted drift and
    volatility.
    """
    if params.c > 0.0:
        raise RegimeError("The no-ruin check applies to c = 0")
    solution = solve(params)
    k = solution.constants
    outputs = _run_blocks(params, resolve_strategy(solution, "optimal"), config)
    outcomes = np.concatenate([o.outcomes for o in outputs])

    n = sum(o.n_steps for o in outputs)
    ret_mean = sum(o.sum_ret for o in outputs) / n
    ret_var = sum(o.sum_ret_sq for o in outputs) / n - ret_mean ** 2
    log_mean = sum(o.sum_log for o in outputs) / n
    log_var = sum(o.sum_log_sq for o in outputs) / n - log_mean ** 2

    drift = params.r + 2.0 * k.m * (1.0 - k.alpha2)
    vol = (params.mu - params.r) / params.sigma * (1.0 - k.alpha2)
    dt = config.dt
    vol_hat = math.sqrt(max(ret_var, 0.0) / dt)
    report = NoRuinReport(
        n_ruined=int(np.sum(outcomes == RUINED)),
        n_steps=n,
        ret_mean=ret_mean,
        ret_mean_expected=drift * dt,
        ret_mean_se=math.sqrt(ret_var / n),
        log_mean=log_mean,
        log_mean_expected=_expected_log_return(drift * dt, vol * math.sqrt(dt)),
        log_mean_se=math.sqrt(log_var / n),
        vol=vol_hat,
        vol_expected=vol,
        vol_se=vol / math.sqrt(2.0 * n),
    )
    logger.info(f"No-ruin check: {report.n_ruined} ruined paths over {n} steps")
    return report


@dataclass(frozen=True)
class LaplaceReport:
    estimate: float
    std_err: float
    expected: float
    n_hit: int

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.expected) <= 3.0 * self.std_err


def laplace_hitting_check(params: ModelParams, config: SimConfig) -> LaplaceReport:
    """
    Average of exp(-lambda tau_b) over undying paths against phi(w0), c = 0.
    Paths are followed for at most 10 expected lifetimes, where the discount
    is below exp(-10).
    """
    if params.c > 0.0:
        raise RegimeError("The hitting-time identity applies to c = 0")
    solution = solve(params)
    cap = min(config.horizon(params), MIN_HORIZON_LIFETIMES / params.lam)
    capped = replace(config, horizon_cap=cap)
    outputs = _run_blocks(params, resolve_strategy(solution, "optimal"), capped, with_death=False)
    hit_times = np.concatenate([o.hit_times for o in outputs])
    discount = np.where(np.isnan(hit_times), 0.0, np.exp(-params.lam * np.nan_to_num(hit_times)))
    estimate = float(discount.mean())
    std_err = float(discount.std(ddof=1) / math.sqrt(discount.size)) if discount.size > 1 else 0.0
    if config.w0 >= solution.w_safe:
        expected = 1.0
    else:
        expected = float(value_derivatives(solution, np.array([config.w0]))[0][0])
    return LaplaceReport(
        estimate=estimate,
        std_err=std_err,
        expected=expected,
        n_hit=int(np.sum(~np.isnan(hit_times))),
    )


def hjb_residuals(solution: Solution, grid) -> np.ndarray:
    """
    lambda (phi - 1{w >= b}) - (r w - c) phi_w - max_pi [(mu - r) pi phi_w + sigma^2 pi^2 phi_ww / 2]
    at interior grid points, the maximum taken at pi*.
    """
    prm = solution.params
    w = np.asarray(grid, dtype=float)
    w = w[(w > 0.0) & (w < solution.w_safe)]
    if solution.has_kink:
        w = w[w != prm.b]
    phi, phi_w, phi_ww, pi = value_derivatives(solution, w)
    hamiltonian = (prm.mu - prm.r) * pi * phi_w + 0.5 * prm.sigma ** 2 * pi ** 2 * phi_ww
    return prm.lam * (phi - (w >= prm.b)) - (prm.r * w - prm.c) * phi_w - hamiltonian


def hjb_residual(solution: Solution, grid) -> float:
    residuals = hjb_residuals(solution, grid)
    return float(np.max(np.abs(residuals))) if residuals.size else 0.0


@dataclass(frozen=True)
class BenchmarkComparison:
    benchmark: str
    optimal: SimResult
    alternative: SimResult

    @property
    def joint_std_err(self) -> float:
        return math.hypot(self.optimal.std_err, self.alternative.std_err)

    @property
    def passed(self) -> bool:
        return self.alternative.p_hat <= self.optimal.p_hat + 3.0 * self.joint_std_err


def compare_to_benchmark(params: ModelParams, config: SimConfig, benchmark: str) -> BenchmarkComparison:
    """Simulate the optimal rule and a benchmark rule on the same random numbers."""
    if benchmark not in BENCHMARKS:
        raise ConfigError(f"Unknown benchmark '{benchmark}'")
    solution = solve(params)
    optimal = simulate(params, _with_strategy(config, "optimal"), solution)
    alternative = simulate(params, _with_strategy(config, benchmark), solution)
    return BenchmarkComparison(benchmark=benchmark, optimal=optimal, alternative=alternative)


def _with_strategy(config: SimConfig, strategy: Union[str, Strategy]) -> SimConfig:
    return replace(config, strategy=strategy)
