import argparse
import json
import logging
import math
import sys
from typing import Dict, Optional

import numpy as np
import pandas as pd

from bequest import __version__
from bequest.analysis import classify_monotonicity, check_leveraging
from bequest.crew_builder import VerificationCrew
from bequest.errors import BequestError, ConfigError
from bequest.model import ModelParams, Regime
from bequest.montecarlo import MAX_DT, SimConfig, simulate
from bequest.primal import eval_phi, solve
from bequest.settings import load_settings

logger = logging.getLogger("pipeline")

SCHEMA_VERSION = 1
STRATEGIES = ["optimal", "ruin-min", "zero-consumption", "ruin-at-safe"]


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--mu", type=float, default=0.08, help="Drift of the risky asset")
    group.add_argument("--r", type=float, default=0.04, help="Riskless rate")
    group.add_argument("--sigma", type=float, default=0.2, help="Volatility of the risky asset")
    group.add_argument("--lambda", dest="lam", type=float, default=0.04, help="Mortality hazard rate")
    group.add_argument("--c", type=float, default=0.02, help="Consumption rate")
    group.add_argument("--b", type=float, default=1.0, help="Bequest goal")


def _add_output_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=["csv", "json"], default="csv", help="Output format")
    parser.add_argument("--out", help="Write output to this file instead of stdout")


def _add_mc_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("monte carlo")
    group.add_argument("--paths", type=int, help="Number of simulated paths")
    group.add_argument("--dt", type=float, help="Time step in years (at most 1/252)")
    group.add_argument("--seed", type=int, help="Random seed")
    group.add_argument("--jobs", type=int, help="Parallel workers")
    group.add_argument("--config", help="Path to verification settings JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Maximum probability of reaching a bequest goal")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="Tabulate phi and pi* over a wealth grid")
    _add_model_args(p_solve)
    p_solve.add_argument("--grid", type=int, default=101, help="Number of grid points")
    p_solve.add_argument("--lo", type=float, help="Lowest wealth (default 0)")
    p_solve.add_argument("--hi", type=float, help="Highest wealth (default safe level)")
    _add_output_args(p_solve)

    p_sweep = sub.add_parser("sweep", help="Vary one input and report phi(w0), pi*(w0) and boundaries")
    _add_model_args(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=["mu", "r", "sigma", "lambda", "c", "b"])
    p_sweep.add_argument("--start", type=float, required=True)
    p_sweep.add_argument("--stop", type=float, required=True)
    p_sweep.add_argument("--steps", type=int, default=11)
    p_sweep.add_argument("--w0", type=float, help="Wealth at which to report (default b/2)")
    _add_output_args(p_sweep)

    p_sim = sub.add_parser("simulate", help="Monte Carlo estimate of the success probability")
    _add_model_args(p_sim)
    _add_mc_args(p_sim)
    p_sim.add_argument("--w0", type=float, help="Initial wealth (default half the safe level)")
    p_sim.add_argument("--strategy", choices=STRATEGIES, default="optimal")
    _add_output_args(p_sim)

    p_verify = sub.add_parser("verify", help="Run every residual, strategy and Monte Carlo check")
    _add_model_args(p_verify)
    _add_mc_args(p_verify)
    p_verify.add_argument("--quick", action="store_true", help="Skip the Monte Carlo suite")
    p_verify.add_argument("--corrupt-zb0", type=float, help=argparse.SUPPRESS)
    _add_output_args(p_verify)

    p_props = sub.add_parser("props", help="Report qualitative properties of the optimal strategy")
    _add_model_args(p_props)
    _add_output_args(p_props)
    return parser


def _params(args) -> ModelParams:
    return ModelParams(mu=args.mu, r=args.r, sigma=args.sigma, lam=args.lam, c=args.c, b=args.b)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _flatten(meta: Dict, prefix: str = "") -> Dict:
    flat = {}
    for key, value in meta.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif value is not None:
            flat[name] = value
    return flat


def _format_meta(value) -> str:
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def render(table: pd.DataFrame, meta: Dict, fmt: str) -> str:
    """CSV with '# key=value' header lines, or a versioned JSON document."""
    if fmt == "json":
        doc = {"schema": SCHEMA_VERSION, "tool_version": __version__}
        doc.update(meta)
        doc["rows"] = [_jsonable(row) for row in table.to_dict(orient="records")]
        return json.dumps(_jsonable(doc), indent=2) + "\n"
    lines = [f"# schema={SCHEMA_VERSION}", f"# tool_version={__version__}"]
    lines += [f"# {k}={_format_meta(v)}" for k, v in _flatten(meta).items()]
    body = table.to_csv(index=False, float_format="%.17g", na_rep="", lineterminator="\n")
    return "\n".join(lines) + "\n" + body


def emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="") as f:
            f.write(text)
        logger.info(f"✅ Output saved to: {out}")
    else:
        sys.stdout.write(text)


def _settings(args):
    settings = load_settings(args.config)
    overrides = {}
    if args.paths is not None:
        overrides["n_paths"] = args.paths
    if args.dt is not None:
        if not 0.0 < args.dt <= MAX_DT * (1.0 + 1e-12):
            raise ConfigError(f"--dt must lie in (0, 1/252], got {args.dt!r}")
        # 1/(1/252) may round below 252
        overrides["steps_per_year"] = max(1.0 / args.dt, 252.0)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["n_jobs"] = args.jobs
    if overrides:
        mc = settings.monte_carlo.model_validate({**settings.monte_carlo.model_dump(), **overrides})
        settings = settings.model_copy(update={"monte_carlo": mc})
    return settings


def run_solve(args) -> int:
    params = _params(args)
    crew = VerificationCrew()
    solution = solve(params)
    grid = crew.tabulator.wealth_grid(solution, args.grid, args.lo, args.hi)
    table = crew.tabulator.tabulate(solution, grid)
    emit(render(table, crew.tabulator.metadata(solution), args.format), args.out)
    return 0


def run_sweep(args) -> int:
    params = _params(args)
    crew = VerificationCrew()
    if args.steps < 2:
        raise ValueError("--steps must be at least 2")
    values = np.linspace(args.start, args.stop, args.steps)
    w0 = params.b / 2.0 if args.w0 is None else args.w0
    table = crew.tabulator.sweep(params, args.param, values, w0)
    meta = {"params": params.as_dict(), "sweep": {"param": args.param, "w0": w0}}
    emit(render(table, meta, args.format), args.out)
    return 0


def run_simulate(args) -> int:
    params = _params(args)
    settings = _settings(args)
    mc = settings.monte_carlo
    solution = solve(params)
    w0 = 0.5 * solution.w_safe if args.w0 is None else args.w0
    config = SimConfig(
        w0=w0,
        n_paths=mc.n_paths,
        dt=args.dt if args.dt is not None else mc.dt,
        seed=mc.seed,
        horizon_cap=mc.horizon_lifetimes / params.lam,
        strategy=args.strategy,
        n_jobs=mc.n_jobs,
        block_size=mc.block_size,
    )
    result = simulate(params, config, solution)
    row = result.as_dict()
    row["phi"] = eval_phi(solution, w0)
    meta = {
        "params": params.as_dict(),
        "regime": solution.regime.value,
        "simulation": {"w0": w0, "strategy": args.strategy, "dt": config.dt, "seed": config.seed},
    }
    emit(render(pd.DataFrame([row]), meta, args.format), args.out)
    return 0


def run_verify(args) -> int:
    params = _params(args)
    crew = VerificationCrew(settings=_settings(args))
    report = crew.run(params, quick=args.quick, z_b0=args.corrupt_zb0)
    meta = {"params": params.as_dict(), "quick": args.quick}
    emit(render(report, meta, args.format), args.out)
    print(crew.narrator.render(report), file=sys.stderr)
    failed = crew.narrator.first_failure(report)
    if failed is not None:
        logger.error(f"❌ Verification failed: {failed}")
        return 1
    logger.info("✅ All checks passed")
    return 0


def run_props(args) -> int:
    params = _params(args)
    crew = VerificationCrew()
    solution = solve(params)
    table = pd.DataFrame(crew.checker.strategy_checks(solution))
    meta = {"params": params.as_dict(), "regime": solution.regime.value}
    if solution.regime is Regime.LOW:
        report = classify_monotonicity(solution)
        meta["monotonicity"] = {
            "kind": report.kind.value,
            "case": report.case,
            "w_star": report.w_star,
            "c_star": report.c_star,
        }
    elif solution.regime is Regime.ZERO:
        leverage = check_leveraging(params)
        meta["leveraging"] = {"status": leverage.status.value, "sigma_l": leverage.sigma_l}
    emit(render(table, meta, args.format), args.out)
    return 0


COMMANDS = {
    "solve": run_solve,
    "sweep": run_sweep,
    "simulate": run_simulate,
    "verify": run_verify,
    "props": run_props,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    logger.info(f"🚀 Starting {args.command}...")
    try:
        return COMMANDS[args.command](args)
    except (BequestError, ValueError) as e:
        logger.error(f"❌ Error running {args.command}: {e}")
        return 2
    except OSError as e:
        logger.error(f"❌ I/O error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
