"""
Occupancy commands: solve-exact and simulate.
"""
import argparse
import logging

import pandas as pd

from ..exact import mean_total_tasks, solve_model
from ..sim import SimConfig, estimate_occupancy, little_check
from ..utils.model_io import load_model
from .common import EXIT_OK, EXIT_REJECTED, add_common_options, emit_frame

logger = logging.getLogger(__name__)


def solve_exact_command(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    solution, curve = solve_model(model, cap=args.cap, tol=args.tol, method=args.method, i_max=args.imax)
    frame = pd.DataFrame({"i": range(len(curve.values)), "Eq_i": curve.values})
    for u, tail in curve.server_tails.items():
        frame[f"tail_{u}"] = tail
    meta = solution.to_dict()
    meta["mean_total_tasks"] = mean_total_tasks(solution)
    emit_frame(args, frame, meta=meta)
    return EXIT_OK


def simulate_command(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    config = SimConfig(horizon=args.horizon, seed=args.seed, i_max=args.imax)
    result = estimate_occupancy(model, config, replications=args.reps, workers=args.workers)
    meta = result.to_dict()
    if result.aborted_unstable:
        logger.warning(f"simulation aborted at t={result.abort_time}: queues appear to diverge")
        # no partial result files; the abort report only goes to stdout
        if args.out is None:
            emit_frame(args, pd.DataFrame(columns=["i", "estimate", "ci_lo", "ci_hi"]), meta=meta)
        return EXIT_REJECTED

    curve = result.occupancy
    frame = pd.DataFrame({"i": range(len(curve.values)), "estimate": curve.values})
    half = pd.Series(curve.half_widths)
    frame["ci_lo"] = (frame["estimate"] - half).clip(lower=0.0)
    frame["ci_hi"] = (frame["estimate"] + half).clip(upper=1.0)
    meta["little"] = little_check(result, model).to_dict()
    emit_frame(args, frame, meta=meta)
    return EXIT_OK


def register(subparsers) -> None:
    p = subparsers.add_parser("solve-exact", help="Stationary occupancy of the truncated chain")
    p.add_argument("model", help="Network JSON file")
    p.add_argument("--cap", type=int, default=None, help="Per-server queue cap B")
    p.add_argument("--tol", type=float, default=None, help="Convergence tolerance")
    p.add_argument("--imax", type=int, default=None, help="Largest level reported (default B)")
    p.add_argument("--method", choices=["power", "direct"], default=None)
    add_common_options(p)
    p.set_defaults(handler=solve_exact_command)

    p = subparsers.add_parser("simulate", help="Discrete-event occupancy estimate with confidence intervals")
    p.add_argument("model", help="Network JSON file")
    p.add_argument("--horizon", type=float, default=1e5)
    p.add_argument("--reps", type=int, default=1, help="Independent replications")
    p.add_argument("--imax", type=int, default=10)
    p.add_argument("--workers", type=int, default=None, help="Processes for replications")
    add_common_options(p)
    p.set_defaults(handler=simulate_command)
