"""
Bound audits and experiment batteries: verify, sweep, monotonicity, battery,
lemma-scan and coupling.
"""
import argparse
import logging

import pandas as pd

from ..bounds import lemma1_scan, valid_from
from ..exceptions import BoundDomainError
from ..experiments import run_bound_battery, run_family_sweep, run_monotonicity_battery, run_verification, summarize_monotonicity
from ..metrics import rational_json
from ..schemas import ExperimentSpec
from ..sim import coupled_prop1_run
from .common import EXIT_FAILED_CHECK, EXIT_OK, add_common_options, emit_frame, parse_floats, parse_ints

logger = logging.getLogger(__name__)


def _failed_flags(frame: pd.DataFrame) -> int:
    columns = [c for c in frame.columns if c.endswith("_pass")]
    if frame.empty or not columns:
        return 0
    # None marks levels below the asserted threshold
    return int(sum(frame[c].eq(False).sum() for c in columns))


def verify_command(args: argparse.Namespace) -> int:
    spec = ExperimentSpec(
        model_path=args.model,
        family=args.family,
        n=args.n,
        load_factor=args.load_factor,
        method=args.method,
        bounds=[k.strip() for k in args.bounds.split(",") if k.strip()],
        i_max=args.imax,
        cap=args.cap,
        tol=args.tol,
        solver_method=args.solver_method,
        horizon=args.horizon,
        replications=args.reps,
        seed=args.seed,
        output=str(args.out) if args.out else None,
    )
    result = run_verification(spec)
    meta = {
        "verdict": result.verdict.to_dict(),
        "rho0": result.rho0,
        "alpha": rational_json(result.alpha),
        "beta": rational_json(result.beta),
        "valid_from": valid_from(result.rho0),
        "passed": result.passed,
        "details": result.details,
        "experiment": spec.model_dump(mode="json"),
    }
    emit_frame(args, result.frame(), meta=meta)
    return EXIT_OK if result.passed else EXIT_FAILED_CHECK


def sweep_command(args: argparse.Namespace) -> int:
    frame = run_family_sweep(
        args.family,
        range(args.n_min, args.n_max + 1),
        load_factor=args.load_factor,
        method=args.method,
        i_max=args.imax,
        cap=args.cap,
        horizon=args.horizon,
        replications=args.reps,
        seed=args.seed,
        workers=args.workers,
    )
    failed = _failed_flags(frame)
    emit_frame(args, frame, meta={"family": args.family, "n_min": args.n_min, "n_max": args.n_max, "failed": failed})
    return EXIT_OK if failed == 0 else EXIT_FAILED_CHECK


def monotonicity_command(args: argparse.Namespace) -> int:
    frame = run_monotonicity_battery(args.count, args.seed, workers=args.workers)
    summary = summarize_monotonicity(frame) if not frame.empty else pd.DataFrame()
    failures = int(frame["ok"].eq(False).sum()) if not frame.empty else 0
    conclusive = frame.attrs.get("conclusive", 0)
    meta = {"count": args.count, "conclusive": conclusive, "failures": failures, "summary": summary.to_dict(orient="records")}
    emit_frame(args, frame, meta=meta)
    return EXIT_OK if failures == 0 and conclusive >= args.count else EXIT_FAILED_CHECK


def battery_command(args: argparse.Namespace) -> int:
    frame = run_bound_battery(args.count, args.seed, i_max=args.imax, workers=args.workers)
    failed = _failed_flags(frame)
    conclusive = frame.attrs.get("conclusive", 0)
    emit_frame(args, frame, meta={"count": args.count, "conclusive": conclusive, "failed": failed})
    return EXIT_OK if failed == 0 and conclusive >= args.count else EXIT_FAILED_CHECK


def lemma_scan_command(args: argparse.Namespace) -> int:
    rows = []
    for rho in parse_floats(args.rho):
        start = valid_from(rho)
        for offset in parse_ints(args.k_offsets):
            try:
                report = lemma1_scan(rho, start + offset, rho + args.width, args.points)
            except BoundDomainError as e:
                logger.warning(f"lemma-scan rho={rho} k={start + offset}: {e}")
                continue
            rows.append(report.to_dict())
    frame = pd.DataFrame(rows)
    ok = not frame.empty and bool((frame["decreasing"] & frame["convex"]).all())
    emit_frame(args, frame)
    return EXIT_OK if ok else EXIT_FAILED_CHECK


def coupling_command(args: argparse.Namespace) -> int:
    rows = []
    for s in parse_ints(args.servers):
        for rho in parse_floats(args.rho):
            if not rho < s:
                logger.warning(f"coupling: skipping rho={rho} >= s={s}")
                continue
            for r in range(args.runs):
                report = coupled_prop1_run(s, rho, seed=args.seed + r, max_events=args.events)
                rows.append({"run": r, **report.to_dict(), "dominated": report.dominated})
    frame = pd.DataFrame(rows)
    bad = 0 if frame.empty else int((~frame["dominated"]).sum() + (frame["equality_violations"] > 0).sum())
    emit_frame(args, frame)
    return EXIT_OK if bad == 0 else EXIT_FAILED_CHECK


def register(subparsers) -> None:
    p = subparsers.add_parser("verify", help="Audit occupancy against the lower bounds")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", help="Network JSON file")
    source.add_argument("--family", choices=["g1", "g2", "complete"])
    p.add_argument("--n", type=int, default=None, help="Family size")
    p.add_argument("--load-factor", type=float, default=None, help="Fraction of the critical uniform arrival rate")
    p.add_argument("--method", choices=["exact", "simulate"], default="exact")
    p.add_argument("--bounds", default="prop1,thm1,thm2,thm3", help="Comma-separated bound kinds")
    p.add_argument("--imax", type=int, default=10)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--solver-method", choices=["power", "direct"], default=None)
    p.add_argument("--horizon", type=float, default=1e5)
    p.add_argument("--reps", type=int, default=1)
    add_common_options(p)
    p.set_defaults(handler=verify_command)

    p = subparsers.add_parser("sweep", help="Family sweep over n with metrics, bounds and occupancy")
    p.add_argument("--family", choices=["g1", "g2"], required=True)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--load-factor", type=float, default=None)
    p.add_argument("--method", choices=["auto", "exact", "simulate"], default="auto")
    p.add_argument("--imax", type=int, default=10)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--horizon", type=float, default=1e5)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--workers", type=int, default=None)
    add_common_options(p)
    p.set_defaults(handler=sweep_command)

    p = subparsers.add_parser("monotonicity", help="Random-model battery for the monotone transformations")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--workers", type=int, default=None)
    add_common_options(p)
    p.set_defaults(handler=monotonicity_command)

    p = subparsers.add_parser("battery", help="Random-model battery for the alpha, beta and theta bounds")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--imax", type=int, default=10)
    p.add_argument("--workers", type=int, default=None)
    add_common_options(p)
    p.set_defaults(handler=battery_command)

    p = subparsers.add_parser("lemma-scan", help="Check that r(rho, x)^k / x is decreasing and convex")
    p.add_argument("--rho", default="0.5,1,2", help="Comma-separated rho values")
    p.add_argument("--k-offsets", default="0,1,3", help="k = ceil(1/rho) + offset")
    p.add_argument("--width", type=float, default=10.0, help="Scan [rho, rho + width]")
    p.add_argument("--points", type=int, default=1000)
    add_common_options(p)
    p.set_defaults(handler=lemma_scan_command)

    p = subparsers.add_parser("coupling", help="Pathwise check of the simple-network bound against one M/M/1 queue")
    p.add_argument("--servers", default="1,2,3")
    p.add_argument("--rho", default="0.5,0.9")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--events", type=int, default=100_000)
    add_common_options(p)
    p.set_defaults(handler=coupling_command)
