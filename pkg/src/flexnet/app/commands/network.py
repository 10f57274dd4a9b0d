"""
Commands on a single network file: metrics, check-ergodic, bounds, transform.
"""
import argparse
import logging

import pandas as pd

from ..bounds import bounds_table
from ..metrics import flexibility_metrics, min_weight, rational_json, theta_metric, theta_uniform
from ..stability import StabilityStatus, assess_stability, check_ergodic
from ..transforms import decrease_arrivals, edge_simplify, full_simplify, gamma_split, increase_service
from ..utils.model_io import dump_model, load_model
from .common import EXIT_OK, EXIT_REJECTED, add_common_options, emit_frame, emit_json, parse_assignments

logger = logging.getLogger(__name__)


def metrics_command(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    graph = model.graph
    metrics = flexibility_metrics(graph)
    payload = {
        "dispatchers": len(graph.dispatchers),
        "servers": len(graph.servers),
        "edges": len(graph.edges),
        **metrics.to_dict(),
        "theta_min_weight": rational_json(theta_metric(graph, min_weight(graph))),
        "theta_uniform": rational_json(theta_metric(graph, theta_uniform(graph))),
        "rho0": model.rho0(),
    }
    if args.format == "json":
        emit_json(args, payload)
    else:
        row = {k: v for k, v in payload.items() if not isinstance(v, dict)}
        for name in ("alpha", "beta", "theta_min_weight", "theta_uniform"):
            row[f"{name}_num"] = payload[name]["num"]
            row[f"{name}_den"] = payload[name]["den"]
            row[name] = payload[name]["float"]
        emit_frame(args, pd.DataFrame([row]))
    return EXIT_OK


def check_ergodic_command(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    verdict = check_ergodic(model, cap=args.cap) if not args.flow else assess_stability(model, cap=args.cap)
    emit_json(args, verdict.to_dict())
    logger.info(f"verdict: {verdict.status.value}")
    return EXIT_OK if verdict.status is StabilityStatus.ergodic else EXIT_REJECTED


def bounds_command(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    frame = bounds_table(model, args.imax, lambda0=args.lambda0, mu0=args.mu0)
    emit_frame(args, frame, meta={"rho0": model.rho0(args.lambda0, args.mu0), "simple": model.is_simple()})
    return EXIT_OK


def transform_command(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    if args.op == "edge-simplify":
        if not args.edge:
            raise ValueError("--edge d,u is required for edge-simplify")
        d, _, u = args.edge.partition(",")
        out, record = edge_simplify(model, (d.strip(), u.strip()))
        payload = {"model": dump_model(out), "record": record.to_dict()}
    elif args.op == "full-simplify":
        out, record = full_simplify(model)
        payload = {"model": dump_model(out), "record": record.to_dict()}
    elif args.op == "gamma-split":
        if args.gamma is None:
            raise ValueError("--gamma is required for gamma-split")
        g0, g_gamma, record = gamma_split(model, args.gamma)
        payload = {"g0_model": dump_model(g0), "g_gamma_model": dump_model(g_gamma), "record": record.to_dict()}
    elif args.op == "decrease-arrivals":
        out, record = decrease_arrivals(model, parse_assignments(args.rates or ""))
        payload = {"model": dump_model(out), "record": record.to_dict()}
    else:
        out, record = increase_service(model, parse_assignments(args.rates or ""))
        payload = {"model": dump_model(out), "record": record.to_dict()}
    emit_json(args, payload)
    return EXIT_OK


def register(subparsers) -> None:
    p = subparsers.add_parser("metrics", help="Flexibility metrics alpha, beta and theta")
    p.add_argument("model", help="Network JSON file")
    add_common_options(p)
    p.set_defaults(handler=metrics_command)

    p = subparsers.add_parser("check-ergodic", help="Ergodicity verdict with witness subset")
    p.add_argument("model", help="Network JSON file")
    p.add_argument("--cap", type=int, default=None, help="Subset enumeration cap on |S|")
    p.add_argument("--flow", action="store_true", help="Fall back to the max-flow certificate above the cap")
    add_common_options(p)
    p.set_defaults(handler=check_ergodic_command)

    p = subparsers.add_parser("bounds", help="Closed-form occupancy lower bounds per level")
    p.add_argument("model", help="Network JSON file")
    p.add_argument("--imax", type=int, default=10)
    p.add_argument("--lambda0", type=float, default=None, help="Arrival rate lower bound (default min lambda)")
    p.add_argument("--mu0", type=float, default=None, help="Service rate upper bound (default max mu)")
    add_common_options(p)
    p.set_defaults(handler=bounds_command)

    p = subparsers.add_parser("transform", help="Apply a monotone transformation")
    p.add_argument("model", help="Network JSON file")
    p.add_argument(
        "--op",
        required=True,
        choices=["edge-simplify", "full-simplify", "gamma-split", "decrease-arrivals", "increase-service"],
    )
    p.add_argument("--edge", help="Edge as d,u (edge-simplify)")
    p.add_argument("--gamma", type=float, help="Split level above beta (gamma-split)")
    p.add_argument("--rates", help="New rates as id=rate,... (decrease-arrivals, increase-service)")
    add_common_options(p)
    p.set_defaults(handler=transform_command)
