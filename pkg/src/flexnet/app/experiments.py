"""
Experiment harness: bound verification, family sweeps and random batteries.

Results are pandas DataFrames in long format, one row per (unit, level), so
they can be written as CSV without further reshaping. Independent units
(family sizes, sampled models) run in a process pool when more than one
worker is configured; rows are always assembled in unit order.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .bounds import (
    convex_combination_bound,
    prop1_bound,
    thm1_bound,
    thm2_bound,
    thm3_bound,
    theta_bound,
    valid_from,
)
from .config import get_config
from .exact import largest_cap, solve_model, solve_within_boundary, occupancy_exact, tail_compare
from .exceptions import FlexnetError, StabilityRejected
from .families import build_family, scale_rates
from .metrics import alpha as alpha_metric, beta as beta_metric, min_weight, theta_metric, theta_uniform
from .models import NetworkModel, OccupancyCurve
from .schemas import ExperimentSpec
from .sim import SimConfig, estimate_occupancy
from .stability import StabilityVerdict, assess_stability, critical_uniform_rate
from .transforms import TransformKind, decrease_arrivals, edge_simplify, increase_service
from .utils.model_io import load_model
from .utils.sampling import sample_model

logger = logging.getLogger(__name__)

BOUND_KINDS = ("prop1", "thm1", "theta", "thm2", "thm3")

# (B + 1)^|S| budget for the exact solver inside batteries
BATTERY_STATE_BUDGET = 300_000

# draws allowed per requested model while looking for conclusive units
BATTERY_DRAW_FACTOR = 10


def _map_units(fn: Callable, units: Sequence, workers: Optional[int]) -> List:
    workers = get_config().experiment.workers if workers is None else workers
    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, units))
    return [fn(unit) for unit in units]


def scale_family(model: NetworkModel, load_factor: Optional[float] = None, mu: float = 1.0) -> NetworkModel:
    """All mu equal, all lambda = load_factor times the critical common arrival rate"""
    load_factor = get_config().experiment.load_factor if load_factor is None else load_factor
    if not 0 < load_factor < 1:
        raise ValueError(f"load factor must lie in (0, 1), got {load_factor}")
    critical = critical_uniform_rate(model, mu)
    return scale_rates(model, load_factor * critical, mu)


def model_from_spec(spec: ExperimentSpec) -> NetworkModel:
    if spec.model_path is not None:
        return load_model(spec.model_path)
    return scale_family(build_family(spec.family, spec.n), spec.load_factor)


def require_ergodic(model: NetworkModel) -> StabilityVerdict:
    verdict = assess_stability(model)
    if not verdict.is_ergodic:
        raise StabilityRejected(verdict)
    return verdict


@dataclass
class OccupancyEstimate:
    curve: OccupancyCurve
    slack: float
    details: Dict[str, Any] = field(default_factory=dict)


def estimate(
    model: NetworkModel,
    method: str,
    i_max: int,
    cap: Optional[int] = None,
    tol: Optional[float] = None,
    solver_method: Optional[str] = None,
    horizon: float = 1e5,
    replications: int = 1,
    seed: int = 0,
) -> OccupancyEstimate:
    """Occupancy by exact solve or by simulation, with the slack each comparison gets"""
    if method == "exact":
        solution, curve = solve_model(model, cap=cap, tol=tol, method=solver_method, i_max=i_max)
        return OccupancyEstimate(curve, curve.truncation_slack, solution.to_dict())
    if method == "simulate":
        result = estimate_occupancy(model, SimConfig(horizon=horizon, seed=seed, i_max=i_max), replications)
        if result.aborted_unstable:
            raise FlexnetError(f"simulation aborted as apparently unstable after {result.events} events")
        return OccupancyEstimate(result.occupancy, 0.0, result.to_dict())
    raise ValueError(f"unknown method {method!r}")


@dataclass
class VerificationRow:
    i: int
    estimate: float
    half_width: float
    slack: float
    bounds: Dict[str, float]
    passes: Dict[str, Optional[bool]]

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {"i": self.i, "estimate": self.estimate, "half_width": self.half_width, "slack": self.slack}
        for kind, value in self.bounds.items():
            record[kind] = value
            record[f"{kind}_pass"] = self.passes[kind]
        return record


@dataclass
class VerificationResult:
    rows: List[VerificationRow]
    verdict: StabilityVerdict
    rho0: float
    alpha: Fraction
    beta: Fraction
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(p is not False for row in self.rows for p in row.passes.values())

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_record() for row in self.rows])


def _bound_values(model: NetworkModel, kinds: Iterable[str], rho0: float, a: float, b: float, theta_g: float, i: int) -> Dict[str, Tuple[float, int]]:
    """kind -> (value, first level at which it is asserted)"""
    out: Dict[str, Tuple[float, int]] = {}
    start = valid_from(rho0)
    for kind in kinds:
        if kind == "prop1":
            if model.is_simple():
                out[kind] = (prop1_bound(rho0, len(model.servers), i), 0)
        elif kind == "thm1":
            out[kind] = (thm1_bound(rho0, a, i).value, start)
        elif kind == "theta":
            out[kind] = (theta_bound(rho0, theta_g, i).value, start)
        elif kind == "thm2":
            out[kind] = (thm2_bound(rho0, b, i).value, start)
        elif kind == "thm3":
            out[kind] = (thm3_bound(rho0, a, b, i).value, start)
        else:
            raise ValueError(f"unknown bound kind {kind!r}")
    return out


def audit_curve(
    model: NetworkModel,
    curve: OccupancyCurve,
    slack: float,
    kinds: Sequence[str],
    i_max: int,
) -> List[VerificationRow]:
    """
    One row per level from the first asserted level to i_max. A bound passes
    when estimate + half_width + slack >= bound; below its own threshold a
    bound is reported with pass None.
    """
    rho0 = model.rho0()
    a = float(alpha_metric(model.graph))
    b = float(beta_metric(model.graph))
    theta_g = float(theta_metric(model.graph, theta_uniform(model.graph)))
    first = valid_from(rho0)
    if "prop1" in kinds and model.is_simple():
        first = 0
    rows = []
    for i in range(first, i_max + 1):
        est = curve.at(i)
        hw = curve.half_widths[i] if i < len(curve.half_widths) else 0.0
        bounds = _bound_values(model, kinds, rho0, a, b, theta_g, i)
        passes = {k: (est + hw + slack >= v) if i >= start else None for k, (v, start) in bounds.items()}
        rows.append(VerificationRow(i, est, hw, slack, {k: v for k, (v, _) in bounds.items()}, passes))
    return rows


def run_verification(spec: ExperimentSpec) -> VerificationResult:
    """Stability check, occupancy by the chosen method, then the bound audit"""
    model = model_from_spec(spec)
    verdict = require_ergodic(model)
    occ = estimate(
        model,
        spec.method,
        spec.i_max,
        cap=spec.cap,
        tol=spec.tol,
        solver_method=spec.solver_method,
        horizon=spec.horizon,
        replications=spec.replications,
        seed=spec.seed,
    )
    rows = audit_curve(model, occ.curve, occ.slack, spec.bounds, spec.i_max)
    result = VerificationResult(
        rows=rows,
        verdict=verdict,
        rho0=model.rho0(),
        alpha=alpha_metric(model.graph),
        beta=beta_metric(model.graph),
        details=occ.details,
    )
    failed = sum(1 for row in rows for p in row.passes.values() if p is False)
    logger.info(f"verification: {len(rows)} rows, {failed} failed checks")
    return result


def family_limits(family: str) -> Tuple[float, float]:
    """Limits of (alpha, beta) along the family as n grows"""
    return {"g1": (1.0, math.inf), "g2": (math.inf, 2.0), "complete": (math.inf, math.inf)}[family]


@dataclass(frozen=True)
class _SweepUnit:
    family: str
    n: int
    load_factor: float
    method: str
    i_max: int
    cap: Optional[int]
    horizon: float
    replications: int
    seed: int


def _sweep_one(unit: _SweepUnit) -> List[Dict[str, Any]]:
    model = scale_family(build_family(unit.family, unit.n), unit.load_factor)
    verdict = assess_stability(model)
    if not verdict.is_ergodic:
        logger.error(f"sweep {unit.family}: instantiation n={unit.n} is {verdict.status.value}")
        raise StabilityRejected(verdict)

    method = unit.method
    if method == "auto":
        cap = unit.cap or get_config().solver.default_cap
        method = "exact" if (cap + 1) ** len(model.servers) <= BATTERY_STATE_BUDGET else "simulate"
    occ = estimate(model, method, unit.i_max, cap=unit.cap, horizon=unit.horizon,
                   replications=unit.replications, seed=unit.seed + unit.n)

    a, b = alpha_metric(model.graph), beta_metric(model.graph)
    a_lim, b_lim = family_limits(unit.family)
    rho0 = model.rho0()
    start = valid_from(rho0)
    rows = []
    for i in range(unit.i_max + 1):
        est = occ.curve.at(i)
        hw = occ.curve.half_widths[i]
        bound = thm3_bound(rho0, a, b, i).value
        rows.append({
            "family": unit.family,
            "n": unit.n,
            "i": i,
            "method": method,
            "alpha_num": a.numerator,
            "alpha_den": a.denominator,
            "alpha": float(a),
            "beta_num": b.numerator,
            "beta_den": b.denominator,
            "beta": float(b),
            "alpha_limit": a_lim,
            "beta_limit": b_lim,
            "rho0": rho0,
            "estimate": est,
            "half_width": hw,
            "slack": occ.slack,
            "thm1": thm1_bound(rho0, a, i).value,
            "thm2": thm2_bound(rho0, b, i).value,
            "thm3": bound,
            "valid_from": start,
            "thm3_pass": (est + hw + occ.slack >= bound) if i >= start else None,
        })
    logger.info(f"sweep {unit.family} n={unit.n} ({method}) done")
    return rows


def run_family_sweep(
    family: str,
    n_values: Iterable[int],
    load_factor: Optional[float] = None,
    method: str = "auto",
    i_max: int = 10,
    cap: Optional[int] = None,
    horizon: float = 1e5,
    replications: int = 1,
    seed: int = 0,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    Metrics, bounds and occupancy per family size. "auto" solves exactly
    while the truncated chain fits the state cap and simulates otherwise.
    """
    if family not in ("g1", "g2"):
        raise ValueError(f"sweeps cover g1 and g2, got {family!r}")
    load_factor = get_config().experiment.load_factor if load_factor is None else load_factor
    units = [_SweepUnit(family, int(n), load_factor, method, i_max, cap, horizon, replications, seed) for n in n_values]
    rows = [row for unit_rows in _map_units(_sweep_one, units, workers) for row in unit_rows]
    return pd.DataFrame(rows)


def _battery_solution(model: NetworkModel, boundary_mass_max: float):
    cap = largest_cap(model, BATTERY_STATE_BUDGET)
    return solve_within_boundary(
        model, cap=cap, boundary_mass_max=boundary_mass_max, method="direct", state_budget=BATTERY_STATE_BUDGET
    )


def _bound_unit(args: Tuple[int, NetworkModel, int, float]) -> Tuple[bool, List[Dict[str, Any]]]:
    index, model, i_max, boundary_mass_max = args
    solution = _battery_solution(model, boundary_mass_max)
    conclusive = solution.boundary_mass <= boundary_mass_max
    curve = occupancy_exact(solution, i_max)
    slack = curve.truncation_slack
    rho0 = model.rho0()
    a, b = alpha_metric(model.graph), beta_metric(model.graph)
    weights = min_weight(model.graph)
    theta_g = theta_metric(model.graph, weights)
    rows = []
    for i in range(valid_from(rho0), i_max + 1):
        est = curve.at(i)
        row = {
            "model": index,
            "i": i,
            "servers": len(model.servers),
            "dispatchers": len(model.dispatchers),
            "rho0": rho0,
            "alpha": float(a),
            "beta": float(b),
            "estimate": est,
            "slack": slack,
            "boundary_mass": solution.boundary_mass,
            "conclusive": conclusive,
            "thm1": thm1_bound(rho0, a, i).value,
            "thm2": thm2_bound(rho0, b, i).value,
            "theta": theta_bound(rho0, theta_g, i).value,
            "convex": convex_combination_bound(model.graph, weights, rho0, i).value,
        }
        # None: truncation too coarse for the comparison to mean anything
        for kind in ("thm1", "thm2", "theta", "convex"):
            row[f"{kind}_pass"] = est + slack >= row[kind] if conclusive else None
        rows.append(row)
    return conclusive, rows


def _draw_conclusive(
    count: int,
    draw: Callable[[int, int], Sequence],
    unit_fn: Callable,
    workers: Optional[int],
) -> Tuple[List[Dict[str, Any]], int]:
    """
    Run units in rounds until count of them solved within the boundary mass
    threshold, or BATTERY_DRAW_FACTOR * count units were drawn. draw(start, n)
    returns the next n units. Rows of inconclusive units are kept.
    """
    rows: List[Dict[str, Any]] = []
    conclusive = drawn = 0
    limit = count * BATTERY_DRAW_FACTOR
    while conclusive < count and drawn < limit:
        batch = draw(drawn, min(count - conclusive, limit - drawn))
        for ok, unit_rows in _map_units(unit_fn, batch, workers):
            conclusive += int(ok)
            rows.extend(unit_rows)
        drawn += len(batch)
    if conclusive < count:
        logger.warning(f"only {conclusive} of {count} units met the boundary mass threshold after {drawn} draws")
    elif drawn > count:
        logger.info(f"{drawn - count} draws discarded as inconclusive")
    return rows, conclusive


def run_bound_battery(
    count: int,
    seed: int,
    i_max: int = 10,
    workers: Optional[int] = None,
    boundary_mass_max: Optional[float] = None,
) -> pd.DataFrame:
    """
    Random ergodic models, exact occupancy, alpha/beta/theta/mixture bound
    audit. Models are drawn until count of them solve with boundary mass at
    most boundary_mass_max; frame.attrs["conclusive"] holds that count.
    """
    boundary_mass_max = get_config().solver.boundary_mass_max if boundary_mass_max is None else boundary_mass_max
    rng = np.random.default_rng(seed)

    def draw(start: int, n: int):
        return [(start + k, sample_model(rng), i_max, boundary_mass_max) for k in range(n)]

    rows, conclusive = _draw_conclusive(count, draw, _bound_unit, workers)
    frame = pd.DataFrame(rows)
    frame.attrs["conclusive"] = conclusive
    if not frame.empty:
        failed = sum(int(frame[c].eq(False).sum()) for c in frame.columns if c.endswith("_pass"))
        logger.info(f"bound battery: {conclusive}/{count} conclusive models, {len(frame)} rows, {failed} failed checks")
    return frame


# probability that an arrival-decrease draw keeps every rate
IDENTITY_DRAW_P = 0.2


def _random_transform(model: NetworkModel, kind: TransformKind, rng: np.random.Generator):
    if kind is TransformKind.arrival_decrease:
        if rng.random() < IDENTITY_DRAW_P:
            factors = np.ones(len(model.dispatchers))
        else:
            factors = rng.uniform(0.5, 1.0, size=len(model.dispatchers))
        return decrease_arrivals(model, {d: model.rates.lam[d] * f for d, f in zip(model.dispatchers, factors)})
    if kind is TransformKind.service_increase:
        new_mu = {}
        for block in model.partition.blocks:
            rate = model.block_rate(block) * rng.uniform(1.0, 1.5)
            new_mu.update({u: rate for u in block})
        return increase_service(model, new_mu)
    if kind is TransformKind.edge_simplify:
        edge = model.graph.edges[int(rng.integers(len(model.graph.edges)))]
        return edge_simplify(model, edge)
    raise ValueError(f"no random draw for {kind.value}")


MONOTONICITY_KINDS = (TransformKind.arrival_decrease, TransformKind.service_increase, TransformKind.edge_simplify)

# edge simplification adds a server; two keep the transformed chain within the battery budget
MONOTONICITY_MAX_SERVERS = 2


def _monotonicity_unit(args: Tuple[int, NetworkModel, int, float]) -> Tuple[bool, List[Dict[str, Any]]]:
    index, model, unit_seed, boundary_mass_max = args
    rng = np.random.default_rng(unit_seed)
    original = _battery_solution(model, boundary_mass_max)
    rows = []
    for kind in MONOTONICITY_KINDS:
        transformed, record = _random_transform(model, kind, rng)
        preserved = assess_stability(transformed).is_ergodic
        solution = original if record.identity else _battery_solution(transformed, boundary_mass_max)
        report = tail_compare(original, solution, record.mapping)
        boundary_mass = max(original.boundary_mass, solution.boundary_mass)
        conclusive = boundary_mass <= boundary_mass_max
        rows.append({
            "model": index,
            "kind": kind.value,
            "identity": record.identity,
            "ergodic_preserved": preserved,
            "servers_before": len(model.servers),
            "servers_after": len(transformed.servers),
            "worst_margin": report.worst_margin,
            "slack": report.slack,
            "boundary_mass": boundary_mass,
            "conclusive": conclusive,
            "violations": len(report.violations),
            "ok": report.ok and preserved if conclusive else None,
        })
    return all(row["conclusive"] for row in rows), rows


def run_monotonicity_battery(
    count: int,
    seed: int,
    workers: Optional[int] = None,
    boundary_mass_max: Optional[float] = None,
) -> pd.DataFrame:
    """
    Sample small ergodic models, apply each transformation kind, solve both
    sides exactly and compare tails server by server. Failures are rows, not
    errors; ok is None where either side missed the boundary mass threshold.
    Models are drawn until count of them are conclusive for every kind.
    """
    boundary_mass_max = get_config().solver.boundary_mass_max if boundary_mass_max is None else boundary_mass_max
    rng = np.random.default_rng(seed)
    seq = np.random.SeedSequence(seed)

    def draw(start: int, n: int):
        models = [sample_model(rng, max_servers=MONOTONICITY_MAX_SERVERS) for _ in range(n)]
        seeds = [int(s.generate_state(1)[0]) for s in seq.spawn(n)]
        return [(start + k, m, s, boundary_mass_max) for k, (m, s) in enumerate(zip(models, seeds))]

    rows, conclusive = _draw_conclusive(count, draw, _monotonicity_unit, workers)
    frame = pd.DataFrame(rows)
    frame.attrs["conclusive"] = conclusive
    if not frame.empty:
        for kind, group in frame.groupby("kind", sort=False):
            logger.info(f"monotonicity {kind}: {len(group)} cases, {int(group['ok'].eq(False).sum())} failures, worst margin {group['worst_margin'].min():.3g}")
    return frame


def summarize_monotonicity(frame: pd.DataFrame) -> pd.DataFrame:
    """Worst margin, failure and inconclusive counts per transformation kind"""
    summary = frame.groupby("kind", sort=False).agg(
        cases=("ok", "size"),
        failures=("ok", lambda s: int(s.eq(False).sum())),
        inconclusive=("ok", lambda s: int(s.isna().sum())),
        worst_margin=("worst_margin", "min"),
        identities=("identity", "sum"),
    )
    return summary.reset_index()
