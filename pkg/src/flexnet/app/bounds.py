"""
Closed-form occupancy lower bounds.

All bounds are built from r(rho, x) = (rho / x)^x and have the shape

    prefactor * r(rho0, base)^i / base

so they are evaluated in log space and exponentiated once per level. Levels
below 1/rho0 are outside the range where the bounds are asserted; the value
is still returned, with valid=False.
"""
import enum
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import BoundDomainError
from .metrics import WeightFunction, alpha as alpha_metric, beta as beta_metric
from .models import BipartiteGraph, NetworkModel

logger = logging.getLogger(__name__)

Real = Union[float, Fraction, int]

# 1/rho0 is computed in floating point; this keeps exact integers exact
THRESHOLD_SLACK = 1e-9


class BoundKind(enum.Enum):
    prop1 = "Prop1"
    thm1 = "Thm1"
    thm1_theta = "Thm1Theta"
    thm2 = "Thm2"
    thm3 = "Thm3"
    ceil_beta = "CeilBeta"
    gamma = "Gamma"


class BoundValue(NamedTuple):
    value: float
    valid: bool


def _check_positive(name: str, v: Real):
    if not (math.isfinite(float(v)) and float(v) > 0):
        raise BoundDomainError(f"{name} must be positive and finite, got {v}")


def log_r(rho: Real, x: Real) -> float:
    _check_positive("rho", rho)
    _check_positive("x", x)
    x = float(x)
    return x * (math.log(float(rho)) - math.log(x))


def r(rho: Real, x: Real) -> float:
    """(rho / x)^x"""
    return math.exp(log_r(rho, x))


def valid_from(rho0: Real) -> int:
    """Smallest integer level i with i >= 1/rho0"""
    _check_positive("rho0", rho0)
    return max(0, math.ceil(1.0 / float(rho0) - THRESHOLD_SLACK))


def _log_geometric(rho0: Real, base: Real, i: int, log_prefactor: float = 0.0) -> float:
    return log_prefactor + i * log_r(rho0, base) - math.log(float(base))


def _exp(log_value: float) -> float:
    # flushes to 0.0 below the float range; the log is kept by callers that need it
    return math.exp(log_value) if log_value > -745.0 else 0.0


def _check_level(i: int):
    if int(i) != i or i < 0:
        raise BoundDomainError(f"level must be a nonnegative integer, got {i}")


def prop1_bound(rho: Real, s: int, i: int) -> float:
    """Exact occupancy of the simple network: r(rho, s)^i / s"""
    _check_level(i)
    if int(s) != s or s < 1:
        raise BoundDomainError(f"server count must be a positive integer, got {s}")
    _check_positive("rho", rho)
    if float(rho) >= s:
        raise BoundDomainError(f"rho={rho} >= s={s}: the simple network is not ergodic")
    return _exp(_log_geometric(rho, s, i))


def thm1_bound(rho0: Real, alpha: Real, i: int) -> BoundValue:
    _check_level(i)
    value = _exp(_log_geometric(rho0, alpha, i))
    return BoundValue(value, float(alpha) >= float(rho0) and i >= valid_from(rho0))


def theta_bound(rho0: Real, theta_g: Real, i: int) -> BoundValue:
    return thm1_bound(rho0, theta_g, i)


def _thm2_log_prefactor(rho0: Real, beta: Real) -> float:
    rho0, beta = float(rho0), float(beta)
    return math.log(rho0) - math.log(beta * (beta + 1) + rho0)


def thm2_bound(rho0: Real, beta: Real, i: int) -> BoundValue:
    _check_level(i)
    _check_positive("beta", beta)
    base = float(beta) + 1
    value = _exp(_log_geometric(rho0, base, i, _thm2_log_prefactor(rho0, beta)))
    return BoundValue(value, base >= float(rho0) and i >= valid_from(rho0))


def ceil_beta_bound(rho0: Real, beta: Real, i: int) -> BoundValue:
    """thm2_bound before relaxing the base ceil(beta) to beta + 1; never smaller"""
    _check_level(i)
    _check_positive("beta", beta)
    base = math.ceil(beta)
    value = _exp(_log_geometric(rho0, base, i, _thm2_log_prefactor(rho0, beta)))
    return BoundValue(value, base >= float(rho0) and i >= valid_from(rho0))


def _split_base(gamma: Real) -> int:
    """ceil(gamma - 1), exact on the binary value of gamma"""
    return max(1, math.ceil(Fraction(gamma) - 1))


def gamma_bound(rho0: Real, beta: Real, gamma: Real, i: int) -> BoundValue:
    """
    Bound from splitting at an arbitrary level gamma > beta:

        rho0 (gamma - beta) / (rho0 (gamma - beta) + beta gamma) * r(rho0, c)^i / c

    with c = ceil(gamma - 1). gamma = beta + 1 recovers ceil_beta_bound.
    """
    _check_level(i)
    _check_positive("beta", beta)
    if not float(gamma) > float(beta):
        raise BoundDomainError(f"gamma={gamma} must exceed beta={beta}")
    base = _split_base(gamma)
    gap = float(rho0) * (float(gamma) - float(beta))
    log_pref = math.log(gap) - math.log(gap + float(beta) * float(gamma))
    value = _exp(_log_geometric(rho0, base, i, log_pref))
    return BoundValue(value, base >= float(rho0) and i >= valid_from(rho0))


def thm3_bound(rho0: Real, alpha: Real, beta: Real, i: int) -> BoundValue:
    """Larger of the alpha and beta bounds; a component only counts when its precondition holds"""
    a = thm1_bound(rho0, alpha, i)
    b = thm2_bound(rho0, beta, i)
    pre_a = float(alpha) >= float(rho0)
    pre_b = float(beta) + 1 >= float(rho0)
    applicable = [c.value for c, ok in ((a, pre_a), (b, pre_b)) if ok]
    value = max(applicable) if applicable else max(a.value, b.value)
    return BoundValue(value, bool(applicable) and i >= valid_from(rho0))


def limit_bound(rho0: Real, alphas: Sequence[Real], betas: Sequence[Real], i: int) -> BoundValue:
    """
    Bound on the liminf of the occupancy along a sequence of graphs, using the
    minimum over the trailing half of each metric sequence as the liminf estimate.
    """
    if len(alphas) == 0 or len(alphas) != len(betas):
        raise BoundDomainError("metric sequences must be nonempty and of equal length")
    tail = len(alphas) // 2
    a = min(float(x) for x in alphas[tail:])
    b = min(float(x) for x in betas[tail:])
    return thm3_bound(rho0, a, b, i)


def convex_combination_bound(graph: BipartiteGraph, theta: WeightFunction, rho0: Real, i: int) -> BoundValue:
    """
    (1/|S|) sum_u sum_{d in N(u)} theta(d, u) r(rho0, deg d)^i / deg d

    The mixture the theta bound is derived from; it is never smaller than
    theta_bound at the same theta once i >= 1/rho0.
    """
    _check_level(i)
    theta.validate(graph)
    degrees = graph.dispatcher_degrees
    total = 0.0
    for u, ds in graph.server_neighbors.items():
        for d in ds:
            w = float(theta.get(d, u))
            if w:
                total += w * _exp(_log_geometric(rho0, degrees[d], i))
    lowest = min(degrees.values())
    return BoundValue(total / len(graph.servers), lowest >= float(rho0) and i >= valid_from(rho0))


@dataclass(frozen=True)
class BoundCurve:
    kind: BoundKind
    rho0: float
    parameter: float
    values: List[float]
    log_values: List[float]
    valid_from: int
    ratio: Optional[float] = None

    def valid_values(self) -> Dict[int, float]:
        return {i: v for i, v in enumerate(self.values) if i >= self.valid_from}


def bound_curve(
    kind: Union[BoundKind, str],
    rho0: Real,
    parameter: Real,
    i_max: int,
    beta: Optional[Real] = None,
    gamma: Optional[Real] = None,
) -> BoundCurve:
    """
    Values of one bound for i = 0..i_max.

    parameter is |S| for Prop1, alpha for Thm1, theta_G for Thm1Theta and beta
    for Thm2 and CeilBeta. Thm3 takes alpha as parameter plus beta; Gamma takes
    beta as parameter plus gamma. Every curve except Thm3 is geometric in i with
    ratio r(rho0, base); Thm3 is the pointwise maximum of two such curves.
    """
    kind = BoundKind(kind) if isinstance(kind, str) else kind
    if int(i_max) != i_max or i_max < 0:
        raise BoundDomainError(f"i_max must be a nonnegative integer, got {i_max}")
    rho0_f, p = float(rho0), float(parameter)

    if kind is BoundKind.thm3:
        if beta is None:
            raise BoundDomainError("Thm3 curve needs beta")
        logs = []
        for i in range(i_max + 1):
            a = _log_geometric(rho0, p, i)
            b = _log_geometric(rho0, float(beta) + 1, i, _thm2_log_prefactor(rho0, beta))
            logs.append(max(a, b))
        return BoundCurve(kind, rho0_f, p, [_exp(v) for v in logs], logs, valid_from(rho0))

    if kind is BoundKind.prop1:
        if rho0_f >= p:
            raise BoundDomainError(f"rho={rho0_f} >= s={p}: the simple network is not ergodic")
        base, log_pref, start = p, 0.0, 0
    elif kind in (BoundKind.thm1, BoundKind.thm1_theta):
        base, log_pref, start = p, 0.0, valid_from(rho0)
    elif kind is BoundKind.thm2:
        base, log_pref, start = p + 1, _thm2_log_prefactor(rho0, p), valid_from(rho0)
    elif kind is BoundKind.ceil_beta:
        base, log_pref, start = math.ceil(p), _thm2_log_prefactor(rho0, p), valid_from(rho0)
    else:
        if gamma is None or not float(gamma) > p:
            raise BoundDomainError(f"Gamma curve needs gamma > beta={p}")
        base = _split_base(gamma)
        gap = rho0_f * (float(gamma) - p)
        log_pref, start = math.log(gap) - math.log(gap + p * float(gamma)), valid_from(rho0)

    step = log_r(rho0, base)
    logs = [_log_geometric(rho0, base, i, log_pref) for i in range(i_max + 1)]
    return BoundCurve(kind, rho0_f, p, [_exp(v) for v in logs], logs, start, ratio=math.exp(step))


def bounds_table(
    model: NetworkModel,
    i_max: int,
    lambda0: Optional[float] = None,
    mu0: Optional[float] = None,
) -> pd.DataFrame:
    """
    Per-level table of the bounds for one model: i, prop1 (simple models only),
    thm1, thm2, thm3, valid_from. Metrics are taken from the model passed in.
    """
    rho0 = model.rho0(lambda0, mu0)
    a = float(alpha_metric(model.graph))
    b = float(beta_metric(model.graph))
    rows = []
    start = valid_from(rho0)
    for i in range(i_max + 1):
        row = {"i": i}
        if model.is_simple():
            row["prop1"] = prop1_bound(rho0, len(model.servers), i)
        row["thm1"] = thm1_bound(rho0, a, i).value
        row["thm2"] = thm2_bound(rho0, b, i).value
        row["thm3"] = thm3_bound(rho0, a, b, i).value
        row["valid_from"] = start
        rows.append(row)
    logger.debug(f"bounds_table: rho0={rho0:.6g} alpha={a:.6g} beta={b:.6g} valid_from={start}")
    return pd.DataFrame(rows)


@dataclass
class LemmaScanReport:
    rho: float
    k: int
    x_max: float
    points: int
    decreasing: bool
    convex: bool
    worst_step: float  # largest successive difference; negative when decreasing
    worst_curvature: float  # smallest second difference; positive when convex
    analytic_decreasing: bool
    analytic_convex: bool
    grid: List[float] = field(repr=False, default_factory=list)
    values: List[float] = field(repr=False, default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "rho": self.rho,
            "k": self.k,
            "x_max": self.x_max,
            "points": self.points,
            "decreasing": self.decreasing,
            "convex": self.convex,
            "worst_step": self.worst_step,
            "worst_curvature": self.worst_curvature,
            "analytic_decreasing": self.analytic_decreasing,
            "analytic_convex": self.analytic_convex,
        }


def lemma1_scan(rho: float, k: int, x_max: float, points: int) -> LemmaScanReport:
    """
    Grid check that f(x) = r(rho, x)^k / x is strictly decreasing and convex on
    [rho, x_max] for integer k >= 1/rho.

    Besides finite differences, the signs of f' and f'' are checked from

        f'/f     = k ln rho - k ln x - k - 1/x
        x^2 f''/f = (k ln x - c)^2 x^2 + (2k ln x - 2c - k) x + 2,  c = k ln rho - k
    """
    _check_positive("rho", rho)
    if int(k) != k or k < valid_from(rho):
        raise BoundDomainError(f"k={k} must be an integer >= 1/rho={1 / rho:.6g}")
    if points < 3 or not x_max > rho:
        raise BoundDomainError(f"degenerate grid: points={points}, x_max={x_max}, rho={rho}")

    x = np.linspace(rho, x_max, points)
    log_f = k * x * (np.log(rho) - np.log(x)) - np.log(x)
    f = np.exp(log_f)
    step = np.diff(f)
    curvature = np.diff(f, n=2)

    c = k * np.log(rho) - k
    lnx = np.log(x)
    d1 = k * np.log(rho) - k * lnx - k - 1.0 / x
    d2 = (k * lnx - c) ** 2 * x**2 + (2 * k * lnx - 2 * c - k) * x + 2

    report = LemmaScanReport(
        rho=float(rho),
        k=int(k),
        x_max=float(x_max),
        points=int(points),
        decreasing=bool(np.all(step < 0)),
        convex=bool(np.all(curvature > 0)),
        worst_step=float(step.max()),
        worst_curvature=float(curvature.min()),
        analytic_decreasing=bool(np.all(d1 < 0)),
        analytic_convex=bool(np.all(d2 > 0)),
        grid=x.tolist(),
        values=f.tolist(),
    )
    logger.info(f"lemma scan rho={rho} k={k}: decreasing={report.decreasing} convex={report.convex}")
    return report
