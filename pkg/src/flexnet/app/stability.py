"""
Ergodicity of the load balancing process.

The process is ergodic when, for every nonempty server subset U, the total
arrival rate of dispatchers whose whole neighbourhood lies in U is strictly
below the total service rate of U. It is not ergodic when the reverse strict
inequality holds for some U. Equality at the minimum is reported as Boundary
and never treated as usable.

Exhaustive enumeration over the 2^|S| - 1 subsets is the reference. Rates are
compared exactly: every finite float has a finite decimal expansion, so rates
are lifted to fractions and scaled to a common integer denominator.
A networkx max-flow test cross-checks the verdict and certifies ergodicity for
models too large to enumerate.
"""
import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .config import get_config
from .exceptions import SubsetCapExceeded
from .models import BipartiteGraph, NetworkModel

logger = logging.getLogger(__name__)

CHUNK_BITS = 20
INT64_SAFE = 2**62


class StabilityStatus(enum.Enum):
    ergodic = "Ergodic"
    not_ergodic = "NotErgodic"
    boundary = "Boundary"


@dataclass(frozen=True)
class StabilityVerdict:
    status: StabilityStatus
    witness: Optional[Tuple[str, ...]]
    margin: float
    exact_margin: Optional[Fraction] = None
    subsets_checked: int = 0
    method: str = "enumeration"

    @property
    def is_ergodic(self) -> bool:
        return self.status is StabilityStatus.ergodic

    def to_dict(self) -> Dict:
        out = {
            "status": self.status.value,
            "witness": list(self.witness) if self.witness is not None else None,
            "margin": self.margin,
            "method": self.method,
            "subsets_checked": self.subsets_checked,
        }
        if self.exact_margin is not None:
            out["margin_exact"] = {"num": self.exact_margin.numerator, "den": self.exact_margin.denominator}
        return out


def _as_fraction(rate: float) -> Fraction:
    # repr gives the shortest decimal that round-trips, i.e. the rate as written
    return Fraction(repr(float(rate)))


def _scaled_integers(model: NetworkModel) -> Tuple[List[int], List[int], int]:
    lam = [_as_fraction(model.rates.lam[d]) for d in model.dispatchers]
    mu = [_as_fraction(model.rates.mu[u]) for u in model.servers]
    scale = math.lcm(*(f.denominator for f in lam + mu))
    return [int(f * scale) for f in lam], [int(f * scale) for f in mu], scale


def _neighbor_masks(graph: BipartiteGraph) -> List[int]:
    index = graph.server_index
    masks = []
    for d in graph.dispatchers:
        m = 0
        for u in graph.dispatcher_neighbors[d]:
            m |= 1 << index[u]
        masks.append(m)
    return masks


class _Reduction:
    """Associative reduction over subset chunks: global minimum slack plus witnesses"""

    def __init__(self):
        self.min_slack = None
        self.min_mask = None
        self.negative: Optional[Tuple] = None  # (popcount, slack, mask)
        self.zero: Optional[Tuple] = None

    @staticmethod
    def _better(a: Optional[Tuple], b: Optional[Tuple]) -> Optional[Tuple]:
        if a is None:
            return b
        if b is None:
            return a
        return min(a, b)

    def update(self, masks: np.ndarray, slack: np.ndarray, pop: np.ndarray, neg: np.ndarray, zero: np.ndarray):
        k = int(np.argmin(slack))
        if self.min_slack is None or slack[k] < self.min_slack:
            self.min_slack, self.min_mask = slack[k], int(masks[k])
        for flag, attr in ((neg, "negative"), (zero, "zero")):
            if not flag.any():
                continue
            m, s, p = masks[flag], slack[flag], pop[flag]
            # lexicographic (popcount, slack, mask); only min and == so object arrays work too
            keep = p == p.min()
            m, s = m[keep], s[keep]
            keep = s == s.min()
            candidate = (int(p.min()), s[keep][0], int(m[keep].min()))
            setattr(self, attr, self._better(getattr(self, attr), candidate))


def _enumerate(lam: Sequence, mu: Sequence, nbr_masks: Sequence[int], n: int, exact: bool, eps: float) -> Tuple[_Reduction, int]:
    dtype = np.int64
    if exact and (sum(lam) + sum(mu)) >= INT64_SAFE:
        dtype = object
    elif not exact:
        dtype = np.float64
    lam_arr = np.array(lam, dtype=dtype)
    mu_arr = np.array(mu, dtype=dtype)

    red = _Reduction()
    total = (1 << n) - 1
    step = 1 << CHUNK_BITS
    for lo in range(1, total + 1, step):
        hi = min(lo + step, total + 1)
        masks = np.arange(lo, hi, dtype=np.int64)
        mu_sum = np.zeros(hi - lo, dtype=dtype)
        pop = np.zeros(hi - lo, dtype=np.int64)
        for k in range(n):
            bit = (masks >> k) & 1
            pop += bit
            mu_sum = mu_sum + bit.astype(dtype) * mu_arr[k]
        lam_sum = np.zeros(hi - lo, dtype=dtype)
        for nd, rate in zip(nbr_masks, lam_arr):
            confined = (masks & nd) == nd
            lam_sum = lam_sum + confined.astype(dtype) * rate
        slack = mu_sum - lam_sum
        if exact:
            neg, zero = slack < 0, slack == 0
        else:
            neg, zero = slack < -eps, np.abs(slack) <= eps
        red.update(masks, slack, pop, np.asarray(neg, dtype=bool), np.asarray(zero, dtype=bool))
    return red, total


def _mask_to_servers(mask: int, servers: Sequence[str]) -> Tuple[str, ...]:
    return tuple(u for k, u in enumerate(servers) if mask >> k & 1)


def check_ergodic(
    model: NetworkModel,
    cap: Optional[int] = None,
    exact: Optional[bool] = None,
    eps: Optional[float] = None,
) -> StabilityVerdict:
    """
    Classify the model by exhaustive subset enumeration.

    The witness of a NotErgodic verdict is a violating subset of smallest
    cardinality (ties: most negative slack, then enumeration order). For
    Boundary it is a smallest subset with zero slack. The margin is always the
    global minimum slack.
    """
    config = get_config().stability
    cap = config.subset_cap if cap is None else cap
    exact = config.exact if exact is None else exact
    eps = config.eps if eps is None else eps

    n = len(model.servers)
    if n > cap:
        raise SubsetCapExceeded(n, cap)

    nbr_masks = _neighbor_masks(model.graph)
    if exact:
        lam, mu, scale = _scaled_integers(model)
    else:
        lam = [model.rates.lam[d] for d in model.dispatchers]
        mu = [model.rates.mu[u] for u in model.servers]
        scale = 1

    red, checked = _enumerate(lam, mu, nbr_masks, n, exact, eps)
    exact_margin = Fraction(int(red.min_slack), scale) if exact else None
    margin = float(exact_margin) if exact else float(red.min_slack)

    if red.negative is not None:
        status, mask = StabilityStatus.not_ergodic, red.negative[2]
    elif red.zero is not None:
        status, mask = StabilityStatus.boundary, red.zero[2]
    else:
        status, mask = StabilityStatus.ergodic, None

    witness = _mask_to_servers(mask, model.servers) if mask is not None else None
    verdict = StabilityVerdict(
        status=status, witness=witness, margin=margin, exact_margin=exact_margin, subsets_checked=checked,
    )

    routable = flow_feasible(model)
    if status is StabilityStatus.ergodic and not routable:
        logger.warning("Subset enumeration says Ergodic but the demand is not routable; check rate precision")
    if status is StabilityStatus.not_ergodic and routable:
        logger.debug("Demand routable but some subset is overloaded; margin is within float precision of zero")

    logger.debug(f"check_ergodic: {status.value} margin={margin} over {checked} subsets")
    return verdict


def _flow_network(model: NetworkModel, inflation: float) -> nx.DiGraph:
    flow = nx.DiGraph()
    for d in model.dispatchers:
        flow.add_edge("__source__", ("d", d), capacity=inflation * model.rates.lam[d])
    for d, u in model.graph.edges:
        # no capacity attribute means unbounded
        flow.add_edge(("d", d), ("s", u))
    for u in model.servers:
        flow.add_edge(("s", u), "__sink__", capacity=model.rates.mu[u])
    return flow


def flow_feasible(model: NetworkModel, inflation: float = 1.0, rtol: float = 1e-12) -> bool:
    """True when demand inflation * lambda can be routed to the service capacities"""
    demand = inflation * model.total_arrival_rate
    value = nx.maximum_flow_value(_flow_network(model, inflation), "__source__", "__sink__")
    return value >= demand * (1 - rtol)


def certify_ergodic_by_flow(model: NetworkModel, inflation: float = 1 + 1e-6) -> StabilityVerdict:
    """
    Ergodicity certificate for models beyond the enumeration cap.

    If the inflated demand is routable then every subset has slack of at least
    (inflation - 1) * min lambda, which is reported as the margin (a lower
    bound). Otherwise the question is left open.
    """
    if not flow_feasible(model, inflation, rtol=0.0):
        raise SubsetCapExceeded(len(model.servers), get_config().stability.subset_cap)
    bound = min((inflation - 1) * model.lambda0, min(model.rates.mu.values()))
    return StabilityVerdict(status=StabilityStatus.ergodic, witness=None, margin=bound, method="flow")


def assess_stability(model: NetworkModel, cap: Optional[int] = None) -> StabilityVerdict:
    """Enumerate when possible, fall back to the flow certificate otherwise"""
    cap = get_config().stability.subset_cap if cap is None else cap
    if len(model.servers) <= cap:
        return check_ergodic(model, cap=cap)
    logger.info(f"{len(model.servers)} servers above cap {cap}; certifying by max-flow")
    return certify_ergodic_by_flow(model)


def critical_uniform_rate(model: NetworkModel, mu: float = 1.0, iterations: int = 60) -> float:
    """
    Supremum of the common arrival rate keeping the model ergodic when every
    server has rate mu, found by bisection on flow feasibility.
    """
    base = model.with_rates(mu={u: mu for u in model.servers})
    lo, hi = 0.0, mu * len(model.servers) / len(model.dispatchers)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        candidate = base.with_rates(lam={d: mid for d in model.dispatchers})
        if flow_feasible(candidate):
            lo = mid
        else:
            hi = mid
    logger.debug(f"critical uniform rate {lo:.12g} (bracket width {hi - lo:.3g})")
    return lo
