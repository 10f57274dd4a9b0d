"""
Flexibility metrics of a compatibility graph.

alpha: server average of the smallest degree among each server's compatible dispatchers.
beta:  dispatcher average degree.
theta: server average of a convex combination of compatible dispatcher degrees;
       always at least alpha, with equality for weights supported on min-degree dispatchers.

Everything is computed in exact rational arithmetic.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, Mapping, Tuple, Union

from .exceptions import WeightFunctionError
from .models import BipartiteGraph, Edge

logger = logging.getLogger(__name__)

Weight = Union[Fraction, float, int]

SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class WeightFunction:
    """theta(d, u), supported on edges and summing to one over N(u) for every server u"""
    weights: Mapping[Edge, Weight]

    def get(self, d: str, u: str) -> Weight:
        return self.weights.get((d, u), 0)

    def validate(self, graph: BipartiteGraph) -> None:
        for (d, u), w in self.weights.items():
            if (d, u) not in graph.edge_set and w != 0:
                raise WeightFunctionError(f"weight on non-edge ({d}, {u})")
            if not 0 <= w <= 1:
                raise WeightFunctionError(f"weight {w} on ({d}, {u}) outside [0, 1]")
        for u, ds in graph.server_neighbors.items():
            total = sum(self.get(d, u) for d in ds)
            exact = all(isinstance(self.get(d, u), (Fraction, int)) for d in ds)
            if (exact and total != 1) or (not exact and abs(float(total) - 1.0) > SUM_TOLERANCE):
                raise WeightFunctionError(f"weights at server {u} sum to {total}, not 1")


@dataclass(frozen=True)
class FlexibilityMetrics:
    alpha: Fraction
    beta: Fraction

    def to_dict(self) -> Dict[str, Any]:
        return {"alpha": rational_json(self.alpha), "beta": rational_json(self.beta)}


def rational_json(value: Fraction) -> Dict[str, Any]:
    value = Fraction(value)
    return {"num": value.numerator, "den": value.denominator, "float": float(value)}


def _min_neighbor_degree(graph: BipartiteGraph, u: str) -> int:
    degrees = graph.dispatcher_degrees
    return min(degrees[d] for d in graph.server_neighbors[u])


def alpha(graph: BipartiteGraph) -> Fraction:
    total = sum(_min_neighbor_degree(graph, u) for u in graph.servers)
    return Fraction(total, len(graph.servers))


def beta(graph: BipartiteGraph) -> Fraction:
    return Fraction(len(graph.edges), len(graph.dispatchers))


def flexibility_metrics(graph: BipartiteGraph) -> FlexibilityMetrics:
    return FlexibilityMetrics(alpha=alpha(graph), beta=beta(graph))


def theta_metric(graph: BipartiteGraph, theta: WeightFunction) -> Union[Fraction, float]:
    """(1/|S|) sum_u sum_{d in N(u)} theta(d, u) deg(d)"""
    theta.validate(graph)
    degrees = graph.dispatcher_degrees
    total: Union[Fraction, float] = Fraction(0)
    for u, ds in graph.server_neighbors.items():
        for d in ds:
            w = theta.get(d, u)
            total += (Fraction(w) if isinstance(w, int) else w) * degrees[d]
    return total / len(graph.servers)


def min_weight(graph: BipartiteGraph) -> WeightFunction:
    """Weights spread uniformly over each server's minimum-degree dispatchers"""
    degrees = graph.dispatcher_degrees
    weights: Dict[Tuple[str, str], Fraction] = {}
    for u, ds in graph.server_neighbors.items():
        low = min(degrees[d] for d in ds)
        ties = [d for d in ds if degrees[d] == low]
        for d in ties:
            weights[(d, u)] = Fraction(1, len(ties))
    return WeightFunction(weights)


def theta_uniform(graph: BipartiteGraph) -> WeightFunction:
    """Weights spread uniformly over all of N(u)"""
    weights: Dict[Tuple[str, str], Fraction] = {}
    for u, ds in graph.server_neighbors.items():
        for d in ds:
            weights[(d, u)] = Fraction(1, len(ds))
    return WeightFunction(weights)
