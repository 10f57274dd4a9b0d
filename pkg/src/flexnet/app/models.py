"""
Core domain types: compatibility graphs, rates, departure partitions,
queue states and occupancy curves.

All types are immutable after validation and safe to share across threads
and processes.
"""
import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from .exceptions import ModelValidationError

Edge = Tuple[str, str]


def _ordered_unique(ids: Iterable[str], kind: str) -> Tuple[str, ...]:
    seen: Dict[str, None] = {}
    for node_id in ids:
        if not isinstance(node_id, str) or not node_id:
            raise ModelValidationError(f"{kind} ids must be nonempty strings, got {node_id!r}", element=str(node_id))
        if node_id in seen:
            raise ModelValidationError(f"duplicate {kind} {node_id}", element=node_id)
        seen[node_id] = None
    return tuple(seen)


@dataclass(frozen=True)
class BipartiteGraph:
    """Dispatcher-server compatibility graph G = (D, S, E) without isolated nodes"""
    dispatchers: Tuple[str, ...]
    servers: Tuple[str, ...]
    edges: Tuple[Edge, ...]

    def __post_init__(self):
        dispatchers = _ordered_unique(self.dispatchers, "dispatcher")
        servers = _ordered_unique(self.servers, "server")
        d_index = {d: k for k, d in enumerate(dispatchers)}
        s_index = {u: k for k, u in enumerate(servers)}

        seen = set()
        for edge in self.edges:
            d, u = tuple(edge)
            if d not in d_index:
                raise ModelValidationError(f"edge ({d}, {u}) references unknown dispatcher {d}", element=d)
            if u not in s_index:
                raise ModelValidationError(f"edge ({d}, {u}) references unknown server {u}", element=u)
            if (d, u) in seen:
                raise ModelValidationError(f"duplicate edge ({d}, {u})", element=f"{d},{u}")
            seen.add((d, u))

        for d in dispatchers:
            if not any(e[0] == d for e in seen):
                raise ModelValidationError(f"isolated dispatcher {d}", element=d)
        covered = {e[1] for e in seen}
        for u in servers:
            if u not in covered:
                raise ModelValidationError(f"isolated server {u}", element=u)

        # Canonical edge order follows dispatcher then server order
        edges = tuple(sorted(seen, key=lambda e: (d_index[e[0]], s_index[e[1]])))
        object.__setattr__(self, "dispatchers", dispatchers)
        object.__setattr__(self, "servers", servers)
        object.__setattr__(self, "edges", edges)

    @cached_property
    def edge_set(self) -> FrozenSet[Edge]:
        return frozenset(self.edges)

    @cached_property
    def dispatcher_neighbors(self) -> Dict[str, Tuple[str, ...]]:
        """N(d) for every dispatcher, in server order"""
        out: Dict[str, List[str]] = {d: [] for d in self.dispatchers}
        for d, u in self.edges:
            out[d].append(u)
        return {d: tuple(us) for d, us in out.items()}

    @cached_property
    def server_neighbors(self) -> Dict[str, Tuple[str, ...]]:
        """N(u) for every server, in dispatcher order"""
        out: Dict[str, List[str]] = {u: [] for u in self.servers}
        for d, u in self.edges:
            out[u].append(d)
        return {u: tuple(ds) for u, ds in out.items()}

    def degree(self, node: str) -> int:
        if node in self.dispatcher_neighbors:
            return len(self.dispatcher_neighbors[node])
        if node in self.server_neighbors:
            return len(self.server_neighbors[node])
        raise KeyError(node)

    @cached_property
    def dispatcher_degrees(self) -> Dict[str, int]:
        return {d: len(us) for d, us in self.dispatcher_neighbors.items()}

    @cached_property
    def server_index(self) -> Dict[str, int]:
        return {u: k for k, u in enumerate(self.servers)}

    @cached_property
    def dispatcher_index(self) -> Dict[str, int]:
        return {d: k for k, d in enumerate(self.dispatchers)}


@dataclass(frozen=True)
class RateSpec:
    """Arrival rates per dispatcher and service rates per server (tasks per unit time)"""
    lam: Mapping[str, float]
    mu: Mapping[str, float]

    def __post_init__(self):
        lam = {d: float(r) for d, r in self.lam.items()}
        mu = {u: float(r) for u, r in self.mu.items()}
        for kind, rates in (("arrival", lam), ("service", mu)):
            for node, rate in rates.items():
                if not math.isfinite(rate) or rate <= 0:
                    raise ModelValidationError(f"nonpositive {kind} rate {rate} at {node}", element=node)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class DeparturePartition:
    """Servers grouped by shared potential-departure clock"""
    blocks: Tuple[Tuple[str, ...], ...]

    def __post_init__(self):
        blocks = []
        for block in self.blocks:
            block = tuple(block)
            if not block:
                raise ModelValidationError("empty partition block")
            blocks.append(block)
        object.__setattr__(self, "blocks", tuple(blocks))

    @classmethod
    def singletons(cls, servers: Iterable[str]) -> "DeparturePartition":
        return cls(tuple((u,) for u in servers))

    @cached_property
    def block_of(self) -> Dict[str, int]:
        return {u: k for k, block in enumerate(self.blocks) for u in block}

    def is_singleton(self) -> bool:
        return all(len(block) == 1 for block in self.blocks)


class OccupancySource(enum.Enum):
    exact = "exact"
    simulated = "simulated"


@dataclass(frozen=True)
class NetworkModel:
    """Graph, rates and departure partition: the full system description"""
    graph: BipartiteGraph
    rates: RateSpec
    partition: Optional[DeparturePartition] = None

    def __post_init__(self):
        graph, rates = self.graph, self.rates
        if set(rates.lam) != set(graph.dispatchers):
            extra = sorted(set(rates.lam) ^ set(graph.dispatchers))
            raise ModelValidationError(f"arrival rates do not match dispatchers: {extra}", element=extra[0])
        if set(rates.mu) != set(graph.servers):
            extra = sorted(set(rates.mu) ^ set(graph.servers))
            raise ModelValidationError(f"service rates do not match servers: {extra}", element=extra[0])

        partition = self.partition or DeparturePartition.singletons(graph.servers)
        seen: Dict[str, int] = {}
        for k, block in enumerate(partition.blocks):
            for u in block:
                if u not in graph.server_index:
                    raise ModelValidationError(f"partition references unknown server {u}", element=u)
                if u in seen:
                    raise ModelValidationError(f"server {u} appears in more than one partition block", element=u)
                seen[u] = k
            block_rates = {rates.mu[u] for u in block}
            if len(block_rates) > 1:
                raise ModelValidationError(f"unequal rates in block {list(block)}", element=block[0])
        missing = [u for u in graph.servers if u not in seen]
        if missing:
            raise ModelValidationError(f"server {missing[0]} is not covered by the partition", element=missing[0])
        object.__setattr__(self, "partition", partition)

    @property
    def dispatchers(self) -> Tuple[str, ...]:
        return self.graph.dispatchers

    @property
    def servers(self) -> Tuple[str, ...]:
        return self.graph.servers

    @property
    def lambda0(self) -> float:
        return min(self.rates.lam.values())

    @property
    def mu0(self) -> float:
        return max(self.rates.mu.values())

    def rho0(self, lambda0: Optional[float] = None, mu0: Optional[float] = None) -> float:
        """rho0 = lambda0 / mu0 with 0 < lambda0 <= min lambda and max mu <= mu0"""
        lambda0 = self.lambda0 if lambda0 is None else float(lambda0)
        mu0 = self.mu0 if mu0 is None else float(mu0)
        if not 0 < lambda0 <= self.lambda0:
            raise ModelValidationError(f"lambda0={lambda0} must lie in (0, {self.lambda0}]")
        if not self.mu0 <= mu0 < math.inf:
            raise ModelValidationError(f"mu0={mu0} must be at least {self.mu0} and finite")
        return lambda0 / mu0

    def block_rate(self, block: Sequence[str]) -> float:
        return self.rates.mu[block[0]]

    @property
    def total_arrival_rate(self) -> float:
        return sum(self.rates.lam.values())

    def is_simple(self) -> bool:
        """One dispatcher, complete edges, constant service rate, independent departures"""
        g = self.graph
        return (
            len(g.dispatchers) == 1
            and len(g.edges) == len(g.servers)
            and len(set(self.rates.mu.values())) == 1
            and self.partition.is_singleton()
        )

    def with_rates(self, lam: Optional[Mapping[str, float]] = None, mu: Optional[Mapping[str, float]] = None) -> "NetworkModel":
        return NetworkModel(
            graph=self.graph,
            rates=RateSpec(lam=dict(lam if lam is not None else self.rates.lam),
                           mu=dict(mu if mu is not None else self.rates.mu)),
            partition=self.partition,
        )


@dataclass(frozen=True)
class QueueState:
    """Queue lengths (tasks waiting or in service) per server"""
    lengths: Mapping[str, int]

    def __post_init__(self):
        lengths = {}
        for u, x in self.lengths.items():
            if int(x) != x or x < 0:
                raise ModelValidationError(f"queue length at {u} must be a nonnegative integer, got {x}", element=u)
            lengths[u] = int(x)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def for_model(cls, model: NetworkModel, lengths: Mapping[str, int]) -> "QueueState":
        if set(lengths) != set(model.servers):
            raise ModelValidationError("queue state domain differs from the server set")
        return cls(lengths)

    @property
    def total(self) -> int:
        return sum(self.lengths.values())


def occupancy_of_state(state: QueueState) -> Tuple[Fraction, ...]:
    """q(0), ..., q(max length) with q(i) the fraction of servers holding at least i tasks"""
    n = len(state.lengths)
    if n == 0:
        return (Fraction(1),)
    top = max(state.lengths.values())
    # counts[i] = #{u : length(u) == i}
    counts = [0] * (top + 1)
    for x in state.lengths.values():
        counts[x] += 1
    out = []
    at_least = n
    for i in range(top + 1):
        out.append(Fraction(at_least, n))
        at_least -= counts[i]
    return tuple(out)


@dataclass(frozen=True)
class OccupancyCurve:
    """Estimates of E[q(i)] for i = 0..i_max"""
    values: Tuple[float, ...]
    half_widths: Tuple[float, ...]
    source: OccupancySource
    truncation_slack: float = 0.0
    server_tails: Optional[Mapping[str, Tuple[float, ...]]] = field(default=None, compare=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        half_widths = tuple(float(h) for h in self.half_widths)
        if len(values) != len(half_widths):
            raise ValueError("values and half_widths differ in length")
        if not values or abs(values[0] - 1.0) > 1e-9:
            raise ValueError("occupancy curve must start at q(0) = 1")
        for i in range(1, len(values)):
            if values[i] > values[i - 1] + 1e-9:
                raise ValueError(f"occupancy increases at level {i}")
            if not -1e-12 <= values[i] <= 1 + 1e-12:
                raise ValueError(f"occupancy at level {i} outside [0, 1]")
        if any(h < 0 for h in half_widths):
            raise ValueError("negative confidence half-width")
        if self.truncation_slack < 0:
            raise ValueError("negative truncation slack")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "half_widths", half_widths)

    @property
    def i_max(self) -> int:
        return len(self.values) - 1

    def at(self, i: int) -> float:
        return self.values[i] if i < len(self.values) else 0.0
