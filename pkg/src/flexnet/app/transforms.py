"""
Monotone transformations of a network model.

Each transformation returns a new model together with a TransformRecord; the
input model is never mutated. Applied to an ergodic model, every
transformation yields an ergodic model whose stationary queue lengths are
stochastically dominated server by server.

New server ids follow "origin@dispatcher" (u@d). A collision with an existing
id gets a "~k" suffix, k = 2, 3, ..., so ids are deterministic.
"""
import enum
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .exceptions import TransformError
from .metrics import beta as beta_metric
from .models import BipartiteGraph, DeparturePartition, Edge, NetworkModel, RateSpec

logger = logging.getLogger(__name__)


class TransformKind(enum.Enum):
    arrival_decrease = "ArrivalDecrease"
    service_increase = "ServiceIncrease"
    edge_simplify = "EdgeSimplify"
    full_simplify = "FullSimplify"
    gamma_split = "GammaSplit"


@dataclass(frozen=True)
class TransformRecord:
    kind: TransformKind
    mapping: Mapping[str, str]
    removed_edges: Tuple[Edge, ...] = ()
    added_edges: Tuple[Edge, ...] = ()
    parameters: Mapping[str, Any] = field(default_factory=dict)
    identity: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "mapping": dict(self.mapping),
            "removed_edges": [list(e) for e in self.removed_edges],
            "added_edges": [list(e) for e in self.added_edges],
            "parameters": {k: _jsonable(v) for k, v in self.parameters.items()},
            "identity": self.identity,
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, Fraction):
        return {"num": value.numerator, "den": value.denominator, "float": float(value)}
    if isinstance(value, (tuple, list, set, frozenset)):
        return [_jsonable(v) for v in value]
    return value


def _identity_mapping(model: NetworkModel) -> Dict[str, str]:
    return {u: u for u in model.servers}


def fresh_server_id(origin: str, dispatcher: str, taken: Set[str]) -> str:
    base = f"{origin}@{dispatcher}"
    if base not in taken:
        return base
    k = 2
    while f"{base}~{k}" in taken:
        k += 1
    return f"{base}~{k}"


def decrease_arrivals(model: NetworkModel, new_lambda: Mapping[str, float]) -> Tuple[NetworkModel, TransformRecord]:
    """Lower arrival rates; dispatchers absent from new_lambda keep their rate"""
    lam = dict(model.rates.lam)
    for d, rate in new_lambda.items():
        if d not in lam:
            raise TransformError(f"unknown dispatcher {d}")
        rate = float(rate)
        if not rate > 0:
            raise TransformError(f"nonpositive arrival rate {rate} at {d}")
        if rate > lam[d]:
            raise TransformError(f"arrival rate at {d} would increase from {lam[d]} to {rate}")
        lam[d] = rate
    out = model.with_rates(lam=lam)
    record = TransformRecord(
        kind=TransformKind.arrival_decrease,
        mapping=_identity_mapping(model),
        parameters={"lambda": lam},
        identity=lam == model.rates.lam,
    )
    return out, record


def increase_service(model: NetworkModel, new_mu: Mapping[str, float]) -> Tuple[NetworkModel, TransformRecord]:
    """Raise service rates; must stay constant on every departure block"""
    mu = dict(model.rates.mu)
    for u, rate in new_mu.items():
        if u not in mu:
            raise TransformError(f"unknown server {u}")
        rate = float(rate)
        if rate < mu[u]:
            raise TransformError(f"service rate at {u} would decrease from {mu[u]} to {rate}")
        mu[u] = rate
    for block in model.partition.blocks:
        if len({mu[u] for u in block}) > 1:
            raise TransformError(f"service rates must stay equal on block {list(block)}")
    out = model.with_rates(mu=mu)
    record = TransformRecord(
        kind=TransformKind.service_increase,
        mapping=_identity_mapping(model),
        parameters={"mu": mu},
        identity=mu == model.rates.mu,
    )
    return out, record


def homogenize_rates(
    model: NetworkModel,
    lambda0: Optional[float] = None,
    mu0: Optional[float] = None,
) -> Tuple[NetworkModel, List[TransformRecord]]:
    """Arrival decrease to lambda0 everywhere, then service increase to mu0 everywhere"""
    lambda0 = model.lambda0 if lambda0 is None else float(lambda0)
    mu0 = model.mu0 if mu0 is None else float(mu0)
    lowered, first = decrease_arrivals(model, {d: lambda0 for d in model.dispatchers})
    raised, second = increase_service(lowered, {u: mu0 for u in model.servers})
    return raised, [first, second]


def edge_simplify(model: NetworkModel, edge: Edge) -> Tuple[NetworkModel, TransformRecord]:
    """
    Move dispatcher d off server u onto a fresh server v = u@d that shares u's
    departure clock and rate. A server of degree one is left as it is.
    """
    d, u = tuple(edge)
    graph = model.graph
    if (d, u) not in graph.edge_set:
        raise TransformError(f"({d}, {u}) is not an edge")

    if len(graph.server_neighbors[u]) == 1:
        logger.debug(f"edge_simplify ({d}, {u}): server has degree one, identity")
        record = TransformRecord(
            kind=TransformKind.edge_simplify,
            mapping=_identity_mapping(model),
            parameters={"edge": (d, u)},
            identity=True,
        )
        return model, record

    v = fresh_server_id(u, d, set(graph.servers))
    edges = [e for e in graph.edges if e != (d, u)] + [(d, v)]
    new_graph = BipartiteGraph(dispatchers=graph.dispatchers, servers=graph.servers + (v,), edges=tuple(edges))
    mu = dict(model.rates.mu)
    mu[v] = mu[u]
    blocks = tuple(block + (v,) if u in block else block for block in model.partition.blocks)
    out = NetworkModel(
        graph=new_graph,
        rates=RateSpec(lam=dict(model.rates.lam), mu=mu),
        partition=DeparturePartition(blocks),
    )
    mapping = _identity_mapping(model)
    mapping[v] = u
    record = TransformRecord(
        kind=TransformKind.edge_simplify,
        mapping=mapping,
        removed_edges=((d, u),),
        added_edges=((d, v),),
        parameters={"edge": (d, u), "new_server": v},
    )
    return out, record


def _compose(outer: Mapping[str, str], inner: Mapping[str, str]) -> Dict[str, str]:
    """outer maps newest ids to intermediate ids, inner maps those to the originals"""
    return {new: inner.get(mid, mid) for new, mid in outer.items()}


def apply_all_edge_simplifications(
    model: NetworkModel,
    order: Optional[Sequence[Edge]] = None,
) -> Tuple[NetworkModel, List[TransformRecord]]:
    """
    Simplify every original edge in the given order (default: canonical edge
    order). Each edge is tracked through earlier renames.
    """
    order = [tuple(e) for e in (model.graph.edges if order is None else order)]
    if sorted(order) != sorted(model.graph.edges):
        raise TransformError("order must list every edge of the model exactly once")

    current = model
    # where each original edge lives now
    location: Dict[Edge, Edge] = {e: e for e in order}
    records = []
    for e in order:
        out, record = edge_simplify(current, location[e])
        if not record.identity:
            d, u = location[e]
            location[e] = (d, record.parameters["new_server"])
        records.append(record)
        current = out
    return current, records


def full_simplify(model: NetworkModel) -> Tuple[NetworkModel, TransformRecord]:
    """
    One server copy u@d per edge (d, u), each compatible with d only; copies
    of all servers of an original block form one block.
    """
    graph = model.graph
    taken: Set[str] = set()
    copies: Dict[Edge, str] = {}
    for d, u in graph.edges:
        v = fresh_server_id(u, d, taken)
        taken.add(v)
        copies[(d, u)] = v

    servers = tuple(copies[e] for e in graph.edges)
    edges = tuple((d, copies[(d, u)]) for d, u in graph.edges)
    mu = {copies[(d, u)]: model.rates.mu[u] for d, u in graph.edges}
    blocks = tuple(
        tuple(copies[(d, u)] for u in block for d in graph.server_neighbors[u])
        for block in model.partition.blocks
    )
    out = NetworkModel(
        graph=BipartiteGraph(dispatchers=graph.dispatchers, servers=servers, edges=edges),
        rates=RateSpec(lam=dict(model.rates.lam), mu=mu),
        partition=DeparturePartition(blocks),
    )
    record = TransformRecord(
        kind=TransformKind.full_simplify,
        mapping={v: u for (d, u), v in copies.items()},
        removed_edges=graph.edges,
        added_edges=edges,
        identity=all(len(ds) == 1 for ds in graph.server_neighbors.values()),
    )
    logger.debug(f"full_simplify: {len(graph.servers)} servers -> {len(servers)}")
    return out, record


def canonical_form(model: NetworkModel) -> Tuple:
    """
    Representation invariant under server renaming (dispatcher ids are kept):
    each server is replaced by (sorted neighbourhood, service rate) and each
    block by the sorted list of its members' signatures.
    """
    graph = model.graph
    signature = {u: (tuple(sorted(graph.server_neighbors[u])), model.rates.mu[u]) for u in graph.servers}
    blocks = sorted(tuple(sorted(signature[u] for u in block)) for block in model.partition.blocks)
    lam = tuple(sorted(model.rates.lam.items()))
    return lam, tuple(blocks)


def gamma_split(model: NetworkModel, gamma: float) -> Tuple[NetworkModel, NetworkModel, TransformRecord]:
    """
    Split at level gamma > beta.

    D_gamma holds dispatchers of degree below gamma and S_gamma their
    neighbours. Every edge from a dispatcher outside D_gamma into S_gamma is
    simplified, giving g0_model. g_gamma_model is the part induced by D_gamma
    and S_gamma, with independent departures at every server of S_gamma.
    """
    graph = model.graph
    beta = beta_metric(graph)
    if not gamma > beta:
        raise TransformError(f"gamma={gamma} must exceed beta={beta}")
    degrees = graph.dispatcher_degrees
    d_gamma = tuple(d for d in graph.dispatchers if degrees[d] < gamma)
    if not d_gamma:
        raise TransformError(f"no dispatcher has degree below gamma={gamma}")
    inside = set(d_gamma)
    s_members = {u for d in d_gamma for u in graph.dispatcher_neighbors[d]}
    s_gamma = tuple(u for u in graph.servers if u in s_members)

    cut = [(d, u) for d, u in graph.edges if d not in inside and u in s_members]
    g0_model = model
    mapping = _identity_mapping(model)
    added: List[Edge] = []
    for e in cut:
        g0_model, record = edge_simplify(g0_model, e)
        mapping = _compose(record.mapping, mapping)
        added.extend(record.added_edges)

    sub_edges = tuple((d, u) for d, u in graph.edges if d in inside)
    g_gamma_model = NetworkModel(
        graph=BipartiteGraph(dispatchers=d_gamma, servers=s_gamma, edges=sub_edges),
        rates=RateSpec(
            lam={d: model.rates.lam[d] for d in d_gamma},
            mu={u: model.rates.mu[u] for u in s_gamma},
        ),
        partition=DeparturePartition.singletons(s_gamma),
    )
    record = TransformRecord(
        kind=TransformKind.gamma_split,
        mapping=mapping,
        removed_edges=tuple(cut),
        added_edges=tuple(added),
        parameters={"gamma": gamma, "beta": beta, "D_gamma": d_gamma, "S_gamma": s_gamma},
        identity=not cut,
    )
    logger.info(f"gamma_split gamma={gamma}: |D_gamma|={len(d_gamma)} |S_gamma|={len(s_gamma)}, {len(cut)} edges simplified")
    return g0_model, g_gamma_model, record
