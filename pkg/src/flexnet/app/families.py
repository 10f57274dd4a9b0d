"""
Generators for the example graph families.

g1: n servers, each with a dedicated degree-one dispatcher, plus n dispatchers
    compatible with every server. alpha = 1 and beta = (n + 1) / 2.
g2: one dispatcher compatible with n servers, plus n isolated
    dispatcher-server pairs. alpha = (n + 1) / 2 and beta = 2n / (n + 1).

g1 is built to reproduce the family's metric values; it is not claimed to be
isomorphic to any particular drawing of the family.
"""
from typing import Dict, List, Mapping, Optional

from .exceptions import ModelValidationError
from .models import BipartiteGraph, DeparturePartition, NetworkModel, RateSpec


def _check_n(n: int):
    if int(n) != n or n < 1:
        raise ModelValidationError(f"family size must be a positive integer, got {n}")


def _unit_rates(graph: BipartiteGraph) -> NetworkModel:
    return NetworkModel(
        graph=graph,
        rates=RateSpec(lam={d: 1.0 for d in graph.dispatchers}, mu={u: 1.0 for u in graph.servers}),
    )


def family_g1(n: int) -> NetworkModel:
    _check_n(n)
    servers = [f"u{i}" for i in range(1, n + 1)]
    dedicated = [f"r{i}" for i in range(1, n + 1)]
    shared = [f"b{i}" for i in range(1, n + 1)]
    edges = [(r, u) for r, u in zip(dedicated, servers)]
    edges += [(b, u) for b in shared for u in servers]
    graph = BipartiteGraph(dispatchers=tuple(dedicated + shared), servers=tuple(servers), edges=tuple(edges))
    return _unit_rates(graph)


def family_g2(n: int) -> NetworkModel:
    _check_n(n)
    hub_servers = [f"u{i}" for i in range(1, n + 1)]
    pair_servers = [f"v{i}" for i in range(1, n + 1)]
    pair_dispatchers = [f"d{i}" for i in range(1, n + 1)]
    edges = [("d0", u) for u in hub_servers]
    edges += list(zip(pair_dispatchers, pair_servers))
    graph = BipartiteGraph(
        dispatchers=tuple(["d0"] + pair_dispatchers),
        servers=tuple(hub_servers + pair_servers),
        edges=tuple(edges),
    )
    return _unit_rates(graph)


def family_complete(k: int) -> NetworkModel:
    """Single dispatcher compatible with k servers (the simple network)"""
    _check_n(k)
    servers = tuple(f"u{i}" for i in range(1, k + 1))
    graph = BipartiteGraph(dispatchers=("d",), servers=servers, edges=tuple(("d", u) for u in servers))
    return _unit_rates(graph)


FAMILIES = {
    "g1": family_g1,
    "g2": family_g2,
    "complete": family_complete,
}


def build_family(name: str, n: int) -> NetworkModel:
    try:
        return FAMILIES[name](n)
    except KeyError:
        raise ModelValidationError(f"unknown family {name!r}; expected one of {sorted(FAMILIES)}") from None


def scale_rates(
    model: NetworkModel,
    lam: float,
    mu: float = 1.0,
    partition: Optional[DeparturePartition] = None,
) -> NetworkModel:
    """Same graph with every arrival rate set to lam and every service rate to mu"""
    lam_map: Dict[str, float] = {d: float(lam) for d in model.dispatchers}
    mu_map: Mapping[str, float] = {u: float(mu) for u in model.servers}
    return NetworkModel(
        graph=model.graph,
        rates=RateSpec(lam=lam_map, mu=mu_map),
        partition=partition or model.partition,
    )


def simple_model(k: int, lam: float, mu: float = 1.0) -> NetworkModel:
    """Simple network with load rho = lam / mu"""
    return scale_rates(family_complete(k), lam, mu)


def edge_count(family: str, n: int) -> int:
    counts: Dict[str, int] = {"g1": n + n * n, "g2": 2 * n, "complete": n}
    return counts[family]


__all__: List[str] = [
    "family_g1",
    "family_g2",
    "family_complete",
    "build_family",
    "scale_rates",
    "simple_model",
    "edge_count",
    "FAMILIES",
]
