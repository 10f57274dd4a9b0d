"""
Shared fixtures: small reference networks and a JSON writer for them.
"""
import json
import os

import pytest

from flexnet.app.config import reload_config
from flexnet.app.models import BipartiteGraph, DeparturePartition, NetworkModel, RateSpec


def make_model(dispatchers, servers, edges, partition=None):
    """dispatchers / servers as {id: rate}"""
    graph = BipartiteGraph(dispatchers=tuple(dispatchers), servers=tuple(servers), edges=tuple(edges))
    rates = RateSpec(lam=dict(dispatchers), mu=dict(servers))
    blocks = DeparturePartition(tuple(tuple(b) for b in partition)) if partition else None
    return NetworkModel(graph=graph, rates=rates, partition=blocks)


def network_json(dispatchers, servers, edges, partition=None):
    data = {
        "dispatchers": [{"id": d, "rate": r} for d, r in dispatchers.items()],
        "servers": [{"id": u, "rate": r} for u, r in servers.items()],
        "edges": [list(e) for e in edges],
    }
    if partition is not None:
        data["partition"] = [list(b) for b in partition]
    return data


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    """Every test starts from default configuration"""
    for key in list(os.environ):
        if key.startswith("FLEXNET_"):
            monkeypatch.delenv(key, raising=False)
    reload_config()
    yield
    reload_config()


@pytest.fixture
def build_model():
    return make_model


@pytest.fixture
def mm1():
    def _build(lam=0.5, mu=1.0):
        return make_model({"d1": lam}, {"u1": mu}, [("d1", "u1")])
    return _build


@pytest.fixture
def simple_two():
    """One dispatcher, two servers, rho = 1.5"""
    return make_model({"d1": 1.5}, {"u1": 1.0, "u2": 1.0}, [("d1", "u1"), ("d1", "u2")])


@pytest.fixture
def overloaded():
    """d1 ~ {u1} at 0.6 and d2 ~ {u1, u2} at 0.6, mu = 0.5: u1 alone is overloaded"""
    return make_model(
        {"d1": 0.6, "d2": 0.6},
        {"u1": 0.5, "u2": 0.5},
        [("d1", "u1"), ("d2", "u1"), ("d2", "u2")],
    )


@pytest.fixture
def path_graph():
    """D = {d, e}, S = {u, w}, E = {(d,u), (e,u), (e,w)}"""
    return BipartiteGraph(dispatchers=("d", "e"), servers=("u", "w"), edges=(("d", "u"), ("e", "u"), ("e", "w")))


@pytest.fixture
def write_network(tmp_path):
    def _write(name="net.json", **kwargs):
        path = tmp_path / name
        path.write_text(json.dumps(network_json(**kwargs)))
        return path
    return _write
