"""
Monotone transformations, full simplification and the gamma split.
"""
import numpy as np
import pytest

from flexnet.app.exceptions import TransformError
from flexnet.app.families import family_g2, simple_model
from flexnet.app.metrics import beta
from flexnet.app.stability import check_ergodic
from flexnet.app.transforms import (
    TransformKind,
    apply_all_edge_simplifications,
    canonical_form,
    decrease_arrivals,
    edge_simplify,
    fresh_server_id,
    full_simplify,
    gamma_split,
    homogenize_rates,
    increase_service,
)
from flexnet.app.utils.sampling import sample_models


@pytest.fixture
def shared_server(build_model):
    """D = {d, e}, S = {u}, both dispatchers on u"""
    return build_model({"d": 0.3, "e": 0.4}, {"u": 1.0}, [("d", "u"), ("e", "u")])


@pytest.fixture
def complete_2x2(build_model):
    return build_model(
        {"d": 0.5, "e": 0.5},
        {"u": 1.0, "v": 1.0},
        [("d", "u"), ("d", "v"), ("e", "u"), ("e", "v")],
    )


class TestRates:
    def test_decrease(self, build_model):
        model = build_model({"a": 1.0, "b": 2.0}, {"u": 4.0}, [("a", "u"), ("b", "u")])
        out, record = decrease_arrivals(model, {"b": 1.5})
        assert out.rates.lam == {"a": 1.0, "b": 1.5}
        assert out.graph == model.graph and out.partition == model.partition
        assert record.kind is TransformKind.arrival_decrease
        assert not record.identity

    def test_decrease_rejects_increase(self, mm1):
        with pytest.raises(TransformError, match="increase"):
            decrease_arrivals(mm1(1.0, 2.0), {"d1": 1.2})
        with pytest.raises(TransformError, match="nonpositive"):
            decrease_arrivals(mm1(1.0, 2.0), {"d1": 0.0})

    def test_decrease_identity(self, mm1):
        model = mm1()
        out, record = decrease_arrivals(model, dict(model.rates.lam))
        assert out == model
        assert record.identity

    def test_increase(self, simple_two):
        out, record = increase_service(simple_two, {"u2": 2.0})
        assert out.rates.mu == {"u1": 1.0, "u2": 2.0}
        assert record.mapping == {"u1": "u1", "u2": "u2"}
        scaled, _ = increase_service(simple_two, {u: 1.5 for u in simple_two.servers})
        assert set(scaled.rates.mu.values()) == {1.5}

    def test_increase_block_constancy(self, build_model):
        model = build_model({"d": 0.5}, {"u": 1.0, "v": 1.0}, [("d", "u"), ("d", "v")], partition=[["u", "v"]])
        with pytest.raises(TransformError, match="block"):
            increase_service(model, {"u": 2.0})
        with pytest.raises(TransformError, match="decrease"):
            increase_service(model, {"u": 0.5, "v": 0.5})

    def test_homogenize(self, build_model):
        model = build_model({"a": 0.4, "b": 0.9}, {"u": 1.0, "w": 2.0}, [("a", "u"), ("b", "u"), ("b", "w")])
        out, records = homogenize_rates(model)
        assert set(out.rates.lam.values()) == {0.4}
        assert set(out.rates.mu.values()) == {2.0}
        assert [r.kind for r in records] == [TransformKind.arrival_decrease, TransformKind.service_increase]


class TestEdgeSimplify:
    def test_moves_dispatcher_to_copy(self, shared_server):
        out, record = edge_simplify(shared_server, ("d", "u"))
        assert out.servers == ("u", "u@d")
        assert set(out.graph.edges) == {("e", "u"), ("d", "u@d")}
        assert out.partition.blocks == (("u", "u@d"),)
        assert out.rates.mu["u@d"] == 1.0
        assert record.mapping == {"u": "u", "u@d": "u"}
        assert record.removed_edges == (("d", "u"),)
        assert record.added_edges == (("d", "u@d"),)

    def test_degree_one_is_identity(self, mm1):
        model = mm1()
        out, record = edge_simplify(model, ("d1", "u1"))
        assert out is model
        assert record.identity

    def test_missing_edge(self, shared_server):
        with pytest.raises(TransformError):
            edge_simplify(shared_server, ("d", "x"))

    def test_dispatcher_degrees_kept(self, complete_2x2):
        out, _ = edge_simplify(complete_2x2, ("e", "v"))
        assert out.graph.dispatcher_degrees == complete_2x2.graph.dispatcher_degrees
        assert len(out.servers) == len(complete_2x2.servers) + 1

    def test_fresh_ids(self):
        assert fresh_server_id("u", "d", {"u"}) == "u@d"
        assert fresh_server_id("u", "d", {"u", "u@d"}) == "u@d~2"
        assert fresh_server_id("u", "d", {"u", "u@d", "u@d~2"}) == "u@d~3"

    def test_all_edges_of_complete_2x2(self, complete_2x2):
        out, records = apply_all_edge_simplifications(complete_2x2)
        assert len(out.graph.edges) == 4
        assert all(len(ds) == 1 for ds in out.graph.server_neighbors.values())
        sizes = sorted(len(block) for block in out.partition.blocks)
        assert sizes == [2, 2]
        assert sum(r.identity for r in records) == 2


class TestFullSimplify:
    def test_complete_2x2(self, complete_2x2):
        out, record = full_simplify(complete_2x2)
        assert len(out.servers) == 4
        assert all(len(ds) == 1 for ds in out.graph.server_neighbors.values())
        blocks = {tuple(sorted(record.mapping[v] for v in block)) for block in out.partition.blocks}
        assert blocks == {("u", "u"), ("v", "v")}
        assert set(record.mapping.values()) == {"u", "v"}

    def test_simple_unchanged_up_to_renaming(self):
        model = simple_model(3, lam=1.0)
        out, record = full_simplify(model)
        assert record.identity
        assert canonical_form(out) == canonical_form(model)

    def test_dispatcher_degrees_preserved(self):
        for model in sample_models(20, seed=9):
            out, record = full_simplify(model)
            assert out.graph.dispatcher_degrees == model.graph.dispatcher_degrees
            assert set(record.mapping) == set(out.servers)

    def test_matches_sequential_in_any_order(self):
        rng = np.random.default_rng(4)
        for model in sample_models(25, seed=12):
            direct, _ = full_simplify(model)
            edges = list(model.graph.edges)
            for _ in range(3):
                order = [edges[k] for k in rng.permutation(len(edges))]
                sequential, _ = apply_all_edge_simplifications(model, order)
                assert canonical_form(sequential) == canonical_form(direct)

    def test_order_must_cover_edges(self, complete_2x2):
        with pytest.raises(TransformError):
            apply_all_edge_simplifications(complete_2x2, [("d", "u")])

    def test_preserves_ergodicity(self):
        for model in sample_models(20, seed=21):
            assert check_ergodic(full_simplify(model)[0]).is_ergodic


class TestGammaSplit:
    def test_all_below_gamma(self):
        model = family_g2(2)
        gamma = float(beta(model.graph)) + 1
        g0, g_gamma, record = gamma_split(model, gamma)
        assert record.identity
        assert g0 == model
        assert g_gamma == model

    def test_cuts_high_degree_edges(self, build_model):
        model = build_model(
            {"d1": 0.2, "d2": 0.2},
            {"u1": 1.0, "u2": 1.0, "u3": 1.0},
            [("d1", "u1"), ("d1", "u2"), ("d1", "u3"), ("d2", "u1")],
        )
        # beta = 2, degrees (3, 1)
        g0, g_gamma, record = gamma_split(model, 2.5)
        assert record.parameters["D_gamma"] == ("d2",)
        assert record.parameters["S_gamma"] == ("u1",)
        assert record.removed_edges == (("d1", "u1"),)
        assert g_gamma.dispatchers == ("d2",) and g_gamma.servers == ("u1",)
        assert ("d1", "u1") not in g0.graph.edge_set
        assert ("d1", "u1@d1") in g0.graph.edge_set
        assert record.mapping["u1@d1"] == "u1"
        assert g0.partition.block_of["u1"] == g0.partition.block_of["u1@d1"]

    def test_g_gamma_has_independent_departures(self, build_model):
        model = build_model(
            {"a": 0.3, "b": 0.3},
            {"u1": 1.0, "u2": 1.0},
            [("a", "u1"), ("b", "u2")],
            partition=[["u1", "u2"]],
        )
        g0, g_gamma, record = gamma_split(model, 2.0)
        assert record.identity
        assert g0.partition.blocks == (("u1", "u2"),)
        assert g_gamma.partition.is_singleton()
        assert g_gamma.partition.blocks == (("u1",), ("u2",))

    def test_errors(self, complete_2x2):
        with pytest.raises(TransformError, match="exceed beta"):
            gamma_split(complete_2x2, 2.0)

    def test_uniform_degrees_split_to_identity(self, complete_2x2):
        g0, g_gamma, record = gamma_split(complete_2x2, 2.5)
        assert record.identity
        assert g0 == complete_2x2 and g_gamma == complete_2x2

    def test_record_json(self, shared_server):
        _, record = edge_simplify(shared_server, ("d", "u"))
        data = record.to_dict()
        assert data["kind"] == "EdgeSimplify"
        assert data["parameters"]["edge"] == ["d", "u"]
