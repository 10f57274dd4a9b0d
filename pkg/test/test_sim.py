"""
Event-driven JSQ simulation, replication merging, the coupling run and Little's law.
"""
import numpy as np
import pytest

from flexnet.app.exact import solve_model
from flexnet.app.families import simple_model
from flexnet.app.sim import (
    SimConfig,
    coupled_prop1_run,
    estimate_occupancy,
    little_check,
    merge_results,
    replication_seed,
    simulate,
)


def _close(estimate, half_width, target, floor=0.01):
    return abs(estimate - target) <= 2 * half_width + floor


class TestSimConfig:
    def test_defaults_from_config(self):
        config = SimConfig(horizon=100.0)
        assert config.batches == 20
        assert config.burn_in == pytest.approx(0.2)
        assert config.confidence == pytest.approx(0.99)

    def test_env_override(self, monkeypatch):
        from flexnet.app.config import reload_config

        monkeypatch.setenv("FLEXNET_SIM_BATCHES", "7")
        reload_config()
        assert SimConfig(horizon=10.0).batches == 7

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"horizon": 0.0},
            {"horizon": 10.0, "burn_in": 1.0},
            {"horizon": 10.0, "batches": 1},
            {"horizon": 10.0, "i_max": 0},
            {"horizon": 10.0, "confidence": 1.5},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)


class TestSimulate:
    def test_mm1_level_one(self, mm1):
        result = simulate(mm1(0.5, 1.0), SimConfig(horizon=2e5, seed=3, i_max=5))
        curve = result.occupancy
        assert not result.aborted_unstable
        assert curve.values[0] == 1.0
        for i in range(1, 4):
            assert _close(curve.values[i], curve.half_widths[i], 0.5**i)
        assert result.batches == 20

    def test_simple_two_matches_exact(self, simple_two):
        _, exact = solve_model(simple_two, cap=40, method="direct", i_max=6)
        curve = simulate(simple_two, SimConfig(horizon=1e5, seed=1, i_max=6)).occupancy
        for i in range(1, 7):
            assert _close(curve.values[i], curve.half_widths[i], exact.values[i])

    def test_deterministic(self, simple_two):
        config = SimConfig(horizon=2000.0, seed=42)
        a, b = simulate(simple_two, config), simulate(simple_two, config)
        assert a.occupancy.values == b.occupancy.values
        assert a.events == b.events
        other = simulate(simple_two, config, replication=1)
        assert other.occupancy.values != a.occupancy.values

    def test_seed_sequence(self):
        a = replication_seed(5, 0).generate_state(2)
        b = replication_seed(5, 1).generate_state(2)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, replication_seed(5, 0).generate_state(2))

    def test_aborts_when_unstable(self, overloaded):
        result = simulate(overloaded, SimConfig(horizon=1e6, divergence_guard=50))
        assert result.aborted_unstable
        assert result.occupancy is None
        assert result.max_total_tasks > 50
        assert result.abort_time < 1e6
        with pytest.raises(ValueError):
            little_check(result, overloaded)

    def test_occupancy_identity(self, build_model):
        model = build_model(
            {"a": 0.4, "b": 0.9},
            {"u": 1.0, "w": 1.5},
            [("a", "u"), ("b", "u"), ("b", "w")],
        )
        result = simulate(model, SimConfig(horizon=5000.0, seed=2, i_max=3))
        report = little_check(result, model)
        assert report.identity_ok
        assert result.tail_mass >= 0


class TestReplications:
    def test_single_passes_through(self, mm1):
        result = simulate(mm1(), SimConfig(horizon=500.0))
        assert merge_results([result]) is result
        with pytest.raises(ValueError):
            merge_results([])

    def test_estimate_matches_manual_merge(self, simple_two):
        config = SimConfig(horizon=1000.0, seed=9, i_max=4)
        merged = estimate_occupancy(simple_two, config, replications=3, workers=1)
        manual = merge_results([simulate(simple_two, config, r) for r in range(3)])
        assert merged.replications == 3
        assert merged.occupancy.values == pytest.approx(manual.occupancy.values)
        expected = np.mean([simulate(simple_two, config, r).occupancy.values for r in range(3)], axis=0)
        assert np.allclose(merged.occupancy.values, expected)
        assert merged.occupancy.half_widths[0] == 0.0

    def test_merge_keeps_abort(self, overloaded):
        config = SimConfig(horizon=1e6, divergence_guard=30)
        merged = estimate_occupancy(overloaded, config, replications=2, workers=1)
        assert merged.aborted_unstable
        assert merged.replications == 2

    def test_bad_replication_count(self, mm1):
        with pytest.raises(ValueError):
            estimate_occupancy(mm1(), SimConfig(horizon=10.0), replications=0)


class TestCoupling:
    @pytest.mark.parametrize("s, rho", [(2, 1.5), (3, 0.9), (3, 2.7)])
    def test_jsq_dominates_pooled_queue(self, s, rho):
        report = coupled_prop1_run(s, rho, max_events=20000, seed=s)
        assert report.dominated
        assert report.events == 20000
        assert report.max_gap >= 0

    def test_single_server_equality(self):
        report = coupled_prop1_run(1, 0.5, max_events=20000)
        assert report.equality_violations == 0
        assert report.max_gap == 0

    def test_horizon(self):
        report = coupled_prop1_run(2, 1.0, horizon=100.0)
        assert 0 < report.events
        assert report.to_dict()["servers"] == 2

    def test_rejects(self):
        with pytest.raises(ValueError):
            coupled_prop1_run(2, 2.0, max_events=10)
        with pytest.raises(ValueError):
            coupled_prop1_run(0, 0.5, max_events=10)
        with pytest.raises(ValueError):
            coupled_prop1_run(2, 1.0)


def test_little_on_mm1(mm1):
    model = mm1(0.5, 1.0)
    result = simulate(model, SimConfig(horizon=2e5, seed=11))
    report = little_check(result, model)
    assert report.identity_ok
    assert report.little_ok
    assert report.mean_total_tasks == pytest.approx(1.0, rel=0.1)
    assert report.mean_sojourn == pytest.approx(2.0, rel=0.1)
    assert report.arrival_rate == 0.5


def test_half_width_shrinks_with_replications(mm1):
    model = mm1(0.5, 1.0)
    config = SimConfig(horizon=2e4, seed=21, i_max=3)
    single = simulate(model, config, 0).occupancy.half_widths
    pooled = estimate_occupancy(model, config, replications=4, workers=1).occupancy.half_widths
    ratio = np.mean([pooled[i] / single[i] for i in range(1, 4)])
    # 1/sqrt(4) scaled by the smaller t quantile
    assert 0.3 <= ratio <= 0.7


@pytest.mark.slow
class TestAcceptanceScale:
    @pytest.mark.parametrize("s, rho", [(2, 1.5), (3, 2.0), (5, 4.0)])
    @pytest.mark.parametrize("seed", range(5))
    def test_coupling_dominance(self, s, rho, seed):
        report = coupled_prop1_run(s, rho, max_events=10**6, seed=seed)
        assert report.events == 10**6
        assert report.dominated

    def test_confidence_interval_coverage(self, build_model):
        models = [
            build_model({"d1": 0.3}, {"u1": 1.0}, [("d1", "u1")]),
            build_model({"d1": 0.5}, {"u1": 1.0}, [("d1", "u1")]),
            build_model({"d1": 0.8}, {"u1": 1.0}, [("d1", "u1")]),
            simple_model(2, lam=1.0),
            simple_model(2, lam=1.5),
            simple_model(3, lam=2.0),
            build_model({"a": 0.4, "b": 0.9}, {"u": 1.0, "w": 1.5}, [("a", "u"), ("b", "u"), ("b", "w")]),
            build_model({"d": 0.3, "e": 0.4}, {"u": 1.0}, [("d", "u"), ("e", "u")]),
            build_model(
                {"d": 0.6, "e": 0.5},
                {"u": 1.0, "v": 0.8},
                [("d", "u"), ("d", "v"), ("e", "u"), ("e", "v")],
            ),
            build_model({"d": 0.5}, {"u": 1.0, "v": 1.0}, [("d", "u"), ("d", "v")], partition=[["u", "v"]]),
        ]
        covered = cells = 0
        for k, model in enumerate(models):
            _, exact = solve_model(model, cap=60 if len(model.servers) < 3 else 30, method="direct", i_max=8)
            config = SimConfig(horizon=1e6, seed=k, i_max=8, batches=20)
            curve = estimate_occupancy(model, config, replications=5, workers=1).occupancy
            for i in range(1, 9):
                cells += 1
                covered += abs(curve.values[i] - exact.values[i]) <= curve.half_widths[i] + exact.truncation_slack
        assert covered >= 0.95 * cells
