"""
Command-line surface: subcommands, output files and exit codes.
"""
import json
from fractions import Fraction

import pandas as pd
import pytest

from flexnet.app.commands.common import EXIT_FAILED_CHECK, EXIT_OK, EXIT_REJECTED, EXIT_USAGE, parse_assignments
from flexnet.app.config import reload_config
from flexnet.app.experiments import VerificationResult, VerificationRow
from flexnet.app.stability import check_ergodic
from flexnet.app.utils.model_io import CSV_HEADER, read_csv
from flexnet.main import main

SIMPLE = dict(dispatchers={"d1": 1.5}, servers={"u1": 1.0, "u2": 1.0}, edges=[["d1", "u1"], ["d1", "u2"]])
OVERLOADED = dict(
    dispatchers={"d1": 0.6, "d2": 0.6},
    servers={"u1": 0.5, "u2": 0.5},
    edges=[["d1", "u1"], ["d2", "u1"], ["d2", "u2"]],
)
SHARED = dict(dispatchers={"d": 0.3, "e": 0.4}, servers={"u": 1.0}, edges=[["d", "u"], ["e", "u"]])


@pytest.fixture
def simple_path(write_network):
    return str(write_network("simple.json", **SIMPLE))


@pytest.fixture
def overloaded_path(write_network):
    return str(write_network("overloaded.json", **OVERLOADED))


class TestUsage:
    def test_help(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "flexnet" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [[], ["metrics"], ["frobnicate"], ["sweep", "--family", "g3"]])
    def test_bad_arguments(self, argv):
        assert main(argv) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert main(["metrics", str(tmp_path / "absent.json")]) == EXIT_USAGE

    def test_invalid_model(self, write_network):
        path = write_network("bad.json", dispatchers={"d1": 1.0}, servers={"u1": -1.0}, edges=[["d1", "u1"]])
        assert main(["check-ergodic", str(path)]) == EXIT_USAGE

    def test_parse_assignments(self):
        assert parse_assignments("d1=0.5, d2=1") == {"d1": 0.5, "d2": 1.0}
        with pytest.raises(ValueError):
            parse_assignments("d1")


class TestNetworkCommands:
    def test_metrics_json(self, simple_path, capsys):
        assert main(["metrics", simple_path, "--format", "json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["servers"] == 2
        assert payload["alpha"] == {"num": 2, "den": 1, "float": 2.0}
        assert payload["rho0"] == 1.5

    def test_metrics_csv_file(self, simple_path, tmp_path):
        out = tmp_path / "metrics.csv"
        assert main(["metrics", simple_path, "--out", str(out)]) == EXIT_OK
        assert out.read_text().splitlines()[0] == CSV_HEADER
        frame = read_csv(out)
        assert frame["beta_num"].iloc[0] == 2
        assert frame["edges"].iloc[0] == 2

    def test_check_ergodic(self, simple_path, overloaded_path, capsys):
        assert main(["check-ergodic", simple_path]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["status"] == "Ergodic"
        assert main(["check-ergodic", overloaded_path]) == EXIT_REJECTED
        verdict = json.loads(capsys.readouterr().out)
        assert verdict["status"] == "NotErgodic"
        assert verdict["witness"] == ["u1"]

    def test_check_ergodic_boundary(self, write_network, capsys):
        path = write_network(dispatchers={"d1": 1.0}, servers={"u1": 1.0}, edges=[["d1", "u1"]])
        assert main(["check-ergodic", str(path)]) == EXIT_REJECTED
        assert json.loads(capsys.readouterr().out)["status"] == "Boundary"

    def test_bounds_stdout(self, simple_path, capsys):
        assert main(["bounds", simple_path, "--imax", "4"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[1].startswith("i,prop1")
        assert len(lines) == 2 + 5

    def test_edge_simplify(self, write_network, capsys):
        path = write_network(**SHARED)
        assert main(["transform", str(path), "--op", "edge-simplify", "--edge", "d,u"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["record"]["kind"] == "EdgeSimplify"
        assert [s["id"] for s in payload["model"]["servers"]] == ["u", "u@d"]
        assert payload["model"]["partition"] == [["u", "u@d"]]

    def test_transform_to_file_round_trips(self, write_network, tmp_path, capsys):
        path = write_network(**SHARED)
        out = tmp_path / "lowered.json"
        argv = ["transform", str(path), "--op", "decrease-arrivals", "--rates", "d=0.1", "--out", str(out)]
        assert main(argv) == EXIT_OK
        model_file = tmp_path / "model.json"
        model_file.write_text(json.dumps(json.loads(out.read_text())["model"]))
        assert main(["metrics", str(model_file), "--format", "json"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["rho0"] == pytest.approx(0.1)

    def test_transform_errors(self, write_network):
        path = str(write_network(**SHARED))
        assert main(["transform", path, "--op", "gamma-split"]) == EXIT_USAGE
        assert main(["transform", path, "--op", "decrease-arrivals", "--rates", "d=0.9"]) == EXIT_USAGE
        assert main(["transform", path, "--op", "edge-simplify", "--edge", "d,x"]) == EXIT_USAGE

    def test_gamma_split(self, write_network, capsys):
        path = write_network(
            dispatchers={"d1": 0.2, "d2": 0.2},
            servers={"u1": 1.0, "u2": 1.0, "u3": 1.0},
            edges=[["d1", "u1"], ["d1", "u2"], ["d1", "u3"], ["d2", "u1"]],
        )
        assert main(["transform", str(path), "--op", "gamma-split", "--gamma", "2.5"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert {"g0_model", "g_gamma_model", "record"} <= set(payload)
        assert [s["id"] for s in payload["g_gamma_model"]["servers"]] == ["u1"]


class TestSolveCommands:
    def test_solve_exact_with_sidecar(self, simple_path, tmp_path):
        out = tmp_path / "occ.csv"
        argv = ["solve-exact", simple_path, "--cap", "20", "--imax", "6", "--method", "direct", "--out", str(out)]
        assert main(argv) == EXIT_OK
        frame = read_csv(out)
        assert list(frame.columns) == ["i", "Eq_i", "tail_u1", "tail_u2"]
        assert frame["Eq_i"].iloc[0] == 1.0
        meta = json.loads((tmp_path / "occ.csv.json").read_text())
        assert meta["cap"] == 20
        assert meta["mean_total_tasks"] > 0

    def test_solve_exact_rejects_unstable(self, overloaded_path):
        assert main(["solve-exact", overloaded_path, "--cap", "4"]) == EXIT_REJECTED

    def test_simulate(self, simple_path, capsys):
        assert main(["simulate", simple_path, "--horizon", "2000", "--imax", "3", "--format", "json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert [row["i"] for row in payload["rows"]] == [0, 1, 2, 3]
        assert all(0.0 <= row["ci_lo"] <= row["estimate"] <= row["ci_hi"] <= 1.0 for row in payload["rows"])
        assert "little" in payload["meta"]

    def test_simulate_divergence(self, overloaded_path, monkeypatch, capsys):
        monkeypatch.setenv("FLEXNET_SIM_DIVERGENCE_GUARD", "50")
        reload_config()
        assert main(["simulate", overloaded_path, "--format", "json"]) == EXIT_REJECTED
        payload = json.loads(capsys.readouterr().out)
        assert payload["rows"] == []
        assert payload["meta"]["aborted_unstable"] is True

    def test_simulate_divergence_writes_no_files(self, overloaded_path, monkeypatch, tmp_path):
        monkeypatch.setenv("FLEXNET_SIM_DIVERGENCE_GUARD", "50")
        reload_config()
        out = tmp_path / "sim.csv"
        assert main(["simulate", overloaded_path, "--out", str(out)]) == EXIT_REJECTED
        assert not out.exists()
        assert not (tmp_path / "sim.csv.json").exists()


class TestAuditCommands:
    def test_verify_family(self, capsys):
        argv = ["verify", "--family", "complete", "--n", "2", "--load-factor", "0.5", "--cap", "20", "--imax", "5"]
        assert main(argv) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == CSV_HEADER
        assert "prop1_pass" in lines[1]

    def test_verify_model_sidecar(self, simple_path, tmp_path):
        out = tmp_path / "verify.csv"
        argv = ["verify", "--model", simple_path, "--cap", "20", "--imax", "5", "--out", str(out)]
        assert main(argv) == EXIT_OK
        meta = json.loads((tmp_path / "verify.csv.json").read_text())
        assert meta["passed"] is True
        assert meta["alpha"]["num"] == 2
        assert meta["experiment"]["output"] == str(out)
        assert meta["experiment"]["model_path"] == simple_path

    def test_verify_rejects(self, overloaded_path):
        assert main(["verify", "--model", overloaded_path]) == EXIT_REJECTED

    @pytest.mark.parametrize(
        "extra",
        [
            ["--model", "x.json", "--family", "g1", "--n", "2"],
            ["--family", "g1"],
            ["--family", "g1", "--n", "2", "--bounds", "thm9"],
        ],
    )
    def test_verify_usage(self, extra):
        assert main(["verify", *extra]) == EXIT_USAGE

    def test_sweep(self, tmp_path):
        out = tmp_path / "sweep.csv"
        argv = ["sweep", "--family", "g1", "--n-min", "1", "--n-max", "2", "--method", "exact",
                "--cap", "8", "--imax", "3", "--load-factor", "0.5", "--out", str(out)]
        assert main(argv) == EXIT_OK
        frame = read_csv(out)
        assert sorted(frame["n"].unique()) == [1, 2]
        assert json.loads((tmp_path / "sweep.csv.json").read_text())["failed"] == 0

    def test_lemma_scan(self, capsys):
        assert main(["lemma-scan", "--rho", "0.5,1.0", "--points", "500", "--format", "json"]) == EXIT_OK
        rows = json.loads(capsys.readouterr().out)["rows"]
        assert len(rows) == 6
        assert all(row["decreasing"] and row["convex"] for row in rows)

    def test_battery_short_of_conclusive_models(self, monkeypatch, capsys):
        from flexnet.app import experiments

        monkeypatch.setattr(experiments, "BATTERY_STATE_BUDGET", 100)
        monkeypatch.setenv("FLEXNET_BOUNDARY_MASS_MAX", "1e-300")
        reload_config()
        assert main(["battery", "--count", "1", "--imax", "4", "--format", "json"]) == EXIT_FAILED_CHECK
        meta = json.loads(capsys.readouterr().out)["meta"]
        assert meta["conclusive"] == 0
        assert meta["failed"] == 0

    def test_lemma_scan_default_grid(self, capsys):
        assert main(["lemma-scan", "--format", "json"]) == EXIT_OK
        rows = json.loads(capsys.readouterr().out)["rows"]
        assert {(row["rho"], row["k"]) for row in rows} == {
            (0.5, 2), (0.5, 3), (0.5, 5), (1.0, 1), (1.0, 2), (1.0, 4), (2.0, 1), (2.0, 2), (2.0, 4)
        }
        assert all(row["points"] == 1000 for row in rows)

    def test_coupling(self, capsys):
        argv = ["coupling", "--servers", "1,2", "--rho", "0.5,1.5", "--runs", "1", "--events", "5000", "--format", "json"]
        assert main(argv) == EXIT_OK
        rows = json.loads(capsys.readouterr().out)["rows"]
        # rho = 1.5 is skipped for a single server
        assert len(rows) == 3
        assert all(row["dominated"] for row in rows)


def test_failed_check_exit_code(monkeypatch, simple_path, simple_two):
    from flexnet.app.commands import audit

    def _failing(spec):
        row = VerificationRow(2, 0.0, 0.0, 0.0, {"thm1": 0.5}, {"thm1": False})
        return VerificationResult(rows=[row], verdict=check_ergodic(simple_two), rho0=1.5, alpha=Fraction(2), beta=Fraction(2))

    monkeypatch.setattr(audit, "run_verification", _failing)
    assert main(["verify", "--model", simple_path]) == EXIT_FAILED_CHECK


def test_failed_flags_ignore_unasserted_levels():
    from flexnet.app.commands.audit import _failed_flags

    frame = pd.DataFrame({"i": [0, 1, 2], "thm1_pass": [None, True, False], "thm2_pass": [None, True, True]})
    assert _failed_flags(frame) == 1
    assert _failed_flags(pd.DataFrame()) == 0
