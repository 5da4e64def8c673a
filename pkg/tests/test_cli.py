import json

import numpy as np
import pytest

import bbmlab as bl
from bbmlab import output
from bbmlab.cli import main


class TestClassify:
    def test_critical(self, capsys):
        assert main(["classify", "--coeffs", "0.5,0,0.5"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("Critical, m=1,")

    def test_supercritical(self, capsys):
        assert main(["classify", "--coeffs", "0.25,0,0.75"]) == 0
        out = capsys.readouterr().out
        assert "Supercritical, m=1.5" in out
        assert "q*=0.333333" in out

    def test_invalid_coefficients_exit_2(self, capsys):
        assert main(["classify", "--coeffs", "0.5,0.6"]) == 2
        assert "sum" in capsys.readouterr().err


class TestSimulate:
    def test_reproducible_bytes(self, tmp_path):
        files = []
        for name in ("a.json", "b.json"):
            path = tmp_path / name
            code = main([
                "simulate", "--lambda", "6", "--coeffs", "0.5,0,0.5",
                "--x", "1", "--T", "10", "--n", "500", "--seed", "42",
                "--t-query", "2,5", "--out", str(path), "--format", "json",
            ])
            assert code == 0
            files.append(path.read_bytes())
        assert files[0] == files[1]

    def test_json_record_structure(self, tmp_path):
        path = tmp_path / "sim.json"
        main([
            "simulate", "--lambda", "6", "--coeffs", "0.5,0,0.5",
            "--x", "1", "--T", "10", "--n", "300", "--seed", "1",
            "--out", str(path), "--format", "json",
        ])
        doc = json.loads(path.read_text())
        assert set(doc) == {"meta", "data"}
        meta = doc["meta"]
        assert {"config_hash", "tag_counts", "estimates", "seed", "config"} <= set(meta)
        assert meta["config"]["model"]["lambda"] == 6.0
        total = sum(meta["tag_counts"].values())
        assert total == 300

    def test_csv_format(self, tmp_path):
        path = tmp_path / "sim.csv"
        main([
            "simulate", "--lambda", "6", "--coeffs", "0.5,0,0.5",
            "--x", "1", "--T", "10", "--n", "200", "--seed", "1",
            "--t-query", "5", "--out", str(path),
        ])
        raw = path.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode().splitlines()
        assert lines[0].startswith("# {")
        assert lines[1] == "x,t,kind,mean,n,half_width_95"

    def test_config_file_with_flag_precedence(self, tmp_path):
        conf = tmp_path / "run.toml"
        conf.write_text(
            'T = 10.0\nn = 200\nseed = 4\n'
            "[model]\nlambda = 6.0\noffspring = [0.5, 0.0, 0.5]\nstart_x = 1.0\n"
        )
        out = tmp_path / "out.json"
        code = main([
            "simulate", "--config", str(conf), "--T", "5", "--out", str(out),
            "--format", "json",
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["meta"]["config"]["horizon_T"] == 5.0
        assert doc["meta"]["config"]["seed"] == 4

    def test_json_config(self, tmp_path):
        conf = tmp_path / "run.json"
        conf.write_text(json.dumps({
            "model": {"lambda": 2.0, "offspring": [1.0], "start_x": 0.5},
            "T": 5.0, "n": 100, "seed": 7,
        }))
        assert main(["simulate", "--config", str(conf)]) == 0


class TestSolvePde:
    def test_profile_matches_closed_form(self, tmp_path):
        path = tmp_path / "pde.csv"
        code = main([
            "solve-pde", "--lambda", "6", "--coeffs", "0.5,0,0.5",
            "--ic", "one", "--T", "100", "--dx", "0.05", "--out", str(path),
        ])
        assert code == 0
        meta, xs, us = output.read_profile_csv(path)
        assert meta["ic"] == "one" and meta["scheme"] == "cn"
        win = xs <= 20.0
        assert np.max(np.abs(us[win] - bl.closed_form(6.0, xs[win]))) < 5e-3

    def test_steady_flag(self, tmp_path):
        path = tmp_path / "steady.csv"
        code = main([
            "solve-pde", "--lambda", "6", "--coeffs", "0.5,0,0.5",
            "--ic", "zero", "--steady", "--dx", "0.05", "--out", str(path),
        ])
        assert code == 0
        meta, _, _ = output.read_profile_csv(path)
        assert meta["converged"] is True

    def test_instability_exit_3(self, capsys):
        # dt far above the reaction stability limit blows up the transient
        code = main([
            "solve-pde", "--lambda", "40", "--coeffs", "0,0,0,0,1",
            "--ic", "one", "--T", "50", "--dx", "0.5", "--dt", "0.9",
            "--scheme", "cn",
        ])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err


class TestSolveOde:
    def test_header_carries_slope(self, tmp_path):
        path = tmp_path / "ode.csv"
        code = main([
            "solve-ode", "--lambda", "6", "--coeffs", "0.5,0,0.5",
            "--out", str(path),
        ])
        assert code == 0
        meta, xs, us = output.read_profile_csv(path)
        assert meta["slope0"] == pytest.approx(2.0, abs=1e-4)
        assert meta["converged"] is True

    def test_no_bracket_exit_3(self, capsys):
        code = main(["solve-ode", "--lambda", "6", "--coeffs", "0,1"])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err


class TestCompare:
    def test_binary_model_agrees(self, tmp_path, capsys):
        out = tmp_path / "cmp.csv"
        code = main([
            "compare", "--lambda", "6", "--coeffs", "0.5,0,0.5",
            "--x", "0.5,1", "--T", "20", "--n", "2000", "--seed", "1",
            "--dx", "0.05", "--out", str(out),
        ])
        printed = capsys.readouterr().out
        assert code == 0
        assert "max pairwise discrepancy" in printed
        lines = out.read_text().splitlines()
        assert lines[1].startswith("x,p_lower,p_upper")

    def test_supercritical_disagrees(self, capsys):
        code = main([
            "compare", "--lambda", "6", "--coeffs", "0.25,0,0.75",
            "--x", "1", "--T", "10", "--n", "400", "--seed", "1",
            "--dx", "0.05", "--max-particles", "5000",
            "--max-events", "1000000",
        ])
        assert code == 1
        assert "DISAGREE" in capsys.readouterr().out

    def test_empty_query_points(self, capsys):
        code = main([
            "compare", "--lambda", "6", "--coeffs", "0.5,0,0.5", "--x", "",
        ])
        assert code == 0

    def test_missing_model_exit_2(self, capsys):
        assert main(["compare", "--x", "1"]) == 2
