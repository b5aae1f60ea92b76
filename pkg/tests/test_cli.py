"""Command-line interface: outputs, files and exit codes."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mmwpt.cli import _workers, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def keyvals(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--config", "paper-table1", "--freq", "1e7", "--bogus"])
        assert exc.value.code == 2

    def test_missing_config(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--freq", "1e7"])
        assert exc.value.code == 2

    def test_bad_config_file(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"couplings": {"mode": "matrix", "pairs": []}}))
        code, _, err = run(capsys, "simulate", "--config", str(bad), "--freq", "1e7")
        assert code == 1
        assert err.startswith("mmwpt: error: ConfigError: ")

    def test_bad_unit_in_flag(self, capsys):
        code, _, err = run(capsys, "simulate", "--config", "paper-table1", "--freq", "10 uH")
        assert code == 1 and "--freq" in err

    def test_bad_env_workers(self, capsys, monkeypatch):
        monkeypatch.setenv("WPT_SIM_WORKERS", "lots")
        code, _, err = run(capsys, "tune-cap", "--config", "paper-table1", "--target", "13.56e6")
        assert code == 2 and "WPT_SIM_WORKERS" in err

    def test_model_error(self, capsys):
        code, _, err = run(capsys, "sweep-distance", "--config", "two-coil-demo")
        assert code == 1 and "ModelValidationError" in err

    def test_infeasible_target(self, capsys):
        code, _, err = run(capsys, "tune-cap", "--config", "paper-table1", "--target", "0 Hz")
        assert code == 1 and "InfeasibleTargetError" in err

    def test_module_entry(self):
        proc = subprocess.run([sys.executable, "-m", "mmwpt", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.startswith("mmwpt ")


class TestSimulate:
    def test_fields(self, capsys):
        code, out, _ = run(capsys, "simulate", "--config", "paper-table1", "--freq", "12.583 MHz")
        assert code == 0
        doc = json.loads(out)
        assert len(doc["currents"]) == 13
        s21 = complex(float(doc["s21"]["re"]), float(doc["s21"]["im"]))
        np.testing.assert_allclose(float(doc["pte_percent"]), 100 * abs(s21) ** 2, rtol=1e-12)
        assert doc["closed_form_gain"] is not None

    def test_two_coil_has_no_closed_form(self, capsys):
        _, out, _ = run(capsys, "simulate", "--config", "two-coil-demo", "--freq", "1e7")
        assert json.loads(out)["closed_form_gain"] is None


class TestSweeps:
    def test_frequency_rows(self, capsys, tmp_path):
        out = tmp_path / "f.csv"
        code, _, _ = run(capsys, "sweep-frequency", "--config", "paper-table1", "--fmin", "10e6", "--fmax", "15e6",
                         "--points", "801", "--out", str(out))
        assert code == 0
        rows = list(csv.reader(out.open()))
        assert len(rows) == 802
        f = np.array([float(r[1]) for r in rows[1:]])
        np.testing.assert_allclose(f[[0, -1]], [10e6, 15e6])

    def test_json_written(self, capsys, tmp_path):
        js = tmp_path / "f.json"
        run(capsys, "sweep-frequency", "--config", "two-coil-demo", "--points", "11", "--out", "-", "--json", str(js))
        doc = json.loads(js.read_text())
        assert len(doc["frequencies_hz"]) == 11

    def test_distance_summary(self, capsys, tmp_path):
        summary = tmp_path / "s.csv"
        code, out, _ = run(capsys, "sweep-distance", "--config", "paper-table1-tuned", "--distances", "100mm,200mm",
                           "--points", "101", "--out", str(tmp_path / "d.csv"), "--summary", str(summary))
        assert code == 0
        assert summary.read_text() == out
        assert len(out.splitlines()) == 3

    def test_position_best(self, capsys, tmp_path):
        _, out, _ = run(capsys, "sweep-position", "--config", "paper-table1-tuned", "--positions", "100mm,200mm,300mm",
                        "--fmin", "12.3e6", "--fmax", "12.9e6", "--points", "301", "--out", str(tmp_path / "p.csv"))
        assert keyvals(out)["best_position_m"] == "0.20000000000000001"

    def test_dump_config(self):
        cfg = json.loads(subprocess.run([sys.executable, "-m", "mmwpt", "dump-config", "--config", "paper-table1"],
                                        capture_output=True, text=True, check=True).stdout)
        assert "resonators" in cfg


class TestCompareMM:
    def test_files(self, capsys, tmp_path):
        stem = tmp_path / "cmp.csv"
        code, out, _ = run(capsys, "compare-mm", "--config", "paper-table1-tuned", "--distances", "100mm,250mm",
                           "--points", "201", "--out", str(stem))
        assert code == 0
        for suffix in ("with", "without", "summary"):
            assert (tmp_path / f"cmp_{suffix}.csv").exists()
        assert (tmp_path / "cmp_summary.csv").read_text() == out
        rows = list(csv.DictReader(out.splitlines()))
        assert all(float(r["peak_pte_with_mm"]) > float(r["peak_pte_without_mm"]) for r in rows)


class TestTopologies:
    def test_three_rows(self, capsys):
        code, out, _ = run(capsys, "compare-topologies", "--config", "two-coil-demo", "--out", "/dev/null")
        assert code == 0
        rows = list(csv.DictReader(out.splitlines()))
        assert [r["topology"] for r in rows] == ["two_coil", "four_coil", "clc"]


class TestTuning:
    def test_tune_cap(self, capsys):
        code, out, _ = run(capsys, "tune-cap", "--config", "paper-table1", "--target", "13.56e6")
        assert code == 0
        np.testing.assert_allclose(float(keyvals(out)["c_total_pF"]), 92.45, rtol=1e-3)

    def test_inductance_override(self, capsys):
        _, out, _ = run(capsys, "tune-cap", "--config", "paper-table1", "--target", "13.56e6", "--inductance", "1 uH")
        np.testing.assert_allclose(float(keyvals(out)["c_total_pF"]), 1e12 / (2 * np.pi * 13.56e6) ** 2 / 1e-6,
                                   rtol=1e-12)

    def test_optimize_position(self, capsys):
        _, out, _ = run(capsys, "optimize-position", "--config", "paper-table1-tuned", "--bounds", "20mm,380mm",
                        "--fmin", "12.3e6", "--fmax", "12.9e6", "--points", "301")
        kv = keyvals(out)
        assert abs(float(kv["position_m"]) - 0.2) < 0.0036
        assert kv["converged"] == "true"

    def test_bad_bounds(self, capsys):
        code, _, _ = run(capsys, "optimize-position", "--config", "paper-table1-tuned", "--bounds", "20mm")
        assert code == 2

    def test_match_check(self, capsys):
        _, out, _ = run(capsys, "match-check", "--config", "clc-demo")
        kv = keyvals(out)
        assert float(kv["s11_mag"]) < 1e-9 and kv["matched"] == "true"


class TestWorkers:
    def test_env_honored(self, capsys, monkeypatch, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "sweep-frequency", "--config", "paper-table1", "--points", "64", "--out", str(a))
        monkeypatch.setenv("WPT_SIM_WORKERS", "4")
        assert _workers(None) == 4 and _workers(2) == 2
        code, _, _ = run(capsys, "sweep-frequency", "--config", "paper-table1", "--points", "64", "--out", str(b))
        assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_workers_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["sweep-frequency", "--config", "paper-table1", "--workers", "0"])
        assert exc.value.code == 2
