import csv
import json

import numpy as np
import pytest

from ampc_l1.cli import EXIT_CONFIG, EXIT_OK, main
from ampc_l1.config import default_plant_path, load_config, parse_config
from ampc_l1.errors import ConfigError
from ampc_l1.simkit import LOG_COLUMNS, read_csv

SHORT = {"scenario": {"t_final": 2.0}}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({})
        assert cfg.plant_file == default_plant_path()
        assert (cfg.ampc.q, cfg.ampc.r, cfg.ampc.horizon) == (0.99, 0.001, 0.5)
        assert cfg.l1.cutoff_hz == 20.0 and cfg.l1.sample_time == 0.005
        assert cfg.case == "case1" and cfg.seed == 0
        assert cfg.analysis.monte_carlo.n_runs == 100

    def test_round_trip(self, tmp_path):
        doc = {"ampc": {"r": 0.01}, "scenario": {"case": "case3", "t_final": 5.0, "x0": [0.0, 1.0]},
               "analysis": {"monte_carlo": {"n_runs": 7}, "points": [5, 4]}, "seed": 11}
        cfg = parse_config(doc, tmp_path)
        again = parse_config(cfg.to_dict(), tmp_path)
        assert again == cfg
        assert again.scenario().x0 == (0.0, 1.0) and again.analysis.monte_carlo.seed == 11

    @pytest.mark.parametrize("doc", [
        {"bogus": 1},
        {"ampc": {"qq": 1.0}},
        {"scenario": {"color": "red"}},
        {"scenario": {"case": "case9"}},
        {"analysis": {"tdm": {"resolution": 1e-3, "nope": 0}}},
        {"analysis": {"monte_carlo": {"seed": 3}}},
        {"seed": -1},
        {"ampc": {"horizon": 0.0}},
        {"vehicle": {"plant_file": "missing.json"}},
    ])
    def test_rejected(self, doc, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(doc, tmp_path)

    def test_missing_file_names_path(self, tmp_path):
        path = tmp_path / "nope.json"
        with pytest.raises(ConfigError, match="nope.json"):
            load_config(path)

    def test_relative_paths_follow_config_folder(self, tmp_path):
        cfg = load_config(write_config(tmp_path, {"output_dir": "out"}))
        assert cfg.output_dir == tmp_path / "out"


class TestCli:
    def test_missing_config_exit_code(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG
        assert "absent.json" in capsys.readouterr().err

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as info:
            main(["run", "case7"])
        assert info.value.code == EXIT_CONFIG

    def test_run_writes_logs_and_summary(self, tmp_path):
        cfg = write_config(tmp_path, {"scenario": {"case": "case2", "t_final": 2.0}})
        out = tmp_path / "res"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["runs"]) == {"ampc", "ampc-l1"} and summary["case"] == "case2"
        for kind in ("ampc", "ampc-l1"):
            with open(out / f"case2_{kind}.csv", newline="") as fh:
                header = next(csv.reader(fh))
            assert header == list(LOG_COLUMNS)
            assert summary["runs"][kind]["am_max_real"] < 0

    def test_echoed_config_reruns_identically(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        cfg = write_config(tmp_path, {**SHORT, "ampc": {"r": 0.002}})
        assert main(["run", "case4", "--config", str(cfg), "--out", str(first), "--controller", "ampc-l1"]) == 0
        echoed = json.loads((first / "case4_ampc-l1.json").read_text())["config"]
        echoed["output_dir"] = str(second)
        cfg2 = write_config(tmp_path, echoed, "echo.json")
        assert main(["run", "case4", "--config", str(cfg2), "--controller", "ampc-l1"]) == 0
        a, b = read_csv(first / "case4_ampc-l1.csv"), read_csv(second / "case4_ampc-l1.csv")
        for name in LOG_COLUMNS:
            assert np.array_equal(a[name], b[name])

    def test_validate_config_prints_effective_form(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"ampc": {"r": 0.005}})
        assert main(["validate-config", "--config", str(cfg), "--seed", "4"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["ampc"]["r"] == 0.005 and doc["seed"] == 4

    def test_montecarlo_is_reproducible(self, tmp_path):
        cfg = write_config(tmp_path, SHORT)
        for name in ("a", "b"):
            assert main(["montecarlo", "--config", str(cfg), "--runs", "3", "--seed", "5",
                         "--out", str(tmp_path / name)]) == EXIT_OK
        a = (tmp_path / "a" / "montecarlo_runs.csv").read_text()
        assert a == (tmp_path / "b" / "montecarlo_runs.csv").read_text()
        assert len(a.strip().splitlines()) == 4
        manifest = json.loads((tmp_path / "a" / "montecarlo.json").read_text())
        assert manifest["seed"] == 5

    def test_montecarlo_rejects_zero_runs(self, tmp_path):
        assert main(["montecarlo", "--runs", "0", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_bench_rows(self, tmp_path):
        assert main(["bench", "--out", str(tmp_path)]) == EXIT_OK
        with open(tmp_path / "bench.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert [r[0] for r in rows[1:]] == ["refmpc-10", "refmpc-5", "ampc", "ampc-l1"]

    def test_tdm_and_margins_on_selected_points(self, tmp_path):
        assert main(["tdm", "--points", "2", "--controller", "ampc-l1", "--out", str(tmp_path)]) == EXIT_OK
        with open(tmp_path / "tdm.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["mach", "altitude_m", "time_s", "tdm_ampc-l1_ms"] and len(rows) == 2
        assert 0 < float(rows[1][3]) < 100
        assert main(["margins", "--points", "5,1", "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "margins.json").read_text())
        pms = {p["mach"]: p["phase_margin_deg"] for p in doc["margins"]}
        assert pms[1.0] is None and pms[5.0] > 0

    def test_unknown_point_is_config_error(self, tmp_path):
        assert main(["margins", "--points", "9", "--out", str(tmp_path)]) == EXIT_CONFIG
