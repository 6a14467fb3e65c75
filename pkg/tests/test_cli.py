"""Command-line interface."""

import csv
import json

import pytest

from indoorq.cli import main


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps({"n_objects": 8, "duration": 90, "warmup": 30, "n_windows": 3,
                                "n_timestamps": 3, "k": [1, 2], "seeds": [5]}))
    return path


@pytest.fixture(scope="module")
def simulated(tmp_path_factory, small_config):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--config", str(small_config), "--out", str(out)]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestSimulate:
    def test_files(self, simulated):
        traces = read_csv(simulated / "traces.csv")
        assert len(traces) == 8 * 91
        readings = read_csv(simulated / "readings.csv")
        assert readings and set(readings[0]) == {"timestamp", "object_id", "reader_id"}
        assert json.loads((simulated / "config.json").read_text())["seeds"] == [5]

    def test_seed_override(self, tmp_path, small_config, simulated):
        assert main(["simulate", "--config", str(small_config), "--seed", "6", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "readings.csv").read_bytes() != (simulated / "readings.csv").read_bytes()


class TestReplay:
    def test_index_dumps(self, tmp_path, simulated, small_config):
        rc = main(["replay", "--config", str(small_config), "--readings", str(simulated / "readings.csv"),
                   "--at", "40", "--at", "80", "--backend", "all", "--out", str(tmp_path)])
        assert rc == 0
        for b in ("pf", "kf", "uniform"):
            for t in (40, 80):
                rows = read_csv(tmp_path / f"index_{b}_t{t}.csv")
                assert rows
                mass = {}
                for r in rows:
                    mass[r["object_id"]] = mass.get(r["object_id"], 0.0) + float(r["probability"])
                assert all(m == pytest.approx(1.0, abs=1e-6) for m in mass.values())


class TestQuery:
    def test_stdout(self, capsys, simulated, small_config):
        rc = main(["query", "--config", str(small_config), "--readings", str(simulated / "readings.csv"),
                   "--at", "60", "--range", "0,0,80,40", "--knn", "20,10,2"])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "query_id,t,object_id,probability"
        ids = {line.split(",")[0] for line in lines[1:]}
        assert ids == {"r0", "k0"}
        knn_mass = sum(float(line.split(",")[3]) for line in lines[1:] if line.startswith("k0"))
        assert knn_mass >= 2 - 1e-9

    def test_out_dir(self, tmp_path, simulated, small_config):
        rc = main(["query", "--config", str(small_config), "--readings", str(simulated / "readings.csv"),
                   "--backend", "kf", "--knn", "50,30,1", "--out", str(tmp_path)])
        assert rc == 0
        rows = read_csv(tmp_path / "results_kf.csv")
        assert rows and {r["query_id"] for r in rows} == {"k0"}

    def test_needs_a_query(self, capsys, simulated):
        assert main(["query", "--readings", str(simulated / "readings.csv")]) == 2
        assert "error" in capsys.readouterr().err


class TestExperiment:
    def test_metrics_written_and_deterministic(self, tmp_path, small_config):
        for name in ("a", "b"):
            assert main(["experiment", "--config", str(small_config), "--out", str(tmp_path / name)]) == 0
        a = (tmp_path / "a" / "metrics.csv").read_bytes()
        assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
        rows = read_csv(tmp_path / "a" / "metrics.csv")
        assert {r["backend"] for r in rows} == {"pf", "kf", "uniform"}
        assert {r["metric"] for r in rows} == {"cover_divergence", "hit_rate@k=1", "hit_rate@k=2"}
        assert (tmp_path / "a" / "runtime.csv").exists()

    def test_backend_override(self, tmp_path, small_config):
        assert main(["experiment", "--config", str(small_config), "--backend", "uniform",
                     "--out", str(tmp_path)]) == 0
        assert {r["backend"] for r in read_csv(tmp_path / "metrics.csv")} == {"uniform"}


class TestErrors:
    def test_missing_readings_file(self, tmp_path):
        assert main(["replay", "--readings", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"p_detect": 2.0}))
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "p_detect" in capsys.readouterr().err

    def test_bad_plan(self, tmp_path):
        plan = tmp_path / "plan.json"
        plan.write_text("{broken")
        assert main(["simulate", "--plan", str(plan), "--out", str(tmp_path)]) == 2

    def test_malformed_range(self):
        with pytest.raises(SystemExit):
            main(["query", "--readings", "x.csv", "--range", "1,2,3"])

    def test_unknown_reader_in_readings(self, tmp_path, capsys):
        r = tmp_path / "r.csv"
        r.write_text("timestamp,object_id,reader_id\n1.0,1,99\n")
        assert main(["replay", "--readings", str(r), "--out", str(tmp_path)]) == 2
        assert "unknown reader" in capsys.readouterr().err
