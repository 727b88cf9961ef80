import json

import pytest

from shearmix import cli
from shearmix.evolve import load_snapshot


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


TWO_PLATEAU = {"kind": "piecewise_constant", "breakpoints": [0.0, 0.5],
               "values": [0.0, 1.0]}


class TestConfigValidation:
    def test_missing_file(self, tmp_path, capsys):
        status = cli.main(["bounds", "--config", str(tmp_path / "nope.json"),
                           "--out", str(tmp_path / "out")])
        assert status == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        status = cli.main(["bounds", "--config", str(path), "--out", str(tmp_path / "o")])
        assert status == cli.EXIT_CONFIG
        assert not (tmp_path / "o" / "manifest.json").exists()

    def test_unknown_top_level_key(self, tmp_path):
        cfg = write_config(tmp_path, {"task": "bounds", "velocity": TWO_PLATEAU,
                                      "mystery": 1})
        assert cli.main(["bounds", "--config", cfg]) == cli.EXIT_CONFIG

    def test_unknown_param_key(self, tmp_path):
        cfg = write_config(tmp_path, {"task": "bounds", "velocity": TWO_PLATEAU,
                                      "params": {"grid_m": 9}})
        assert cli.main(["bounds", "--config", cfg]) == cli.EXIT_CONFIG

    def test_bad_velocity(self, tmp_path):
        cfg = write_config(tmp_path, {"task": "bounds",
                                      "velocity": {"kind": "mystery"}})
        assert cli.main(["bounds", "--config", cfg]) == cli.EXIT_CONFIG

    def test_task_mismatch(self, tmp_path):
        cfg = write_config(tmp_path, {"task": "bounds", "velocity": TWO_PLATEAU})
        assert cli.main(["spectrum", "--config", cfg]) == cli.EXIT_CONFIG


class TestBoundsTask:
    def test_two_plateau_golden(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, {
            "task": "bounds", "velocity": TWO_PLATEAU,
            "params": {"grid_n": 128, "j_points": 17},
        })
        assert cli.main(["bounds", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
        bounds = json.loads((out / "bounds.json").read_text())
        assert bounds["plateau_time"] == pytest.approx(1.4375, abs=1e-12)
        manifest = json.loads((out / "manifest.json").read_text())
        names = [a["name"] for a in manifest["artifacts"]]
        assert "bounds.json" in names

    def test_manifest_digests_reproducible(self, tmp_path):
        digests = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            cfg = write_config(tmp_path, {
                "task": "bounds", "velocity": TWO_PLATEAU,
                "params": {"grid_n": 64, "j_points": 9},
            }, name=f"cfg-{tag}.json")
            assert cli.main(["bounds", "--config", cfg, "--out", str(out)]) == 0
            manifest = json.loads((out / "manifest.json").read_text())
            digests.append(manifest["artifacts"][0]["sha256"])
        assert digests[0] == digests[1]


class TestSpectrumTask:
    def test_sweep_artifacts(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, {
            "task": "spectrum", "velocity": TWO_PLATEAU,
            "params": {"k": 1, "n": 48, "s_points": 64},
        })
        assert cli.main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "spectral_summary.json").read_text())
        assert summary["r_lambda1"] > 0.0
        sweep = (out / "sweep.csv").read_text().splitlines()
        assert sweep[0] == "s,sigma_min"
        assert len(sweep) == 65


class TestEvolveTask:
    def test_decay_and_snapshots(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, {
            "task": "evolve", "velocity": {"kind": "sine", "amplitude": 1.0,
                                           "frequency": 1, "phase": 1.5707963267948966},
            "params": {"t_end": 2.0, "samples": 5, "nx": 32, "ny": 9,
                       "initial": "cos_y", "snapshots": 2},
        })
        assert cli.main(["evolve", "--config", cfg, "--out", str(out)]) == 0
        rows = (out / "decay.csv").read_text().strip().splitlines()
        assert len(rows) == 6
        assert all(r.rsplit(",", 1)[1] == "0" for r in rows[1:])
        data, sidecar = load_snapshot(out / "field-001.f64")
        assert data.shape == tuple(sidecar["shape"]) == (32, 9)


class TestSimulateTask:
    def test_histogram_artifacts(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, {
            "task": "simulate", "velocity": TWO_PLATEAU, "seed": 5,
            "params": {"start": [0.25, 0.25], "t_end": 0.25, "dt": 0.01,
                       "n_paths": 2000, "bins": 8},
        })
        assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        meta = json.loads((out / "histogram-meta.json").read_text())
        assert meta["seed"] == 5
        assert meta["velocity"]["kind"] == "piecewise_constant"
        rows = (out / "histogram.csv").read_text().strip().splitlines()[1:]
        assert sum(int(r.split(",")[2]) for r in rows) == 2000

    def test_seed_override_changes_output(self, tmp_path):
        outs = []
        for seed in (1, 2):
            out = tmp_path / f"out{seed}"
            cfg = write_config(tmp_path, {
                "task": "simulate", "velocity": TWO_PLATEAU,
                "params": {"start": [0.25, 0.25], "t_end": 0.25, "dt": 0.01,
                           "n_paths": 1000, "bins": 4},
            }, name=f"c{seed}.json")
            assert cli.main(["simulate", "--config", cfg, "--out", str(out),
                             "--seed", str(seed)]) == 0
            outs.append((out / "histogram.csv").read_text())
        assert outs[0] != outs[1]


class TestValidateTask:
    def test_subset_writes_table(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, {"task": "validate",
                                      "params": {"criteria": [1, 2]}})
        status = cli.main(["validate", "--config", cfg, "--out", str(out)])
        assert status == cli.EXIT_OK
        text = (out / "validation.txt").read_text()
        assert "criterion  1" in text and "criterion  2" in text
        payload = json.loads((out / "validation.json").read_text())
        assert all(entry["passed"] for entry in payload)
        assert "[PASS]" in capsys.readouterr().out


class TestReportTask:
    def test_empty_inputs_warns(self, tmp_path, capsys):
        out = tmp_path / "empty"
        status = cli.main(["report", "--out", str(out)])
        assert status == cli.EXIT_OK
        assert "warning" in capsys.readouterr().out

    def test_summarizes_bounds_and_spectrum(self, tmp_path):
        out = tmp_path / "out"
        for task, params in (("bounds", {"grid_n": 64, "j_points": 9}),
                             ("spectrum", {"k": 1, "n": 48, "s_points": 64})):
            cfg = write_config(tmp_path, {"task": task, "velocity": TWO_PLATEAU,
                                          "params": params}, name=f"{task}.json")
            assert cli.main([task, "--config", cfg, "--out", str(out)]) == 0
        assert cli.main(["report", "--out", str(out)]) == 0
        text = (out / "report.txt").read_text()
        assert "gap >= correlation bound: PASS" in text
