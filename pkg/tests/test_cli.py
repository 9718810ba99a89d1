import json

import pytest

from fltop import cli, compression


def base_config(tmp_path, **overrides):
    cfg = {
        "scheme": "fl-top",
        "output_dir": str(tmp_path / "out"),
        "dataset": {"type": "synthetic", "n_samples": 1200, "n_features": 16,
                    "positive_rate": 0.5, "seed": 5, "separation": 3.0,
                    "public_size": 16},
        "model": {"hidden": [32], "loss": "cross_entropy"},
        "federation": {"n_clients": 40, "sampling_fraction": 0.25, "rounds": 3,
                       "local_steps": 5, "batch_size": 8, "learning_rate": 0.3,
                       "ratio": 0.1, "sigma": 1.54, "clip": 1.0},
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


class TestRun:
    def test_outputs_written(self, tmp_path, capsys):
        path, cfg = base_config(tmp_path)
        assert cli.main(["run", str(path)]) == 0
        out = tmp_path / "out"
        trace = (out / "trace.csv").read_text().rstrip().split("\n")
        assert len(trace) == 1 + cfg["federation"]["rounds"]
        header = trace[0].split(",")
        for col in ("round", "down_kb", "up_kb", "epsilon"):
            assert col in header
        summary = json.loads((out / "summary.json").read_text())
        assert summary["rounds"] == 3
        assert "best" in capsys.readouterr().out

    def test_resolved_config_reproduces_run(self, tmp_path):
        path, _ = base_config(tmp_path)
        assert cli.main(["run", str(path)]) == 0
        first = (tmp_path / "out" / "trace.csv").read_bytes()
        resolved = tmp_path / "out" / "resolved_config.json"
        assert cli.main(["run", str(resolved),
                         "--output-dir", str(tmp_path / "again")]) == 0
        second = (tmp_path / "again" / "trace.csv").read_bytes()
        assert first == second

    def test_dp_scheme_round_trip(self, tmp_path):
        path, _ = base_config(tmp_path, scheme="fl-top-dp")
        assert cli.main(["run", str(path)]) == 0
        trace = (tmp_path / "out" / "trace.csv").read_text().rstrip().split("\n")
        eps_col = trace[0].split(",").index("epsilon")
        eps = [float(r.split(",")[eps_col]) for r in trace[1:]]
        assert eps == sorted(eps) and eps[0] > 0

    def test_calibrated_clip_made_explicit(self, tmp_path):
        path, cfg = base_config(tmp_path)
        cfg["federation"]["clip"] = "calibrate"
        path.write_text(json.dumps(cfg))
        assert cli.main(["run", str(path)]) == 0
        resolved = json.loads(
            (tmp_path / "out" / "resolved_config.json").read_text())
        assert isinstance(resolved["federation"]["clip"], float)
        assert resolved["federation"]["clip"] > 0


class TestErrors:
    def test_unknown_scheme_exit_2(self, tmp_path, capsys):
        path, _ = base_config(tmp_path, scheme="fl-nope")
        assert cli.main(["run", str(path)]) == 2
        assert "fl-nope" in capsys.readouterr().err

    def test_missing_section_exit_2(self, tmp_path, capsys):
        path, cfg = base_config(tmp_path)
        del cfg["federation"]
        path.write_text(json.dumps(cfg))
        assert cli.main(["run", str(path)]) == 2

    def test_invalid_json_exit_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli.main(["run", str(path)]) == 2

    def test_missing_file_exit_2(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "absent.json")]) == 2

    def test_bad_flag_exit_2(self):
        assert cli.main(["accountant", "--sigma", "1.5"]) == 2


class TestAccountant:
    def test_output_format_and_value(self, capsys):
        assert cli.main(["accountant", "--sigma", "1.54",
                         "--sampling", str(1 / 60), "--rounds", "200"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("epsilon = ")
        assert "lambda*" in out
        eps = float(out.split()[2])
        assert eps == pytest.approx(1.0, abs=0.05)

    def test_second_regime(self, capsys):
        assert cli.main(["accountant", "--sigma", "1.49",
                         "--sampling", "0.019960079840319361",
                         "--rounds", "62"]) == 0
        eps = float(capsys.readouterr().out.split()[2])
        assert eps == pytest.approx(0.91, abs=0.05)


class TestSweep:
    def test_sweep_rows_and_duplicate_warning(self, tmp_path, capsys):
        path, _ = base_config(tmp_path)
        assert cli.main(["sweep", str(path),
                         "--ratios", "0.05,0.1,0.05"]) == 0
        captured = capsys.readouterr()
        assert "duplicate" in captured.err
        rows = (tmp_path / "out" / "sweep.csv").read_text().rstrip().split("\n")
        assert len(rows) == 3  # header + two distinct ratios
        assert rows[1].startswith("0.05,fl-top,")
        assert rows[2].startswith("0.1,fl-top,")

    def test_empty_ratio_list_exit_2(self, tmp_path):
        path, _ = base_config(tmp_path)
        assert cli.main(["sweep", str(path), "--ratios", " , "]) == 2


class TestCalibrate:
    def test_prints_positive_threshold(self, tmp_path, capsys):
        path, _ = base_config(tmp_path)
        assert cli.main(["calibrate", str(path)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("S = ")
        assert float(out.split()[2]) > 0


class TestSelectTopk:
    def test_index_file_round_trip(self, tmp_path, capsys):
        path, cfg = base_config(tmp_path)
        out_file = tmp_path / "indices.txt"
        assert cli.main(["select-topk", str(path), "--out", str(out_file)]) == 0
        n = 16 * 32 + 32 + 32 * 2 + 2
        iset = compression.load_index_set(str(out_file), n)
        assert iset.n == n
        assert iset.k == round(cfg["federation"]["ratio"] * n)
        assert "wrote" in capsys.readouterr().out
