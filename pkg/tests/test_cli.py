"""End-to-end command-line tests driven through main()."""

import json

import numpy as np
import pytest

from lgm.cli import build_parser, main


def write_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def tiny_run_config(tmp_path, **overrides):
    raw = {
        "model": "regression",
        "simulate": {"n": 10, "sigma2": 0.5, "seed": 1},
        "samplers": ["mgrad", "pcn"],
        "seeds": [0],
        "burn_in": 150,
        "collect": 120,
        "out": str(tmp_path / "results"),
    }
    raw.update(overrides)
    return write_json(tmp_path / "config.json", raw)


class TestParser:
    def test_subcommands_registered(self):
        parser = build_parser()
        args = parser.parse_args(["run", "c.json", "--threads", "2"])
        assert args.command == "run" and args.threads == 2
        args = parser.parse_args(["simulate", "s.json", "--seed", "7"])
        assert args.command == "simulate" and args.seed == 7
        assert parser.parse_args(["validate"]).command == "validate"
        assert parser.parse_args(["tune", "c.json"]).command == "tune"
        assert parser.parse_args(["downsample", "x.csv"]).command == "downsample"

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestSimulateCommand:
    def test_writes_data_and_manifest(self, tmp_path, capsys):
        spec = write_json(
            tmp_path / "spec.json",
            {"model": "cox", "side": 6, "seed": 3, "out": str(tmp_path / "data")},
        )
        assert main(["simulate", str(spec)]) == 0
        out = capsys.readouterr().out
        assert "wrote" in out
        counts = np.loadtxt(tmp_path / "data" / "data.csv", delimiter=",")
        assert counts.shape == (6, 6)
        manifest = json.loads((tmp_path / "data" / "data.manifest.json").read_text())
        assert manifest["side"] == 6

    def test_seed_and_out_flags_override_spec(self, tmp_path):
        spec = write_json(tmp_path / "spec.json", {"model": "regression", "n": 15, "seed": 1})
        out_dir = tmp_path / "override"
        assert main(["simulate", str(spec), "--seed", "9", "--out", str(out_dir)]) == 0
        manifest = json.loads((out_dir / "data.manifest.json").read_text())
        assert manifest["seed"] == 9

    def test_missing_model_is_config_error(self, tmp_path):
        spec = write_json(tmp_path / "spec.json", {"n": 10})
        assert main(["simulate", str(spec)]) == 2

    def test_missing_spec_file_is_io_error(self, tmp_path):
        assert main(["simulate", str(tmp_path / "absent.json")]) == 1


class TestRunCommand:
    def test_end_to_end_writes_outputs(self, tmp_path, capsys):
        config = tiny_run_config(tmp_path)
        assert main(["run", str(config), "--threads", "1"]) == 0
        out = capsys.readouterr().out
        assert "determinism digest:" in out
        assert "mGrad" in out
        results = tmp_path / "results"
        assert (results / "runs.csv").exists()
        assert (results / "summary.csv").exists()
        payload = json.loads((results / "summary.json").read_text())
        assert len(payload["reports"]) == 2

    def test_trace_flag_persists_samples(self, tmp_path):
        config = tiny_run_config(tmp_path)
        assert main(["run", str(config), "--threads", "1", "--trace"]) == 0
        traces = sorted((tmp_path / "results").glob("trace_*.csv"))
        assert len(traces) == 2
        assert np.loadtxt(traces[0], delimiter=",").shape == (120, 10)

    def test_config_error_exit_code(self, tmp_path):
        config = tiny_run_config(tmp_path, burn_in=3)
        assert main(["run", str(config)]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.json")]) == 1


class TestTuneCommand:
    def test_prints_deltas_and_writes_csv(self, tmp_path, capsys):
        config = tiny_run_config(tmp_path, samplers=["mgrad"], burn_in=400)
        out_dir = tmp_path / "tuned"
        assert main(["tune", str(config), "--out", str(out_dir)]) == 0
        out = capsys.readouterr().out
        assert "delta=" in out and "acceptance=" in out
        lines = (out_dir / "tuning.csv").read_text().splitlines()
        assert lines[0] == "method,seed,delta,acceptance_rate,warning"
        assert lines[1].startswith("mgrad,0,")


class TestValidateCommand:
    def test_all_checks_pass(self, capsys):
        assert main(["validate"]) == 0
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert all(line.startswith("PASS") for line in lines[:-1])
        total = lines[-1]
        passed, ran = total.split()[0].split("/")
        assert passed == ran
        assert int(ran) >= 50

    def test_csv_output(self, tmp_path, capsys):
        out_dir = tmp_path / "val"
        assert main(["validate", "--out", str(out_dir)]) == 0
        capsys.readouterr()
        lines = (out_dir / "validation.csv").read_text().splitlines()
        assert lines[0] == "name,passed,residual,tolerance"
        assert all(",True," in line for line in lines[1:])


class TestDownsampleCommand:
    def test_merges_and_updates_manifest(self, tmp_path, capsys):
        counts = np.arange(16.0).reshape(4, 4)
        src = tmp_path / "counts.csv"
        np.savetxt(src, counts, fmt="%d", delimiter=",")
        write_json(
            tmp_path / "counts.manifest.json",
            {"side": 4, "cell_area": 1 / 16, "scale_divisor": 4.0},
        )
        assert main(["downsample", str(src)]) == 0
        assert "wrote" in capsys.readouterr().out

        merged = np.loadtxt(tmp_path / "counts_down.csv", delimiter=",")
        assert merged.shape == (2, 2)
        assert merged.sum() == counts.sum()
        manifest = json.loads((tmp_path / "counts_down.manifest.json").read_text())
        assert manifest["side"] == 2
        assert manifest["cell_area"] == pytest.approx(4 / 16)
        assert manifest["scale_divisor"] == pytest.approx(2.0)

    def test_odd_grid_rejected(self, tmp_path):
        src = tmp_path / "bad.csv"
        np.savetxt(src, np.zeros((3, 3)), fmt="%d", delimiter=",")
        assert main(["downsample", str(src)]) == 1

    def test_out_flag_redirects(self, tmp_path):
        src = tmp_path / "counts.csv"
        np.savetxt(src, np.zeros((4, 4)), fmt="%d", delimiter=",")
        dest = tmp_path / "elsewhere"
        assert main(["downsample", str(src), "--out", str(dest)]) == 0
        assert (dest / "counts_down.csv").exists()
