import json
import subprocess
import sys

import numpy as np
import pytest

from hessprec.cli import _parse_set_args, main
from hessprec.data import read_dataset, write_dataset
from hessprec.harness import ConfigError
from hessprec.inference import load_posterior
from hessprec.precond import precond_from_dict

SMALL = [
    "--set", "problem.n_samples=400",
    "--set", "problem.input_dim=4",
    "--set", "problem.n_features=12",
    "--set", "solver.iterations=6",
    "--set", "solver.init_samples=3",
    "--set", "solver.rank=6",
    "--batch-size", "64",
]


class TestSetParsing:
    def test_nested_keys_and_json_values(self):
        out = _parse_set_args(["problem.noise=0.2", "lr=0.5",
                               "problem.scales=[1.0,0.5]", "optimizer=sgd"])
        assert out == {"problem": {"noise": 0.2, "scales": [1.0, 0.5]},
                       "lr": 0.5, "optimizer": "sgd"}

    def test_bare_strings_pass_through(self):
        assert _parse_set_args(["optimizer=precond_sgd"]) == {
            "optimizer": "precond_sgd"}

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="key=value"):
            _parse_set_args(["loose"])

    def test_scalar_then_nested_conflict(self):
        with pytest.raises(ConfigError, match="conflicts"):
            _parse_set_args(["problem=3", "problem.noise=0.1"])


class TestGenData:
    def test_regression_default_feature_clamp(self, tmp_path, capsys):
        out = tmp_path / "reg.csv"
        rc = main(["gen-data", "--kind", "regression", "--out", str(out),
                   "--n-samples", "50", "--input-dim", "3"])
        assert rc == 0
        X, y = read_dataset(out)
        assert X.shape == (50, 3) and y.shape == (50,)
        assert "50 samples x 3 features" in capsys.readouterr().out

    def test_blobs(self, tmp_path):
        out = tmp_path / "blobs.csv"
        rc = main(["gen-data", "--kind", "blobs", "--out", str(out),
                   "--n-samples", "60", "--input-dim", "5",
                   "--n-classes", "4", "--seed", "2"])
        assert rc == 0
        X, labels = read_dataset(out)
        assert X.shape == (60, 5)
        assert set(labels.astype(int)) <= set(range(4))

    def test_classification(self, tmp_path):
        out = tmp_path / "cls.csv"
        rc = main(["gen-data", "--kind", "classification", "--out", str(out),
                   "--n-samples", "40", "--input-dim", "6"])
        assert rc == 0
        _, labels = read_dataset(out)
        assert set(labels) == {-1.0, 1.0}

    def test_unknown_kind_is_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["gen-data", "--kind", "spirals", "--out",
                  str(tmp_path / "x.csv"), "--n-samples", "10"])
        capsys.readouterr()


class TestEstimate:
    def test_prints_parameter_json(self, capsys):
        rc = main(["estimate", *SMALL])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["mode"] == "full"
        assert payload["b0"] > 0 and payload["w0"] > 0 and payload["lam0"] >= 0
        assert payload["grad_norm"] > 0
        assert payload["n"] == 12
        assert payload["data_read"] == 3 * 64

    def test_scalar_mode(self, capsys):
        rc = main(["estimate", *SMALL, "--set", "solver.mode=scalar"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["mode"] == "scalar"

    def test_zero_gradient_is_numerical_failure(self, tmp_path, capsys):
        data = tmp_path / "flat.csv"
        rng = np.random.default_rng(0)
        write_dataset(data, rng.standard_normal((100, 4)), np.zeros(100))
        rc = main(["estimate", "--set", f'problem.data="{data}"',
                   "--set", "problem.input_dim=4",
                   "--set", "problem.n_features=12",
                   "--set", "problem.test_fraction=0.0",
                   "--batch-size", "50"])
        assert rc == 2
        assert "numerical failure" in capsys.readouterr().err


class TestSolve:
    def test_writes_posterior_and_log(self, tmp_path, capsys):
        out = tmp_path / "post.json"
        log = tmp_path / "iters.csv"
        rc = main(["solve", *SMALL, "--out", str(out), "--log", str(log)])
        assert rc == 0
        post = load_posterior(out)
        assert post.n == 12 and post.m == 6
        lines = log.read_text().splitlines()
        assert lines[0] == "iteration,probe_norm,data_read,wall_ms"
        assert len(lines) == 7
        assert all(line.endswith(",0.0") for line in lines[1:])
        reads = [int(line.split(",")[2]) for line in lines[1:]]
        assert all(b - a == 64 for a, b in zip(reads, reads[1:]))
        capsys.readouterr()


class TestPrecond:
    def test_writes_loadable_preconditioner(self, tmp_path, capsys):
        out = tmp_path / "P.json"
        rc = main(["precond", *SMALL, "--out", str(out)])
        assert rc == 0
        with open(out) as fh:
            precond = precond_from_dict(json.load(fh))
        assert precond.spectral.n == 12
        assert 1 <= precond.spectral.k <= 6
        assert precond.alpha >= 1.0
        capsys.readouterr()


class TestRun:
    def run_args(self, out, extra=()):
        return ["run", *SMALL, "--optimizer", "sgd", "--lr", "0.05",
                "--steps", "12", "--out", str(out), *extra]

    def test_writes_curve(self, tmp_path, capsys):
        out = tmp_path / "run.csv"
        assert main(self.run_args(out)) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("step,data_read,")
        assert len(lines) > 2
        assert "diverged=False" in capsys.readouterr().out

    def test_byte_identical_repeats(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(self.run_args(a)) == 0
        assert main(self.run_args(b)) == 0
        assert a.read_bytes() == b.read_bytes()
        capsys.readouterr()

    def test_named_flag_beats_set_override(self, tmp_path, capsys):
        out = tmp_path / "run.csv"
        rc = main(["run", *SMALL, "--set", "lr=0.9", "--set", "optimizer=\"sgd\"",
                   "--lr", "0.05", "--steps", "5", "--out", str(out)])
        assert rc == 0
        first_row = out.read_text().splitlines()[1].split(",")
        assert first_row[5] == "0.05"  # step_length column
        capsys.readouterr()

    def test_divergent_run_exits_2_but_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "boom.csv"
        with np.errstate(over="ignore", invalid="ignore"):
            rc = main(["run", *SMALL, "--optimizer", "sgd", "--lr", "1e8",
                       "--steps", "40", "--out", str(out)])
        assert rc == 2
        assert out.exists() and len(out.read_text().splitlines()) > 1
        assert "diverged=True" in capsys.readouterr().out

    def test_unknown_key_exits_1(self, tmp_path, capsys):
        rc = main(["run", "--set", "problem.flavor=1", "--optimizer", "sgd",
                   "--steps", "2", "--out", str(tmp_path / "x.csv")])
        assert rc == 1
        assert "config error" in capsys.readouterr().err

    def test_config_file_with_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "optimizer": "sgd", "lr": 0.05, "steps": 6, "batch_size": 64,
            "problem": {"kind": "quadratic", "n_samples": 400, "input_dim": 4,
                        "n_features": 12},
            "solver": {"iterations": 6, "init_samples": 3, "rank": 6},
        }))
        out = tmp_path / "run.csv"
        rc = main(["run", "--config", str(cfg), "--set", "steps=4",
                   "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[-1].split(",")[0] == "4"
        capsys.readouterr()


class TestCompare:
    def test_merged_csv_and_summary(self, tmp_path, capsys):
        cfg = tmp_path / "cmp.json"
        cfg.write_text(json.dumps({
            "base": {
                "batch_size": 64, "steps": 8, "record_every": 4, "seed": 0,
                "target_suboptimality": 0.5,
                "problem": {"kind": "quadratic", "n_samples": 400,
                            "input_dim": 4, "n_features": 12},
            },
            "runs": [
                {"optimizer": "sgd", "lr": 0.1},
                {"optimizer": "sgd", "lr": 0.05},
                {"optimizer": "avg_inv"},
            ],
        }))
        out = tmp_path / "cmp.csv"
        summary = tmp_path / "summary.txt"
        rc = main(["compare", "--config", str(cfg), "--out", str(out),
                   "--summary", str(summary)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("optimizer,step,")
        labels = {line.split(",")[0] for line in lines[1:]}
        assert labels == {"sgd[lr=0.1]", "sgd[lr=0.05]", "avg_inv"}
        text = summary.read_text()
        assert "target train loss" in text and "avg_inv:" in text
        assert text in capsys.readouterr().out

    def test_missing_config_exits_1(self, tmp_path, capsys):
        rc = main(["compare", "--out", str(tmp_path / "x.csv")])
        assert rc == 1
        assert "requires --config" in capsys.readouterr().err

    def test_malformed_payload_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"base": {}}))
        rc = main(["compare", "--config", str(cfg),
                   "--out", str(tmp_path / "x.csv")])
        assert rc == 1
        assert "runs" in capsys.readouterr().err


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        out = tmp_path / "reg.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "hessprec", "gen-data", "--kind",
             "regression", "--out", str(out), "--n-samples", "30",
             "--input-dim", "3"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
