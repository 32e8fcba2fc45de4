"""
Tests for the sagerl command-line entry point.
"""

import json
from unittest.mock import patch

import pytest

from sagerl.cli.main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main, parse_args

SMALL_EXPERIMENT = {
    "synthetic": {"num_nodes": 120, "feature_dim": 6, "mean_degree": 6.0, "seed": 1},
    "sage": {
        "num_layers": 2,
        "hidden_dim": 6,
        "fanouts": [3, 2],
        "epochs": 1,
        "precision": "float64",
    },
    "rl": {"regressor_epochs": 2},
    "seeds": [0],
}


@pytest.fixture
def config_file(tmp_path):
    def write(**overrides):
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps({**SMALL_EXPERIMENT, **overrides}))
        return str(path)

    return write


class TestParseArgs:
    def test_bench_arguments(self):
        args = parse_args(["bench", "--config", "c.json", "--out", "runs"])
        assert args.command == "bench"
        assert args.out == "runs"
        assert args.seed is None

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            parse_args(["serve", "--config", "c.json"])


class TestMain:
    def test_missing_config_is_config_error(self, tmp_path, capsys):
        code = main(["bench", "--config", str(tmp_path / "absent.json")])
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert err.startswith("error: config file not found")
        assert len(err.strip().splitlines()) == 1

    def test_invalid_value_is_config_error(self, config_file, capsys):
        code = main(["bench", "--config", config_file(seeds=[])])
        assert code == EXIT_CONFIG

    def test_negative_seed_is_config_error(self, config_file):
        assert main(["train", "--config", config_file(), "--seed", "-1"]) == EXIT_CONFIG

    def test_runtime_failure(self, config_file, capsys, tmp_path):
        with patch("sagerl.cli.main.run_bench", side_effect=RuntimeError("boom")):
            code = main(["bench", "--config", config_file(), "--out", str(tmp_path / "out")])
        assert code == EXIT_RUNTIME
        assert "error: RuntimeError: boom" in capsys.readouterr().err

    def test_synth_writes_dataset(self, config_file, tmp_path):
        out = tmp_path / "dataset"
        assert main(["synth", "--config", config_file(), "--out", str(out)]) == EXIT_OK
        meta = json.loads((out / "meta.json").read_text())
        assert meta["num_nodes"] == 120
        for name in ("edges.txt", "features.tsv", "labels.tsv", "split.tsv"):
            assert (out / name).is_file()

    def test_bench_writes_report(self, config_file, tmp_path, capsys):
        out = tmp_path / "runs"
        assert main(["bench", "--config", config_file(), "--out", str(out)]) == EXIT_OK
        results = json.loads((out / "results.json").read_text())
        assert [row["method"] for row in results["rows"]] == ["uniform", "rl_all_hop"]
        assert "Time (s)" in capsys.readouterr().out

    def test_bench_seed_replaces_config_seeds(self, config_file, tmp_path):
        out = tmp_path / "runs"
        config = config_file(seeds=[0, 1])
        assert main(["bench", "--config", config, "--seed", "7", "--out", str(out)]) == EXIT_OK
        results = json.loads((out / "results.json").read_text())
        assert [row["seeds"] for row in results["rows"]] == [[7], [7]]
        assert all(len(row["f1_per_seed"]) == 1 for row in results["rows"])

    def test_uniform_train_then_eval_is_repeatable(self, config_file, tmp_path):
        config = config_file(sampler="uniform")
        out = tmp_path / "model"
        assert main(["train", "--config", config, "--out", str(out)]) == EXIT_OK
        assert (out / "model.ckpt").is_file()
        history = json.loads((out / "history.json").read_text())
        assert len(history["uniform"]["epochs"]) == 1

        assert main(["eval", "--config", config, "--out", str(out)]) == EXIT_OK
        first = json.loads((out / "eval.json").read_text())
        assert main(["eval", "--config", config, "--out", str(out)]) == EXIT_OK
        second = json.loads((out / "eval.json").read_text())
        assert first == second
        assert first["sampler"] == "uniform"

    def test_rl_train_writes_table_and_regressor(self, config_file, tmp_path):
        config = config_file()
        out = tmp_path / "model"
        assert main(["train", "--config", config, "--out", str(out)]) == EXIT_OK
        assert (out / "value_table.txt").read_text().strip()
        history = json.loads((out / "history.json").read_text())
        assert set(history["test_f1"]) == {"uniform", "rl"}

        assert main(["eval", "--config", config, "--out", str(out)]) == EXIT_OK
        assert json.loads((out / "eval.json").read_text())["sampler"] == "value"

    def test_eval_without_checkpoint_is_runtime_error(self, config_file, tmp_path):
        out = tmp_path / "empty"
        assert main(["eval", "--config", config_file(), "--out", str(out)]) == EXIT_RUNTIME
