from __future__ import annotations

import json

import numpy as np
import pytest

from privshift.cli import load_config, main
from privshift.common import DataError
from privshift.dp_word import load_embedding_table


@pytest.fixture
def embeddings_jsonl(tmp_path, toy_table):
    path = tmp_path / "emb.jsonl"
    rng = np.random.default_rng(4)
    long_vectors = rng.standard_normal((18, 4)).tolist()
    records = [
        {"id": "long_text", "tokens": [f"t{i}" for i in range(18)],
         "vectors": long_vectors, "special": [False] * 18},
        {"id": "short_text", "tokens": ["a", "b"],
         "vectors": [[0.0] * 4, [1.0] * 4], "special": [False, False]},
    ]
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    return path


@pytest.fixture
def experiment_config(tmp_path, toy_world):
    path = tmp_path / "experiment.cfg"
    path.write_text(
        "# toy experiment\n"
        "mechanisms = madlib,mlm\n"
        "epsilons = 10,100\n"
        "trials = 2\n"
        "seed = 5\n"
        "estimator = twonn\n"
        f"embedding_table = {toy_world['table_path']}\n"
        f"provider = toy:{toy_world['corpus_path']}\n"
        f"pairs = {toy_world['pairs_path']}\n"
        "clip_lo = 0\n"
        "clip_hi = 5\n"
        "template_prefix =\n"
        "template_suffix =\n"
    )
    return path


class TestExitCodes:
    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_unknown_option_is_usage_error(self, capsys):
        assert main(["estimate-id", "--bogus", "x"]) == 1

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code = main(["estimate-id", "--in", str(tmp_path / "missing.jsonl")])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_unreachable_provider_is_provider_error(self, tmp_path, capsys):
        text = tmp_path / "in.txt"
        text.write_text("a b c\n")
        code = main([
            "privatize", "--in", str(text), "--mechanism", "mlm",
            "--epsilon", "10", "--provider", "http://127.0.0.1:9",
        ])
        assert code == 3
        assert "provider error" in capsys.readouterr().err

    def test_negative_epsilon_is_usage_error(self, tmp_path, toy_world, capsys):
        text = tmp_path / "in.txt"
        text.write_text("c0w01 c0w02\n")
        code = main([
            "privatize", "--in", str(text), "--mechanism", "madlib",
            "--epsilon", "-3", "--embedding-table", str(toy_world["table_path"]),
        ])
        assert code == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0


class TestEstimateId:
    def test_writes_status_per_text(self, embeddings_jsonl, capsys):
        code = main(["estimate-id", "--in", str(embeddings_jsonl)])
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "id,estimator,value,n_used,status"
        by_id = {line.split(",")[0]: line for line in out[1:]}
        assert by_id["long_text"].endswith("ok")
        assert by_id["short_text"].endswith("filtered")
        value = float(by_id["long_text"].split(",")[2])
        assert value > 0

    def test_out_file_and_estimator_flag(self, embeddings_jsonl, tmp_path):
        out = tmp_path / "ids.csv"
        code = main(["estimate-id", "--in", str(embeddings_jsonl),
                     "--out", str(out), "--estimator", "lbmle", "--lb-k", "5"])
        assert code == 0
        assert "lbmle" in out.read_text()


class TestPrivatize:
    def test_madlib_preserves_token_count(self, tmp_path, toy_world, capsys):
        text = tmp_path / "in.txt"
        lines = ["c0w01 c0w02 c0w03 c0w04", "c1w00 c1w01"]
        text.write_text("\n".join(lines) + "\n")
        out = tmp_path / "out.txt"
        code = main([
            "privatize", "--in", str(text), "--out", str(out),
            "--mechanism", "madlib", "--epsilon", "25",
            "--embedding-table", str(toy_world["table_path"]), "--seed", "3",
        ])
        assert code == 0
        written = out.read_text().splitlines()
        assert [len(line.split()) for line in written] == [4, 2]
        table = load_embedding_table(toy_world["table_path"])
        assert all(tok in table for line in written for tok in line.split())
        assert "epsilon_total" in capsys.readouterr().err

    def test_mlm_with_toy_provider(self, tmp_path, toy_world):
        text = tmp_path / "in.txt"
        text.write_text("c0w01 c0w02 c0w03\n")
        out = tmp_path / "out.txt"
        code = main([
            "privatize", "--in", str(text), "--out", str(out),
            "--mechanism", "mlm", "--epsilon", "50",
            "--provider", f"toy:{toy_world['corpus_path']}", "--seed", "1",
        ])
        assert code == 0
        assert len(out.read_text().split()) == 3

    def test_exactly_one_epsilon(self, tmp_path, toy_world):
        text = tmp_path / "in.txt"
        text.write_text("c0w01\n")
        code = main([
            "privatize", "--in", str(text), "--mechanism", "madlib",
            "--epsilon", "1", "--epsilon", "2",
            "--embedding-table", str(toy_world["table_path"]),
        ])
        assert code == 1

    def test_deterministic_with_seed(self, tmp_path, toy_world):
        text = tmp_path / "in.txt"
        text.write_text("c0w01 c0w02 c0w03 c0w04 c0w05\n")
        outs = []
        for name in ("a.txt", "b.txt"):
            out = tmp_path / name
            assert main([
                "privatize", "--in", str(text), "--out", str(out),
                "--mechanism", "madlib", "--epsilon", "10",
                "--embedding-table", str(toy_world["table_path"]), "--seed", "9",
            ]) == 0
            outs.append(out.read_text())
        assert outs[0] == outs[1]


class TestBaselineCommand:
    def test_prints_summary(self, toy_world, capsys):
        code = main([
            "baseline", "--pairs", str(toy_world["pairs_path"]),
            "--embedding-table", str(toy_world["table_path"]),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "baseline mean shift" in out
        assert "pairs used 50" in out


class TestExperimentCommand:
    def test_end_to_end_and_determinism(self, experiment_config, tmp_path, capsys):
        out_a = tmp_path / "run_a"
        out_b = tmp_path / "run_b"
        for out_dir in (out_a, out_b):
            code = main(["experiment", "--config", str(experiment_config),
                         "--out", str(out_dir)])
            assert code == 0
        assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()
        assert (out_a / "report.svg").read_bytes() == (out_b / "report.svg").read_bytes()
        csv_text = (out_a / "report.csv").read_text()
        assert "# aggregate" in csv_text
        assert "# baseline" in csv_text  # computed from the same pairs by default

    def test_epsilon_flag_overrides_config(self, experiment_config, tmp_path):
        out_dir = tmp_path / "override"
        code = main(["experiment", "--config", str(experiment_config),
                     "--out", str(out_dir), "--epsilon", "50", "--trials", "1",
                     "--no-baseline"])
        assert code == 0
        text = (out_dir / "report.csv").read_text()
        assert ",50.0," in text
        assert ",10.0," not in text


class TestCheckDp:
    def test_default_passes(self, capsys):
        assert main(["check-dp"]) == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 3
        assert "[FAIL]" not in out

    def test_oversized_vocab_is_usage_error(self):
        assert main(["check-dp", "--vocab-size", "11"]) == 1


class TestConfigFile:
    def test_parse_values_and_comments(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("seed = 9  # root seed\n\n# comment line\ntrials = 4\n")
        assert load_config(path) == {"seed": "9", "trials": "4"}

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("bogus = 1\n")
        with pytest.raises(DataError, match="unknown config key"):
            load_config(path)

    def test_unknown_key_exit_code(self, tmp_path, capsys):
        path = tmp_path / "c.cfg"
        path.write_text("bogus = 1\n")
        assert main(["estimate-id", "--in", "x.jsonl", "--config", str(path)]) == 2

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("just some words\n")
        with pytest.raises(DataError, match="key = value"):
            load_config(path)
