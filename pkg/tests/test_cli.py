"""Command-line surface, exercised through real subprocesses."""

import json
import subprocess
import sys

import numpy as np
import pytest

from fmhca.checkpoint import load_model, save_model
from fmhca.data import read_dataset
from fmhca.model import ModelConfig, build_model
from fmhca.training import evaluate

SMALL_MODEL = ["--d-model", "8", "--heads", "2", "--factors", "2", "--d-mfb", "8",
               "--d-ff", "16", "--mlp-hidden", "8"]


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "fmhca", *args],
        capture_output=True, text=True,
    )


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "d.fopd"
    result = run_cli("gen-data", "--companies", "40", "--d-emb", "8",
                     "--m-min", "2", "--m-max", "5", "--n-min", "2", "--n-max", "5",
                     "--task", "separable", "--seed", "7", "--out", str(path))
    assert result.returncode == 0, result.stderr
    return path


@pytest.fixture(scope="module")
def checkpoint(dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "m.fckp"
    result = run_cli("train", "--data", str(dataset), "--out", str(path),
                     *SMALL_MODEL, "--epochs", "2", "--batch-size", "8", "--seed", "3")
    assert result.returncode == 0, result.stderr
    return path


class TestGenData:
    def test_output_readable_and_deterministic(self, dataset, tmp_path):
        samples = read_dataset(dataset)
        assert len(samples) == 40 and samples[0].d_emb == 8
        again = tmp_path / "again.fopd"
        result = run_cli("gen-data", "--companies", "40", "--d-emb", "8",
                         "--m-min", "2", "--m-max", "5", "--n-min", "2", "--n-max", "5",
                         "--task", "separable", "--seed", "7", "--out", str(again))
        assert result.returncode == 0
        assert again.read_bytes() == dataset.read_bytes()

    def test_invalid_priors_exit_2(self, tmp_path):
        result = run_cli("gen-data", "--companies", "5", "--priors", "0.9,0.9,0.1",
                         "--out", str(tmp_path / "x.fopd"))
        assert result.returncode == 2
        assert "priors" in result.stderr

    def test_echoes_resolved_config(self, tmp_path):
        result = run_cli("gen-data", "--companies", "3", "--out", str(tmp_path / "c.fopd"))
        assert result.returncode == 0
        assert "config companies=3" in result.stdout
        assert "config task=separable" in result.stdout


class TestConfigFile:
    def test_file_values_and_flag_override(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("companies=5\nd_emb=4\nseed=1\n# comment\n")
        out = tmp_path / "d.fopd"
        result = run_cli("gen-data", "--config", str(cfg_file), "--d-emb", "6", "--out", str(out))
        assert result.returncode == 0, result.stderr
        assert "config d_emb=6" in result.stdout  # flag wins
        assert read_dataset(out)[0].d_emb == 6

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("companiez=5\n")
        result = run_cli("gen-data", "--config", str(cfg_file), "--companies", "3",
                         "--out", str(tmp_path / "d.fopd"))
        assert result.returncode == 2
        assert "companiez" in result.stderr


class TestTrain:
    def test_history_file(self, checkpoint):
        history_path = str(checkpoint) + ".history.jsonl"
        records = [json.loads(line) for line in open(history_path)]
        assert len(records) == 2
        assert {"epoch", "train_loss", "val_loss", "val_accuracy", "wall_seconds"} <= set(records[0])

    def test_zero_epochs_equals_fresh_init(self, dataset, tmp_path):
        out = tmp_path / "fresh.fckp"
        result = run_cli("train", "--data", str(dataset), "--out", str(out),
                         *SMALL_MODEL, "--epochs", "0", "--model-seed", "11")
        assert result.returncode == 0, result.stderr
        params, cfg = load_model(out)
        fresh = build_model(cfg)
        for (n, a), (_, b) in zip(params.named_tensors(), fresh.named_tensors()):
            assert np.array_equal(a.data, np.asarray(b.data, dtype=np.float32)), n

    def test_deterministic_given_flags(self, dataset, tmp_path):
        outs = []
        for name in ("a.fckp", "b.fckp"):
            out = tmp_path / name
            result = run_cli("train", "--data", str(dataset), "--out", str(out),
                             *SMALL_MODEL, "--epochs", "2", "--batch-size", "8", "--seed", "5")
            assert result.returncode == 0
            outs.append(out)
        assert outs[0].read_bytes() == outs[1].read_bytes()
        h0 = [json.loads(l) for l in open(str(outs[0]) + ".history.jsonl")]
        h1 = [json.loads(l) for l in open(str(outs[1]) + ".history.jsonl")]
        for a, b in zip(h0, h1):
            assert a["train_loss"] == b["train_loss"]
            assert a["val_loss"] == b["val_loss"]
            assert a["val_accuracy"] == b["val_accuracy"]


class TestEval:
    def test_matches_library_evaluate(self, dataset, checkpoint):
        result = run_cli("eval", "--checkpoint", str(checkpoint), "--data", str(dataset))
        assert result.returncode == 0, result.stderr
        payload = json.loads(result.stdout.strip().splitlines()[-1])
        params, cfg = load_model(checkpoint)
        report = evaluate(params, cfg, read_dataset(dataset))
        assert payload["accuracy"] == report.accuracy
        assert payload["confusion"] == report.confusion.tolist()
        assert all(isinstance(v, int) for row in payload["confusion"] for v in row)

    def test_split_selection(self, dataset, checkpoint):
        result = run_cli("eval", "--checkpoint", str(checkpoint), "--data", str(dataset),
                         "--split", "test", "--split-seed", "0")
        assert result.returncode == 0
        payload = json.loads(result.stdout.strip().splitlines()[-1])
        assert payload["total"] == 4  # 10% of 40

    def test_missing_checkpoint_exit_2(self, dataset, tmp_path):
        result = run_cli("eval", "--checkpoint", str(tmp_path / "nope.fckp"), "--data", str(dataset))
        assert result.returncode == 2


class TestAblate:
    def test_four_variant_table(self, dataset, tmp_path):
        json_out = tmp_path / "ablate.jsonl"
        result = run_cli("ablate", "--data", str(dataset), *SMALL_MODEL,
                         "--epochs", "1", "--batch-size", "8", "--json-out", str(json_out))
        assert result.returncode == 0, result.stderr
        rows = [json.loads(line) for line in open(json_out)]
        assert [r["variant"] for r in rows] == ["full", "no_cross_attention", "no_fusion", "mlp_baseline"]
        table_lines = [l for l in result.stdout.splitlines() if l.startswith(("full", "no_", "mlp"))]
        assert len(table_lines) == 4


class TestGradCheckCommand:
    def test_passes_and_exit_zero(self):
        result = run_cli("grad-check", "--skip-model", "true", "--tolerance", "1e-4")
        assert result.returncode == 0, result.stdout + result.stderr
        assert "FAIL" not in result.stdout
        assert "PASS masked_softmax" in result.stdout

    def test_exit_one_on_failure(self):
        # an absurd tolerance forces failures without a corrupted build
        result = run_cli("grad-check", "--skip-model", "true", "--tolerance", "1e-18")
        assert result.returncode == 1
        assert "FAIL" in result.stdout


class TestInspectAttention:
    def test_dump_contract(self, dataset, checkpoint):
        sample = read_dataset(dataset)[5]
        result = run_cli("inspect-attention", "--checkpoint", str(checkpoint),
                         "--data", str(dataset), "--sample-id", sample.company_id)
        assert result.returncode == 0, result.stderr
        payload = json.loads(result.stdout.strip().splitlines()[-1])
        s1 = np.array(payload["s1"])
        s2 = np.array(payload["s2"])
        n, m = sample.H.shape[0], sample.F.shape[0]
        assert s1.shape == (n + 1, m + 1)
        assert s2.shape == (n + 1, n + 1)
        np.testing.assert_allclose(s1.sum(axis=1), np.ones(n + 1), atol=1e-6)
        np.testing.assert_allclose(s2.sum(axis=1), np.ones(n + 1), atol=1e-6)
        assert payload["predicted"] in (-1, 0, 1)

    def test_unknown_sample_exit_2(self, dataset, checkpoint):
        result = run_cli("inspect-attention", "--checkpoint", str(checkpoint),
                         "--data", str(dataset), "--sample-id", "nope")
        assert result.returncode == 2
