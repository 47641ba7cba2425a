"""Exporter: record validation, encoding determinism, FOPD output."""

import logging
import subprocess
import sys

import numpy as np
import pytest

from fopd_exporter.encoder import ClsEncoder
from fopd_exporter.errors import MissingModality, RecordValidationError, WidthMismatch
from fopd_exporter.export import export_embeddings
from fopd_exporter.records import group_records, read_records

from conftest import write_jsonl


class TestRecords:
    def test_round_trip_grouping(self, small_corpus):
        groups = group_records(read_records(small_corpus))
        assert [g.company_id for g in groups] == ["comp-0", "comp-1", "comp-2"]
        assert [g.label for g in groups] == [-1, 0, 1]
        assert [len(g.timely) for g in groups] == [2, 3, 4]
        assert [len(g.trending) for g in groups] == [2, 2, 2]

    def test_bad_label_rejected_before_any_encoding(self, tmp_path):
        path = write_jsonl(tmp_path / "bad.jsonl", [
            {"company_id": "a", "label": 2, "modality": "timely", "text": "x"},
        ])
        # a nonexistent encoder proves validation fires first
        with pytest.raises(RecordValidationError):
            export_embeddings(path, tmp_path / "out.fopd", encoder="/does/not/exist")

    def test_bad_modality(self, tmp_path):
        path = write_jsonl(tmp_path / "bad.jsonl", [
            {"company_id": "a", "label": 0, "modality": "viral", "text": "x"},
        ])
        with pytest.raises(RecordValidationError):
            read_records(path)

    def test_conflicting_labels(self, tmp_path):
        path = write_jsonl(tmp_path / "bad.jsonl", [
            {"company_id": "a", "label": 0, "modality": "timely", "text": "x"},
            {"company_id": "a", "label": 1, "modality": "trending", "text": "y"},
        ])
        with pytest.raises(RecordValidationError):
            group_records(read_records(path))

    def test_missing_modality_is_hard_error(self, tmp_path):
        path = write_jsonl(tmp_path / "bad.jsonl", [
            {"company_id": "a", "label": 0, "modality": "timely", "text": "x"},
        ])
        with pytest.raises(MissingModality):
            group_records(read_records(path))

    def test_empty_text_skipped_with_warning(self, tmp_path, caplog):
        path = write_jsonl(tmp_path / "c.jsonl", [
            {"company_id": "a", "label": 0, "modality": "timely", "text": "   "},
            {"company_id": "a", "label": 0, "modality": "timely", "text": "ok"},
            {"company_id": "a", "label": 0, "modality": "trending", "text": "fine"},
        ])
        with caplog.at_level(logging.WARNING):
            records = read_records(path)
        assert len(records) == 2
        assert any("skipped" in message for message in caplog.messages)


class TestEncoder:
    def test_width_guard(self, narrow_bert):
        with pytest.raises(WidthMismatch):
            ClsEncoder(narrow_bert)

    def test_batch_size_does_not_move_values(self, mini_bert):
        enc = ClsEncoder(mini_bert)
        texts = [f"stock profit {i}" for i in range(5)]
        one = enc.encode(texts, batch_size=1)
        four = enc.encode(texts, batch_size=4)
        assert one.shape == (5, 768)
        np.testing.assert_allclose(one, four, atol=1e-5)

    def test_truncation_logged_and_deterministic(self, mini_bert, caplog):
        enc = ClsEncoder(mini_bert)
        long_text = "market " * 50
        with caplog.at_level(logging.WARNING):
            a = enc.encode([long_text], max_tokens=8)
        assert any("truncated" in m for m in caplog.messages)
        b = enc.encode([long_text], max_tokens=8)
        assert np.array_equal(a, b)


class TestExport:
    def test_output_loads_via_primary_reader(self, small_corpus, mini_bert, tmp_path):
        from fmhca.data import read_dataset

        out = tmp_path / "corpus.fopd"
        count = export_embeddings(small_corpus, out, encoder=mini_bert)
        assert count == 3
        samples = read_dataset(out)
        assert [s.company_id for s in samples] == ["comp-0", "comp-1", "comp-2"]
        assert all(s.d_emb == 768 for s in samples)
        assert [s.F.shape[0] for s in samples] == [2, 3, 4]
        assert [s.H.shape[0] for s in samples] == [2, 2, 2]
        assert [s.label for s in samples] == [-1, 0, 1]

    def test_repeated_runs_byte_identical(self, small_corpus, mini_bert, tmp_path):
        a, b = tmp_path / "a.fopd", tmp_path / "b.fopd"
        export_embeddings(small_corpus, a, encoder=mini_bert)
        export_embeddings(small_corpus, b, encoder=mini_bert)
        assert a.read_bytes() == b.read_bytes()

    def test_cli(self, small_corpus, mini_bert, tmp_path):
        out = tmp_path / "cli.fopd"
        result = subprocess.run(
            [sys.executable, "-m", "fopd_exporter", str(small_corpus),
             "--out", str(out), "--encoder", mini_bert, "--quiet"],
            capture_output=True, text=True,
        )
        assert result.returncode == 0, result.stderr
        assert "exported 3 companies" in result.stdout
        assert out.exists()

    def test_cli_bad_input_exit_2(self, tmp_path, mini_bert):
        bad = write_jsonl(tmp_path / "bad.jsonl", [
            {"company_id": "a", "label": 5, "modality": "timely", "text": "x"},
        ])
        result = subprocess.run(
            [sys.executable, "-m", "fopd_exporter", str(bad),
             "--out", str(tmp_path / "o.fopd"), "--encoder", mini_bert, "--quiet"],
            capture_output=True, text=True,
        )
        assert result.returncode == 2
        assert "RecordValidationError" in result.stderr
