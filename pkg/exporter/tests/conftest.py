import json
import os

import pytest

# the fixtures below build local models; never touch the hub
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

VOCAB = (
    ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    + list("abcdefghijklmnopqrstuvwxyz0123456789")
    + ["##" + c for c in "abcdefghijklmnopqrstuvwxyz"]
    + ["stock", "market", "profit", "loss", "rally", "crash", "hold", "buy", "sell"]
)


def _build_bert(path, hidden_size: int):
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    (path / "vocab.txt").write_text("\n".join(VOCAB))
    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=hidden_size,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=4 * hidden_size // 3,
        max_position_embeddings=512,
    )
    BertModel(config).save_pretrained(path)
    BertTokenizer(str(path / "vocab.txt")).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def mini_bert(tmp_path_factory):
    """Local randomly initialized BERT with the required 768 hidden width."""
    return _build_bert(tmp_path_factory.mktemp("minibert768"), 768)


@pytest.fixture(scope="session")
def narrow_bert(tmp_path_factory):
    """Local BERT with the wrong hidden width, for the width guard."""
    return _build_bert(tmp_path_factory.mktemp("minibert384"), 384)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path


@pytest.fixture
def small_corpus(tmp_path):
    rows = []
    for i in range(3):
        cid = f"comp-{i}"
        label = (-1, 0, 1)[i]
        for j in range(2 + i):
            rows.append({"company_id": cid, "label": label, "modality": "timely",
                         "text": f"stock market profit {i} {j}"})
        for j in range(2):
            rows.append({"company_id": cid, "label": label, "modality": "trending",
                         "text": f"buy sell rally {i} {j}"})
    return write_jsonl(tmp_path / "corpus.jsonl", rows)
