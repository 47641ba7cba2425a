"""BERT-family text encoder: deterministic eval-mode [CLS] extraction."""

from __future__ import annotations

import logging

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .errors import WidthMismatch

logger = logging.getLogger(__name__)

REQUIRED_WIDTH = 768
DEFAULT_ENCODER = "hfl/chinese-bert-wwm-ext"


class ClsEncoder:
    """Wraps a pretrained encoder; returns the final layer's [CLS] vector."""

    def __init__(self, name_or_path: str = DEFAULT_ENCODER, device: str = "cpu"):
        self.name = name_or_path
        self.device = torch.device(device)
        self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        self.model = AutoModel.from_pretrained(name_or_path).to(self.device)
        self.model.eval()
        width = int(self.model.config.hidden_size)
        if width != REQUIRED_WIDTH:
            raise WidthMismatch(
                f"encoder {name_or_path!r} has hidden width {width}, need {REQUIRED_WIDTH}")

    def encode(self, texts: list[str], max_tokens: int = 128, batch_size: int = 8) -> np.ndarray:
        """(len(texts), 768) float32 [CLS] matrix; truncation is logged per text."""
        vectors = []
        with torch.no_grad():
            for start in range(0, len(texts), batch_size):
                chunk = texts[start:start + batch_size]
                for offset, text in enumerate(chunk):
                    n_tokens = len(self.tokenizer(text)["input_ids"])
                    if n_tokens > max_tokens:
                        logger.warning("text %d truncated: %d tokens > max_tokens=%d",
                                       start + offset, n_tokens, max_tokens)
                encoded = self.tokenizer(
                    chunk, truncation=True, max_length=max_tokens,
                    padding=True, return_tensors="pt",
                ).to(self.device)
                out = self.model(**encoded)
                vectors.append(out.last_hidden_state[:, 0, :].cpu().numpy().astype(np.float32))
        return np.concatenate(vectors, axis=0) if vectors else np.zeros((0, REQUIRED_WIDTH), np.float32)
