"""Unsupervised quality scorer: negative per-token perplexity under a
causal language model."""

from __future__ import annotations

import logging
import math

import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

log = logging.getLogger(__name__)


class CausalLmScorer:
    """Higher score = more fluent under the model.

    Texts longer than ``max_length`` tokens are head-truncated; a counter
    tracks how often that happened. Scoring is deterministic (eval mode,
    no sampling).
    """

    def __init__(self, model_path: str, device: str = "cpu", max_length: int = 512):
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForCausalLM.from_pretrained(model_path)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.max_length = max_length
        self.truncated_count = 0
        bos = self.tokenizer.bos_token_id
        self._bos_id = bos if bos is not None else self.tokenizer.eos_token_id

    @property
    def unit(self) -> str:
        return "subword"

    def score(self, text: str) -> float:
        if not text.strip():
            raise ValueError("cannot score empty text")
        encoded = self.tokenizer(text, return_tensors="pt", add_special_tokens=False)
        ids = encoded["input_ids"][0]
        if ids.numel() > self.max_length - 1:
            self.truncated_count += 1
            log.warning(
                "truncating input from %d to %d tokens (total truncations: %d)",
                ids.numel(),
                self.max_length - 1,
                self.truncated_count,
            )
            ids = ids[: self.max_length - 1]
        if self._bos_id is not None:
            ids = torch.cat([torch.tensor([self._bos_id]), ids])
        elif ids.numel() < 2:
            raise ValueError("text too short to score without a BOS token")
        ids = ids.unsqueeze(0).to(self.device)
        with torch.no_grad():
            output = self.model(input_ids=ids, labels=ids)
        # Mean negative log-likelihood per predicted token.
        return -math.exp(output.loss.item())

    def choose(self, a: str, b: str):
        score_a = self.score(a)
        score_b = self.score(b)
        if score_a == score_b:
            return "tie", score_a, score_b
        return ("a" if score_a > score_b else "b"), score_a, score_b
