"""Supervised pair classifier: which side of a snippet pair is the
revision.

Fine-tuned on the training pairs exported by the evaluation toolkit
(JSON lines with fields ``a``, ``b`` and ``label`` naming the revised
slot). A marker file records that fine-tuning happened; serving refuses
checkpoints without it unless explicitly overridden.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch
from torch.utils.data import DataLoader, Dataset
from transformers import AutoModelForSequenceClassification, AutoTokenizer

log = logging.getLogger(__name__)

TRAINING_MARKER = "training_state.json"
ID2LABEL = {0: "a", 1: "b"}
LABEL2ID = {"a": 0, "b": 1}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    epochs: int = 10
    batch_size: int = 32
    max_length: int = 256
    seed: int = 0
    device: str = "cpu"


def read_training_pairs(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("label") not in LABEL2ID:
                raise ValueError(f"{path}:{lineno}: label must be 'a' or 'b'")
            records.append({"a": record["a"], "b": record["b"], "label": record["label"]})
    if not records:
        raise ValueError(f"no training pairs in {path}")
    return records


class _PairDataset(Dataset):
    def __init__(self, records, tokenizer, max_length):
        self.records = records
        self.tokenizer = tokenizer
        self.max_length = max_length

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index):
        record = self.records[index]
        encoded = self.tokenizer(
            record["a"],
            record["b"],
            truncation=True,
            max_length=self.max_length,
            padding="max_length",
            return_tensors="pt",
        )
        item = {key: value.squeeze(0) for key, value in encoded.items()}
        item["labels"] = torch.tensor(LABEL2ID[record["label"]])
        return item


def train(pairs_path, base_model: str, out_dir, cfg: TrainConfig = TrainConfig()) -> dict:
    """Fine-tune and save a pair classifier; returns the training summary
    that is also written to the marker file."""
    records = read_training_pairs(pairs_path)
    torch.manual_seed(cfg.seed)
    tokenizer = AutoTokenizer.from_pretrained(base_model)
    model = AutoModelForSequenceClassification.from_pretrained(
        base_model, num_labels=2, id2label=ID2LABEL, label2id=LABEL2ID
    )
    model.to(cfg.device)
    model.train()
    dataset = _PairDataset(records, tokenizer, cfg.max_length)
    generator = torch.Generator().manual_seed(cfg.seed)
    loader = DataLoader(
        dataset, batch_size=cfg.batch_size, shuffle=True, generator=generator
    )
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)

    final_loss = 0.0
    for epoch in range(cfg.epochs):
        total = 0.0
        for batch in loader:
            batch = {key: value.to(cfg.device) for key, value in batch.items()}
            optimizer.zero_grad()
            output = model(**batch)
            output.loss.backward()
            optimizer.step()
            total += output.loss.item()
        final_loss = total / max(len(loader), 1)
        log.info("epoch %d/%d: mean loss %.4f", epoch + 1, cfg.epochs, final_loss)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    summary = {
        "examples": len(records),
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "final_mean_loss": final_loss,
    }
    (out_dir / TRAINING_MARKER).write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    return summary


class PairClassifier:
    """Deterministic argmax chooser over a fine-tuned checkpoint."""

    def __init__(
        self,
        model_dir: str,
        device: str = "cpu",
        max_length: int = 256,
        allow_untrained: bool = False,
    ):
        marker = Path(model_dir) / TRAINING_MARKER
        if not marker.exists() and not allow_untrained:
            raise ValueError(
                f"{model_dir} has no {TRAINING_MARKER}; fine-tune it with"
                " 'revadapter train' first (or pass --allow-untrained)"
            )
        self.tokenizer = AutoTokenizer.from_pretrained(model_dir)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_dir)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.max_length = max_length

    def choose(self, a: str, b: str):
        encoded = self.tokenizer(
            a,
            b,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        ).to(self.device)
        with torch.no_grad():
            logits = self.model(**encoded).logits[0]
        probs = torch.softmax(logits, dim=-1)
        choice = ID2LABEL[int(torch.argmax(logits).item())]
        # The revised side is the better one; report its probability as the
        # side score.
        return choice, float(probs[0].item()), float(probs[1].item())

    def score(self, text: str) -> float:
        raise ValueError("pair classifier cannot score a single text")
