"""Offline model fixtures: tiny word-level models built and trained from
the bundled prose, no downloads."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers, trainers
from tokenizers.processors import TemplateProcessing
from transformers import (
    BertConfig,
    BertForSequenceClassification,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
)

DATA = Path(__file__).parent / "data"

SPECIALS = ["[UNK]", "[PAD]", "[BOS]", "[EOS]", "[CLS]", "[SEP]"]


@pytest.fixture(scope="session")
def train_lines():
    return (DATA / "train_text.txt").read_text(encoding="utf-8").splitlines()


def build_tokenizer(lines) -> PreTrainedTokenizerFast:
    tok = Tokenizer(models.WordLevel(unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    tok.train_from_iterator(lines, trainers.WordLevelTrainer(special_tokens=SPECIALS))
    tok.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B:1 [SEP]:1",
        special_tokens=[
            ("[CLS]", tok.token_to_id("[CLS]")),
            ("[SEP]", tok.token_to_id("[SEP]")),
        ],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tok,
        unk_token="[UNK]",
        pad_token="[PAD]",
        bos_token="[BOS]",
        eos_token="[EOS]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        model_input_names=["input_ids", "token_type_ids", "attention_mask"],
    )


def train_causal_lm(tokenizer, lines, epochs=4, block=32, seed=0) -> GPT2LMHeadModel:
    """Quick word-level LM fit so scores reflect in-domain word order."""
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=len(tokenizer),
        n_positions=128,
        n_embd=64,
        n_layer=2,
        n_head=2,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
    )
    model = GPT2LMHeadModel(config)
    stream = []
    for line in lines:
        stream.append(tokenizer.bos_token_id)
        stream.extend(tokenizer(line, add_special_tokens=False)["input_ids"])
        stream.append(tokenizer.eos_token_id)
    chunks = [
        stream[i : i + block]
        for i in range(0, len(stream) - block, block)
    ]
    optimizer = torch.optim.AdamW(model.parameters(), lr=3e-3)
    model.train()
    for _ in range(epochs):
        for start in range(0, len(chunks), 16):
            batch = torch.tensor(chunks[start : start + 16])
            optimizer.zero_grad()
            loss = model(input_ids=batch, labels=batch).loss
            loss.backward()
            optimizer.step()
    model.eval()
    return model


@pytest.fixture(scope="session")
def lm_model_dir(tmp_path_factory, train_lines):
    """Trained tiny causal LM checkpoint directory."""
    out = tmp_path_factory.mktemp("tiny-lm")
    tokenizer = build_tokenizer(train_lines)
    model = train_causal_lm(tokenizer, train_lines)
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def bert_base_dir(tmp_path_factory, train_lines):
    """Untrained tiny BERT checkpoint used as the fine-tuning base."""
    out = tmp_path_factory.mktemp("tiny-bert")
    tokenizer = build_tokenizer(train_lines)
    torch.manual_seed(7)  # deterministic base weights run to run
    config = BertConfig(
        vocab_size=len(tokenizer),
        hidden_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=128,
        max_position_embeddings=128,
        type_vocab_size=2,
        pad_token_id=tokenizer.pad_token_id,
    )
    BertForSequenceClassification(config).save_pretrained(out)
    tokenizer.save_pretrained(out)
    return out


def make_training_pairs(lines, n, seed=0):
    """Synthetic labeled pairs with a learnable lexical cue: the revised
    side carries a discourse-marker prefix."""
    rng = random.Random(seed)
    records = []
    for i in range(n):
        line = lines[i % len(lines)]
        revised = "moreover " + line
        if rng.random() < 0.5:
            records.append({"a": revised, "b": line, "label": "a"})
        else:
            records.append({"a": line, "b": revised, "label": "b"})
    return records


@pytest.fixture(scope="session")
def training_pairs_file(tmp_path_factory, train_lines):
    path = tmp_path_factory.mktemp("pairs") / "train.jsonl"
    records = make_training_pairs(train_lines, 64, seed=3)
    path.write_text(
        "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records),
        encoding="utf-8",
    )
    return path


@pytest.fixture(scope="session")
def classifier_dir(tmp_path_factory, training_pairs_file, bert_base_dir):
    from revadapter.classifier import TrainConfig, train

    out = tmp_path_factory.mktemp("tiny-clf")
    train(
        training_pairs_file,
        str(bert_base_dir),
        out,
        TrainConfig(learning_rate=1e-3, epochs=30, batch_size=16, max_length=48, seed=1),
    )
    return out
