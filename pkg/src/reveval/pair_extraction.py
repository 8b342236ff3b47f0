"""Snippet-pair extraction and corpus splitting.

A snippet pair is one paragraph in its source reading next to the same
paragraph with exactly one edit applied; an edit carrying several labels
yields one pair per label. Pairs feed the classification harness and the
training-pair export.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass, asdict
from pathlib import Path

from reveval.corpus_model import (
    Aspect,
    EditAspect,
    locate_paragraph,
    paragraph_spans,
    source_text,
)

log = logging.getLogger(__name__)

BETTER_REVISED = "revised"
BETTER_SOURCE = "source"


@dataclass(frozen=True)
class SnippetPair:
    """One classification instance. ``better_side`` says which text is the
    higher quality one: ``revised`` for gold edits, ``source`` for pairs
    whose second member is a deliberate corruption."""

    source: str
    revised: str
    aspect: EditAspect
    doc_id: str
    editor: str
    paragraph_index: int
    edit_index: int
    better_side: str = BETTER_REVISED

    def __post_init__(self):
        if not self.source or not self.revised:
            raise ValueError("snippet pair sides must be nonempty")
        if self.source == self.revised:
            raise ValueError("snippet pair sides must differ")
        if self.better_side not in (BETTER_REVISED, BETTER_SOURCE):
            raise ValueError(f"unknown better_side {self.better_side!r}")

    @property
    def better_text(self) -> str:
        return self.revised if self.better_side == BETTER_REVISED else self.source

    @property
    def worse_text(self) -> str:
        return self.source if self.better_side == BETTER_REVISED else self.revised

    def key(self) -> str:
        return (
            f"{self.doc_id}\x1f{self.editor}\x1f{self.paragraph_index}"
            f"\x1f{self.edit_index}\x1f{self.aspect.raw_label}"
        )


def extract_pairs(docs, doc_ids=None) -> list[SnippetPair]:
    """One pair per (edit, label) over the selected documents.

    Context is the enclosing paragraph in source coordinates; an edit
    reaching past the paragraph end widens the window. Pairs come out in
    deterministic (doc id, editor, edit, label) order. Edits that cannot
    produce a valid pair (no paragraph, or identical/empty sides) are
    skipped and counted in a warning.
    """
    pairs = []
    skipped = 0
    for doc in sorted(docs, key=lambda d: (d.id, d.editor)):
        if doc_ids is not None and doc.id not in doc_ids:
            continue
        full = source_text(doc)
        spans = paragraph_spans(doc)
        for edit_index, edit in enumerate(doc.edits):
            para = locate_paragraph(spans, edit.span.start)
            if para is None:
                skipped += 1
                continue
            lo = para.start
            hi = max(para.end, edit.span.end)
            snippet_src = full[lo:hi]
            snippet_rev = (
                full[lo : edit.span.start] + edit.tgt + full[edit.span.end : hi]
            )
            if not snippet_src or not snippet_rev or snippet_src == snippet_rev:
                skipped += 1
                continue
            for label in edit.labels:
                pairs.append(
                    SnippetPair(
                        source=snippet_src,
                        revised=snippet_rev,
                        aspect=label,
                        doc_id=doc.id,
                        editor=doc.editor,
                        paragraph_index=para.index,
                        edit_index=edit_index,
                    )
                )
    if skipped:
        log.warning("skipped %d edits that yield no usable snippet pair", skipped)
    return pairs


@dataclass(frozen=True)
class SplitSpec:
    train_doc_ids: frozenset
    test_doc_ids: frozenset
    seed: int | None = None

    def __post_init__(self):
        if self.train_doc_ids & self.test_doc_ids:
            raise ValueError("train and test doc ids overlap")


def _parse_ratio(ratio) -> tuple[int, int]:
    if isinstance(ratio, str):
        train, _, test = ratio.partition(":")
        return int(train), int(test)
    train, test = ratio
    return int(train), int(test)


def split_corpus(docs, ratio=(3, 1), seed: int = 0) -> SplitSpec:
    """Paper-level split: all editors' versions of a paper land on the
    same side. Reproducible for a fixed seed."""
    train_share, test_share = _parse_ratio(ratio)
    papers = sorted({doc.id for doc in docs})
    n = len(papers)
    n_train = round(n * train_share / (train_share + test_share))
    if not 0 < n_train < n:
        raise ValueError(
            f"ratio {train_share}:{test_share} infeasible for {n} papers"
        )
    shuffled = papers[:]
    random.Random(seed).shuffle(shuffled)
    return SplitSpec(
        train_doc_ids=frozenset(shuffled[:n_train]),
        test_doc_ids=frozenset(shuffled[n_train:]),
        seed=seed,
    )


def save_split(split: SplitSpec, path) -> None:
    payload = {
        "seed": split.seed,
        "train": sorted(split.train_doc_ids),
        "test": sorted(split.test_doc_ids),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_split(path) -> SplitSpec:
    """Read a split file: either the JSON emitted by save_split or a plain
    newline-delimited id list (treated as the test side)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except ValueError:
        ids = frozenset(line.strip() for line in text.splitlines() if line.strip())
        return SplitSpec(train_doc_ids=frozenset(), test_doc_ids=ids)
    return SplitSpec(
        train_doc_ids=frozenset(payload.get("train", [])),
        test_doc_ids=frozenset(payload.get("test", [])),
        seed=payload.get("seed"),
    )


def export_training_pairs(pairs, swap_fraction: float = 0.5, seed: int = 0) -> list[dict]:
    """Labeled (a, b) pairs for classifier training.

    Exactly round(swap_fraction * n) pairs carry the revised text in slot
    ``a``; the selection is a seeded shuffle, the emission order is the
    input order. ``label`` names the revised slot.
    """
    if not 0.0 <= swap_fraction <= 1.0:
        raise ValueError("swap_fraction must be in [0, 1]")
    pairs = list(pairs)
    n = len(pairs)
    n_swapped = round(swap_fraction * n)
    indices = list(range(n))
    random.Random(seed).shuffle(indices)
    swapped = set(indices[:n_swapped])
    out = []
    for i, pair in enumerate(pairs):
        if i in swapped:
            out.append({"a": pair.revised, "b": pair.source, "label": "a"})
        else:
            out.append({"a": pair.source, "b": pair.revised, "label": "b"})
    return out


# ---------------------------------------------------------------------------
# pair (de)serialization

PAIR_FIELDS = (
    "source",
    "revised",
    "aspect",
    "raw_label",
    "doc_id",
    "editor",
    "paragraph_index",
    "edit_index",
    "better_side",
)


def pair_to_dict(pair: SnippetPair) -> dict:
    record = asdict(pair)
    record["aspect"] = pair.aspect.name.value
    record["raw_label"] = pair.aspect.raw_label
    return {key: record[key] for key in PAIR_FIELDS}


def pair_from_dict(record: dict) -> SnippetPair:
    return SnippetPair(
        source=record["source"],
        revised=record["revised"],
        aspect=EditAspect(Aspect(record["aspect"]), record["raw_label"]),
        doc_id=record["doc_id"],
        editor=record["editor"],
        paragraph_index=int(record["paragraph_index"]),
        edit_index=int(record["edit_index"]),
        better_side=record.get("better_side", BETTER_REVISED),
    )


def write_pairs_jsonl(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair_to_dict(pair), ensure_ascii=False) + "\n")


def read_pairs_jsonl(path) -> list[SnippetPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(pair_from_dict(json.loads(line)))
    return pairs


def write_pairs_csv(pairs, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PAIR_FIELDS)
        writer.writeheader()
        for pair in pairs:
            writer.writerow(pair_to_dict(pair))
