from __future__ import annotations

import json

import pytest

from reveval.corpus_model import (
    Aspect,
    apply_single_edit,
    parse_corpus,
    parse_document_string,
    source_text,
)
from reveval.pair_extraction import (
    SnippetPair,
    export_training_pairs,
    extract_pairs,
    load_split,
    pair_from_dict,
    pair_to_dict,
    read_pairs_jsonl,
    save_split,
    split_corpus,
    write_pairs_csv,
    write_pairs_jsonl,
)


@pytest.fixture(scope="module")
def fixture_docs(fixture_corpus_dir):
    return parse_corpus(fixture_corpus_dir)


@pytest.fixture(scope="module")
def fixture_pairs(fixture_docs):
    return extract_pairs(fixture_docs)


def _make_doc(doc_id, editor, body):
    return parse_document_string(
        f'<doc id="{doc_id}" editor="{editor}" format="Conference"'
        f' position="Student" region="Native">{body}</doc>'
    )


def test_fixture_pair_count(fixture_pairs):
    # Hand count: P001/A has 3 edits, one with two labels (4 pairs),
    # P001/B has 2 edits (2), P002/A has 2 edits (2).
    assert len(fixture_pairs) == 8
    by_doc = {}
    for pair in fixture_pairs:
        by_doc.setdefault((pair.doc_id, pair.editor), 0)
        by_doc[(pair.doc_id, pair.editor)] += 1
    assert by_doc == {("P001", "A"): 4, ("P001", "B"): 2, ("P002", "A"): 2}


def test_pair_count_equals_label_count(fixture_docs, fixture_pairs):
    label_total = sum(len(e.labels) for d in fixture_docs for e in d.edits)
    assert len(fixture_pairs) == label_total


def test_multi_label_edit_duplicates_text(fixture_pairs):
    clarity = next(p for p in fixture_pairs if p.aspect.name is Aspect.CLARITY)
    style = next(p for p in fixture_pairs if p.aspect.name is Aspect.STYLE)
    assert clarity.source == style.source
    assert clarity.revised == style.revised
    assert clarity.edit_index == style.edit_index


def test_two_edits_three_labels_three_pairs():
    doc = _make_doc(
        "D",
        "A",
        '<abstract><text>x </text><edit type="grammar" crr="b">a</edit>'
        '<text> y </text><edit type="clarity, style" crr="d">c</edit></abstract>',
    )
    pairs = extract_pairs([doc])
    assert len(pairs) == 3


def test_pairs_match_corpus_model(fixture_docs, fixture_pairs):
    docs = {(d.id, d.editor): d for d in fixture_docs}
    for pair in fixture_pairs:
        doc = docs[(pair.doc_id, pair.editor)]
        expected_src, expected_rev = apply_single_edit(doc, pair.edit_index)
        assert pair.source == expected_src
        assert pair.revised == expected_rev
        assert pair.source in source_text(doc)


def test_zero_edit_doc_yields_no_pairs():
    doc = _make_doc("D", "A", "<abstract><text>nothing here</text></abstract>")
    assert extract_pairs([doc]) == []


def test_identity_edit_skipped(caplog):
    doc = _make_doc(
        "D",
        "A",
        '<abstract><text>x </text><edit type="grammar" crr="same">same</edit></abstract>',
    )
    assert extract_pairs([doc]) == []


def test_extraction_deterministic(fixture_docs, tmp_path):
    first = extract_pairs(fixture_docs)
    second = extract_pairs(list(reversed(fixture_docs)))
    assert first == second
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_pairs_jsonl(first, a)
    write_pairs_jsonl(second, b)
    assert a.read_bytes() == b.read_bytes()


def test_doc_id_filter(fixture_docs):
    pairs = extract_pairs(fixture_docs, doc_ids={"P002"})
    assert {p.doc_id for p in pairs} == {"P002"}
    assert len(pairs) == 2


def test_snippet_pair_guards():
    from reveval.corpus_model import classify_label

    with pytest.raises(ValueError):
        SnippetPair("same", "same", classify_label("grammar"), "D", "A", 0, 0)
    with pytest.raises(ValueError):
        SnippetPair("", "x", classify_label("grammar"), "D", "A", 0, 0)


# ---------------------------------------------------------------------------
# splits


def _paper_docs(n_papers, editors=("A", "B", "C")):
    docs = []
    for i in range(n_papers):
        for editor in editors:
            docs.append(
                _make_doc(
                    f"P{i:03d}",
                    editor,
                    "<abstract><text>t </text>"
                    '<edit type="grammar" crr="b">a</edit></abstract>',
                )
            )
    return docs


def test_split_64_papers():
    docs = _paper_docs(64)
    split = split_corpus(docs, ratio=(3, 1), seed=1)
    assert len(split.train_doc_ids) == 48
    assert len(split.test_doc_ids) == 16
    assert not split.train_doc_ids & split.test_doc_ids
    assert split.train_doc_ids | split.test_doc_ids == {d.id for d in docs}


def test_split_editors_stay_together():
    docs = _paper_docs(8)
    split = split_corpus(docs, ratio=(3, 1), seed=5)
    for doc in docs:
        in_train = doc.id in split.train_doc_ids
        peers = [d for d in docs if d.id == doc.id]
        for peer in peers:
            assert (peer.id in split.train_doc_ids) == in_train


def test_split_four_papers():
    split = split_corpus(_paper_docs(4), ratio="3:1", seed=0)
    assert len(split.train_doc_ids) == 3
    assert len(split.test_doc_ids) == 1


def test_split_seed_reproducible():
    docs = _paper_docs(12)
    assert split_corpus(docs, seed=9) == split_corpus(docs, seed=9)
    assert split_corpus(docs, seed=9) != split_corpus(docs, seed=10)


def test_split_infeasible():
    with pytest.raises(ValueError):
        split_corpus(_paper_docs(1), ratio=(3, 1), seed=0)


def test_split_round_trip(tmp_path):
    split = split_corpus(_paper_docs(8), seed=3)
    path = tmp_path / "split.json"
    save_split(split, path)
    assert load_split(path) == split


def test_split_plain_id_list(tmp_path):
    path = tmp_path / "test.ids"
    path.write_text("P001\nP002\n", encoding="utf-8")
    split = load_split(path)
    assert split.test_doc_ids == {"P001", "P002"}
    assert split.train_doc_ids == frozenset()


# ---------------------------------------------------------------------------
# training export


def test_export_exact_swap_count(fixture_pairs):
    n = 10
    pairs = (fixture_pairs * 2)[:n]
    out = export_training_pairs(pairs, swap_fraction=0.5, seed=4)
    assert len(out) == n
    assert sum(1 for rec in out if rec["label"] == "a") == 5
    for rec, pair in zip(out, pairs):
        if rec["label"] == "a":
            assert rec["a"] == pair.revised and rec["b"] == pair.source
        else:
            assert rec["a"] == pair.source and rec["b"] == pair.revised


def test_export_no_swaps(fixture_pairs):
    out = export_training_pairs(fixture_pairs, swap_fraction=0.0, seed=1)
    assert all(rec["label"] == "b" for rec in out)


def test_export_seeded(fixture_pairs):
    a = export_training_pairs(fixture_pairs, 0.5, seed=7)
    b = export_training_pairs(fixture_pairs, 0.5, seed=7)
    assert a == b


def test_export_bad_fraction(fixture_pairs):
    with pytest.raises(ValueError):
        export_training_pairs(fixture_pairs, swap_fraction=1.5)


# ---------------------------------------------------------------------------
# serialization


def test_pair_dict_round_trip(fixture_pairs):
    for pair in fixture_pairs:
        assert pair_from_dict(pair_to_dict(pair)) == pair


def test_jsonl_round_trip(fixture_pairs, tmp_path):
    path = tmp_path / "pairs.jsonl"
    write_pairs_jsonl(fixture_pairs, path)
    assert read_pairs_jsonl(path) == fixture_pairs
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert {"source", "revised", "aspect", "doc_id"} <= set(first)


def test_csv_export(fixture_pairs, tmp_path):
    import csv as csv_module

    path = tmp_path / "pairs.csv"
    write_pairs_csv(fixture_pairs, path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv_module.DictReader(fh))
    assert len(rows) == len(fixture_pairs)
    # Text columns with embedded newlines survive CSV escaping.
    assert rows[0]["source"] == fixture_pairs[0].source
