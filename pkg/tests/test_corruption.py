from __future__ import annotations

import random
from collections import Counter
from dataclasses import replace

import pytest

from synth import synth_documents
from reveval.corpus_model import Aspect
from reveval.corruption import (
    NoiseConfig,
    build_worse_testset,
    detokenize,
    inject_noise,
    parse_noise_config,
    shuffle_sentences,
    split_sentences,
)
from reveval.gec_metrics import apply_edit_spans, tokenize
from reveval.pair_extraction import BETTER_SOURCE, write_pairs_jsonl


@pytest.fixture(scope="module")
def corpus_lines(fluency_corpus_path):
    return fluency_corpus_path.read_text(encoding="utf-8").splitlines()


# ---------------------------------------------------------------------------
# sentence shuffling


def test_shuffle_two_sentences_forced():
    text = "A b. C d."
    shuffled, changed = shuffle_sentences(text, seed=0)
    assert changed
    assert shuffled == "C d. A b."


def test_shuffle_single_sentence_flagged():
    text = "Only one sentence here."
    shuffled, changed = shuffle_sentences(text, seed=3)
    assert not changed
    assert shuffled == text


def test_shuffle_preserves_sentence_multiset(corpus_lines):
    rng = random.Random(8)
    for trial in range(100):
        k = rng.randint(2, 6)
        paragraph = " ".join(rng.choice(corpus_lines) for _ in range(k))
        shuffled, changed = shuffle_sentences(paragraph, seed=trial)
        assert changed
        assert Counter(split_sentences(shuffled)) == Counter(split_sentences(paragraph))


def test_shuffle_seeded():
    text = "First point. Second point. Third point. Fourth point."
    assert shuffle_sentences(text, 9) == shuffle_sentences(text, 9)


# ---------------------------------------------------------------------------
# noise injection


def test_all_zero_rates_identity(corpus_lines):
    cfg = NoiseConfig(seed=1)
    text = corpus_lines[0]
    out, spans = inject_noise(text, cfg)
    assert out == text
    assert spans == []


def test_forced_article_drop():
    out, spans = inject_noise("the cat", NoiseConfig(seed=0, article_drop=1.0))
    assert out == "cat"
    assert len(spans) == 1 and spans[0].replacement == ""


def test_article_swap_changes_article():
    out, spans = inject_noise("the cat", NoiseConfig(seed=0, article_swap=1.0))
    first = out.split()[0]
    assert first in ("a", "an") and first != "the"


def test_preposition_swap():
    out, _ = inject_noise(
        "results on the data", NoiseConfig(seed=2, preposition_swap=1.0)
    )
    assert out.split()[1] in ("in", "at", "for", "to", "of", "with")


def test_verb_form_perturb_suffixes():
    out, spans = inject_noise(
        "she walked home", NoiseConfig(seed=0, verb_form_perturb=1.0)
    )
    assert "walk" in out and "walked" not in out


def test_adjacent_swap():
    out, spans = inject_noise("alpha beta", NoiseConfig(seed=1, adjacent_swap=1.0))
    assert out == "beta alpha"


def test_comma_toggle_removes_and_inserts():
    out, _ = inject_noise("yes , sure", NoiseConfig(seed=0, comma_toggle=1.0))
    assert "," not in out
    out, _ = inject_noise("slow and steady", NoiseConfig(seed=0, comma_toggle=1.0))
    assert out == "slow, and steady"


def test_spans_reconstruct_corruption(corpus_lines):
    cfg = NoiseConfig.uniform(seed=5, rate=0.4)
    for i, line in enumerate(corpus_lines[:40]):
        out, spans = inject_noise(line, replace(cfg, seed=cfg.seed + i))
        rebuilt = apply_edit_spans(list(tokenize(line).tokens), spans)
        assert detokenize(rebuilt) == out or (not spans and out == line)
        # Tokens outside the spans are untouched.
        source_tokens = list(tokenize(line).tokens)
        changed = set()
        for span in spans:
            changed.update(range(span.start, span.end))
        out_tokens = apply_edit_spans(source_tokens, spans)
        untouched_src = [t for i, t in enumerate(source_tokens) if i not in changed]
        assert all(t in out_tokens or t in untouched_src for t in untouched_src)


def test_noise_reproducible(corpus_lines):
    cfg = NoiseConfig.uniform(seed=11, rate=0.3)
    line = corpus_lines[3]
    assert inject_noise(line, cfg) == inject_noise(line, cfg)


def test_rate_concentration():
    # 10k eligible article sites, only article_drop active: the perturbed
    # fraction concentrates around the configured rate.
    rate = 0.3
    text = " ".join(["the cat sat"] * 10000)
    cfg = NoiseConfig(seed=13, article_drop=rate)
    _, spans = inject_noise(text, cfg)
    assert len(spans) / 10000 == pytest.approx(rate, abs=0.03)


def test_invalid_rates_rejected():
    with pytest.raises(ValueError):
        NoiseConfig(seed=0, article_drop=1.5)


def test_parse_noise_config(tmp_path):
    path = tmp_path / "noise.cfg"
    path.write_text(
        "# reliability run\nseed = 7\narticle_drop = 0.25\ncomma_toggle=0.1\n",
        encoding="utf-8",
    )
    cfg = parse_noise_config(path)
    assert cfg.seed == 7
    assert cfg.article_drop == 0.25
    assert cfg.comma_toggle == 0.1
    assert cfg.article_swap == 0.0
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_rule = 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        parse_noise_config(bad)


# ---------------------------------------------------------------------------
# worse-quality test sets


def test_worse_testset_shuffled_doc_count(corpus_lines):
    docs = synth_documents(corpus_lines, n_docs=64, paras_per_doc=2)
    cfg = NoiseConfig.uniform(seed=3, rate=0.5, shuffle_doc_fraction=0.05)
    pairs = build_worse_testset(docs, cfg)
    shuffled_docs = {
        p.doc_id for p in pairs if p.aspect.raw_label == "sentence-shuffle"
    }
    assert len(shuffled_docs) == 3  # round(0.05 * 64)


def test_worse_testset_min_one_shuffled(corpus_lines):
    docs = synth_documents(corpus_lines, n_docs=4, paras_per_doc=2)
    cfg = NoiseConfig.uniform(seed=3, rate=0.5, shuffle_doc_fraction=0.05)
    pairs = build_worse_testset(docs, cfg)
    shuffled_docs = {
        p.doc_id for p in pairs if p.aspect.raw_label == "sentence-shuffle"
    }
    assert len(shuffled_docs) == 1


def test_worse_testset_all_zero_empty(corpus_lines):
    docs = synth_documents(corpus_lines, n_docs=6)
    cfg = NoiseConfig(seed=0, shuffle_doc_fraction=0.0)
    assert build_worse_testset(docs, cfg) == []


def test_worse_testset_pairs_differ_and_label_source(corpus_lines):
    docs = synth_documents(corpus_lines, n_docs=10)
    cfg = NoiseConfig.uniform(seed=21, rate=0.4)
    pairs = build_worse_testset(docs, cfg)
    assert pairs
    for pair in pairs:
        assert pair.source != pair.revised
        assert pair.better_side == BETTER_SOURCE
        assert pair.better_text == pair.source
        assert pair.aspect.name in (Aspect.GRAMMATICALITY, Aspect.CONSISTENCY)


def test_worse_testset_reproducible(corpus_lines, tmp_path):
    docs = synth_documents(corpus_lines, n_docs=12)
    cfg = NoiseConfig.uniform(seed=2, rate=0.35)
    first = build_worse_testset(docs, cfg)
    second = build_worse_testset(list(reversed(docs)), cfg)
    assert first == second
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_pairs_jsonl(first, a)
    write_pairs_jsonl(second, b)
    assert a.read_bytes() == b.read_bytes()
