from __future__ import annotations

import math
import random

import pytest

from reveval.gec_metrics import tokenize
from reveval.ngram_lm import EOS, UNK, NgramModel, fit, fit_text


@pytest.fixture(scope="module")
def corpus_lines(fluency_corpus_path):
    return fluency_corpus_path.read_text(encoding="utf-8").splitlines()


@pytest.fixture(scope="module")
def trigram_model(corpus_lines):
    return fit_text(corpus_lines[:120], order=3)


def test_fit_rejects_empty():
    with pytest.raises(ValueError):
        fit([])
    with pytest.raises(ValueError):
        fit([[]])


def test_repeated_bigram_probabilities():
    model = fit([["a", "b"]] * 20, order=2)
    assert model.prob("b", ("a",)) > 0.5
    assert model.prob(UNK, ("a",)) > 0.0
    assert model.prob("never-seen", ("a",)) > 0.0


def test_unigram_near_uniform():
    # Brute-force oracle: count / normalize over the k tokens plus EOS.
    k = 10
    tokens = [f"w{i}" for i in range(k)]
    model = fit([tokens], order=1)
    oracle = 1.0 / (k + 1)
    probs = [model.prob(t) for t in tokens]
    assert max(probs) == min(probs)
    for p in probs:
        assert abs(p - oracle) < 0.02


def test_normalization_over_vocabulary(trigram_model):
    model = trigram_model
    rng = random.Random(0)
    contexts = list(model._levels[model.order].keys())
    sampled = rng.sample(contexts, 30)
    # Also check contexts never seen in training.
    sampled += [("zzz", "qqq"), ("the", "zzz"), (UNK, UNK)]
    for ctx in sampled:
        total = sum(model.prob(w, ctx) for w in model.vocab)
        assert total == pytest.approx(1.0, abs=1e-6)


def test_all_probabilities_positive(trigram_model):
    model = trigram_model
    for word in ["the", UNK, EOS, "zzzz-not-seen"]:
        assert model.prob(word, ("of", "the")) > 0.0


def test_log_prob_non_positive(trigram_model):
    for line in ["the model was trained", "completely novel words here"]:
        assert trigram_model.log_prob(tokenize(line).tokens) <= 0.0


def test_log_prob_deterministic(trigram_model):
    toks = tokenize("the results show that the model improves").tokens
    assert trigram_model.log_prob(toks) == trigram_model.log_prob(toks)


def test_prefix_log_prob_monotone(trigram_model):
    # Appending any token, possible or not, never increases the prefix
    # (pre-terminator) log probability.
    rng = random.Random(1)
    words = sorted(trigram_model.vocab - {EOS})
    for _ in range(50):
        base = [rng.choice(words) for _ in range(rng.randint(1, 8))]
        extended = base + [rng.choice(words + ["zzz-unseen"])]
        lp_base = trigram_model.log_prob(base, include_eos=False)
        lp_ext = trigram_model.log_prob(extended, include_eos=False)
        assert lp_ext <= lp_base + 1e-12


def test_training_sentences_beat_permutations(corpus_lines):
    model = fit_text(corpus_lines[:120], order=3)
    rng = random.Random(7)
    diffs = []
    for line in corpus_lines[:120]:
        toks = list(tokenize(line).tokens)
        if len(toks) < 4:
            continue
        shuffled = toks[:]
        while shuffled == toks:
            rng.shuffle(shuffled)
        diffs.append(model.log_prob(toks) - model.log_prob(shuffled))
    assert len(diffs) >= 100
    assert sum(diffs) / len(diffs) > 0.0


def test_held_out_beats_shuffled(corpus_lines, trigram_model):
    held_out = corpus_lines[120:]
    assert len(held_out) >= 40
    rng = random.Random(13)
    wins = trials = 0
    while trials < 100:
        toks = list(tokenize(held_out[trials % len(held_out)]).tokens)
        shuffled = toks[:]
        while shuffled == toks:
            rng.shuffle(shuffled)
        if trigram_model.perplexity(toks) < trigram_model.perplexity(shuffled):
            wins += 1
        trials += 1
    assert wins >= 95


def test_perplexity_definition(trigram_model):
    toks = tokenize("the model was trained on the training data").tokens
    lp = trigram_model.log_prob(toks)
    expected = math.exp(-lp / (len(toks) + 1))
    assert trigram_model.perplexity(toks) == expected
    assert trigram_model.perplexity(toks) >= 1.0


def test_degenerate_corpus_perplexity_near_one():
    model = fit([["a"] * 50] * 10, order=2)
    ppl = model.perplexity(["a"] * 200)
    assert ppl < 1.3


def test_corpus_perplexity_order_invariant(trigram_model, corpus_lines):
    sentences = [tokenize(l).tokens for l in corpus_lines[120:135]]
    forward = trigram_model.corpus_perplexity(sentences)
    backward = trigram_model.corpus_perplexity(list(reversed(sentences)))
    assert forward == pytest.approx(backward, rel=1e-12)


def test_empty_inputs_rejected(trigram_model):
    with pytest.raises(ValueError):
        trigram_model.log_prob([])
    with pytest.raises(ValueError):
        trigram_model.perplexity([])


def test_min_count_folds_rare_tokens():
    sentences = [["common", "common", "rare"]] + [["common", "common"]] * 5
    model = fit(sentences, order=2, min_count=2)
    assert "rare" not in model.vocab
    assert "common" in model.vocab


def test_serialization_round_trip(tmp_path, trigram_model):
    path = tmp_path / "model.nglm"
    trigram_model.save(path)
    loaded = NgramModel.load(path)
    toks = tokenize("the corpus contains papers sampled from a collection").tokens
    assert loaded.perplexity(toks) == trigram_model.perplexity(toks)
    assert loaded.vocab == trigram_model.vocab


def test_serialization_deterministic(corpus_lines):
    a = fit_text(corpus_lines[:50], order=3).to_bytes()
    b = fit_text(corpus_lines[:50], order=3).to_bytes()
    assert a == b
    assert a.startswith(b"NGLM1")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.nglm"
    path.write_bytes(b"NOPE!" + b"junk")
    with pytest.raises(ValueError, match="magic"):
        NgramModel.load(path)
