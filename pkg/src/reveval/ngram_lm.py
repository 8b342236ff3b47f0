"""Statistical n-gram language model with Kneser-Ney smoothing.

Serves as the native per-token perplexity scorer. The highest order uses
raw counts, lower orders use continuation counts, and the recursion
bottoms out in a uniform distribution over the prediction vocabulary so
every word (including ``<unk>``) keeps positive probability.
"""

from __future__ import annotations

import math
import pickle
from collections import Counter
from pathlib import Path

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

MAGIC = b"NGLM1"

# Used when the count-of-counts are too degenerate to estimate the
# modified Kneser-Ney discounts (tiny corpora).
FALLBACK_DISCOUNT = 0.75


def _estimate_discounts(count_values) -> tuple[float, float, float]:
    """Modified Kneser-Ney discounts from count-of-counts, with an
    absolute-discounting fallback when the estimates are unusable."""
    cc = Counter()
    for value in count_values:
        if value <= 4:
            cc[value] += 1
    n1, n2, n3, n4 = cc[1], cc[2], cc[3], cc[4]
    if min(n1, n2, n3, n4) == 0:
        return (FALLBACK_DISCOUNT,) * 3
    y = n1 / (n1 + 2.0 * n2)
    d1 = 1.0 - 2.0 * y * n2 / n1
    d2 = 2.0 - 3.0 * y * n3 / n2
    d3 = 3.0 - 4.0 * y * n4 / n3
    if not (0.0 <= d1 <= 1.0 and 0.0 <= d2 <= 2.0 and 0.0 <= d3 <= 3.0):
        return (FALLBACK_DISCOUNT,) * 3
    return d1, d2, d3


class NgramModel:
    """Immutable after fitting; scoring is reentrant."""

    def __init__(self, order, min_count, vocab, levels, discounts):
        self.order = order
        self.min_count = min_count
        self.vocab = frozenset(vocab)  # prediction vocabulary, BOS excluded
        # levels[k][ctx] = (word counts, total, discounted mass); contexts
        # are (k-1)-tuples. Level ``order`` holds raw counts, the rest
        # continuation counts.
        self._levels = levels
        self._discounts = discounts

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _map(self, token: str) -> str:
        return token if token in self.vocab else UNK

    def _prob(self, k, ctx, word) -> float:
        if k == 0:
            return 1.0 / self.vocab_size
        entry = self._levels[k].get(ctx)
        if entry is None:
            return self._prob(k - 1, ctx[1:], word)
        counts, total, gamma_mass = entry
        d1, d2, d3 = self._discounts[k]
        count = counts.get(word, 0)
        if count == 0:
            discounted = 0.0
        elif count == 1:
            discounted = count - d1
        elif count == 2:
            discounted = count - d2
        else:
            discounted = count - d3
        lower = self._prob(k - 1, ctx[1:], word)
        return max(discounted, 0.0) / total + (gamma_mass / total) * lower

    def prob(self, word: str, context=()) -> float:
        """p(word | context); context is the preceding tokens, padding not
        required (the last order-1 are used, shorter contexts back off)."""
        ctx = tuple(self._map(t) if t != BOS else BOS for t in context)
        ctx = ctx[-(self.order - 1) :] if self.order > 1 else ()
        k = len(ctx) + 1
        return self._prob(k, ctx, self._map(word))

    def log_prob(self, tokens, include_eos: bool = True) -> float:
        """Natural-log probability of a token sequence with BOS padding
        and (by default) the EOS terminator."""
        tokens = list(tokens)
        if not tokens:
            raise ValueError("cannot score an empty token sequence")
        mapped = [self._map(t) for t in tokens]
        padded = [BOS] * (self.order - 1) + mapped
        if include_eos:
            padded.append(EOS)
        total = 0.0
        for i in range(self.order - 1, len(padded)):
            ctx = tuple(padded[max(0, i - self.order + 1) : i])
            total += math.log(self._prob(len(ctx) + 1, ctx, padded[i]))
        return total

    def perplexity(self, tokens) -> float:
        """exp(-log_prob / N) with N counting the EOS event but not the
        BOS padding."""
        tokens = list(tokens)
        if not tokens:
            raise ValueError("cannot compute perplexity of an empty sequence")
        n = len(tokens) + 1
        return math.exp(-self.log_prob(tokens) / n)

    def corpus_perplexity(self, sentences) -> float:
        """Perplexity over a batch of sentences; invariant to their order."""
        sentences = [list(s) for s in sentences if s]
        if not sentences:
            raise ValueError("cannot compute perplexity of an empty corpus")
        log_total = sum(self.log_prob(s) for s in sentences)
        n = sum(len(s) + 1 for s in sentences)
        return math.exp(-log_total / n)

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        levels = {
            k: sorted(
                (list(ctx), sorted(counts.items()))
                for ctx, (counts, _total, _mass) in table.items()
            )
            for k, table in self._levels.items()
        }
        payload = {
            "order": self.order,
            "min_count": self.min_count,
            "vocab": sorted(self.vocab),
            "levels": levels,
            "discounts": {k: list(v) for k, v in self._discounts.items()},
        }
        return MAGIC + pickle.dumps(payload, protocol=4)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "NgramModel":
        if blob[: len(MAGIC)] != MAGIC:
            found = blob[: len(MAGIC)]
            raise ValueError(
                f"not a recognized model file (magic {found!r}, expected {MAGIC!r})"
            )
        payload = pickle.loads(blob[len(MAGIC) :])
        discounts = {int(k): tuple(v) for k, v in payload["discounts"].items()}
        levels = {}
        for k, entries in payload["levels"].items():
            table = {}
            for ctx, counts in entries:
                counts = dict(counts)
                table[tuple(ctx)] = _finalize_context(counts, discounts[int(k)])
            levels[int(k)] = table
        return cls(
            payload["order"], payload["min_count"], payload["vocab"], levels, discounts
        )

    @classmethod
    def load(cls, path) -> "NgramModel":
        return cls.from_bytes(Path(path).read_bytes())


def _finalize_context(counts: dict, discounts) -> tuple[dict, int, float]:
    d1, d2, d3 = discounts
    total = sum(counts.values())
    gamma_mass = 0.0
    # Sorted iteration keeps the float sum identical across fit and load.
    for _word, value in sorted(counts.items()):
        if value == 1:
            gamma_mass += d1
        elif value == 2:
            gamma_mass += d2
        else:
            gamma_mass += d3
    return counts, total, gamma_mass


def fit(tokenized_sentences, order: int = 3, min_count: int = 1) -> NgramModel:
    """Fit a Kneser-Ney model.

    Tokens seen fewer than ``min_count`` times fold into ``<unk>``; the
    default keeps every training token.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    sentences = [list(s) for s in tokenized_sentences]
    if not sentences or all(not s for s in sentences):
        raise ValueError("cannot fit a model on an empty corpus")

    token_counts = Counter(t for s in sentences for t in s)
    vocab = {t for t, c in token_counts.items() if c >= min_count}
    vocab |= {EOS, UNK}

    def mapped(token):
        return token if token in vocab else UNK

    # Raw counts at the highest order.
    raw: dict[tuple, Counter] = {}
    for sentence in sentences:
        padded = [BOS] * (order - 1) + [mapped(t) for t in sentence] + [EOS]
        for i in range(order - 1, len(padded)):
            ctx = tuple(padded[i - order + 1 : i])
            raw.setdefault(ctx, Counter())[padded[i]] += 1

    # Continuation counts for each lower order: one per distinct
    # higher-order type extending the gram to the left.
    tables: dict[int, dict[tuple, Counter]] = {order: raw}
    for k in range(order - 1, 0, -1):
        lower: dict[tuple, Counter] = {}
        for ctx, counts in tables[k + 1].items():
            suffix = ctx[1:]
            for word in counts:
                lower.setdefault(suffix, Counter())[word] += 1
        tables[k] = lower

    discounts = {}
    levels = {}
    for k, table in tables.items():
        values = [v for counts in table.values() for v in counts.values()]
        discounts[k] = _estimate_discounts(values)
        levels[k] = {
            ctx: _finalize_context(dict(counts), discounts[k])
            for ctx, counts in table.items()
        }
    return NgramModel(order, min_count, vocab, levels, discounts)


def fit_text(lines, order: int = 3, min_count: int = 1) -> NgramModel:
    """Fit from raw text lines, one sentence per line, using the shared
    tokenizer."""
    from reveval.gec_metrics import tokenize

    return fit(
        [tokenize(line).tokens for line in lines if line.strip()],
        order=order,
        min_count=min_count,
    )


def log_prob(model: NgramModel, tokens) -> float:
    return model.log_prob(tokens)


def perplexity(model: NgramModel, tokens) -> float:
    return model.perplexity(tokens)
