"""Reference-based scoring: tokenizer, sampled GLEU, and span F0.5.

GLEU here is the error-correction variant: n-gram matches against a
sampled reference are rewarded, while n-grams the hypothesis retained
from the source that the reference dropped are penalized.
"""

from __future__ import annotations

import logging
import math
import random
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass

log = logging.getLogger(__name__)

_CHUNK = re.compile(r"\S+")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


@dataclass(frozen=True)
class TokenSeq:
    """Tokens plus their character spans into the original text."""

    tokens: tuple[str, ...]
    offsets: tuple[tuple[int, int], ...]
    text: str

    def __len__(self):
        return len(self.tokens)

    def reconstruct(self) -> str:
        """Rebuild the original string from tokens and recorded gaps."""
        parts = []
        cursor = 0
        for token, (start, end) in zip(self.tokens, self.offsets):
            parts.append(self.text[cursor:start])
            parts.append(token)
            cursor = end
        parts.append(self.text[cursor:])
        return "".join(parts)


def tokenize(text: str) -> TokenSeq:
    """Whitespace tokenization with leading/trailing punctuation split off.

    Each peeled punctuation character becomes its own token; case is
    preserved. Empty text yields an empty sequence.
    """
    tokens: list[str] = []
    offsets: list[tuple[int, int]] = []

    def emit(tok, start, end):
        tokens.append(tok)
        offsets.append((start, end))

    for m in _CHUNK.finditer(text):
        chunk, base = m.group(), m.start()
        lo, hi = 0, len(chunk)
        lead = []
        while lo < hi and _is_punct(chunk[lo]):
            lead.append(lo)
            lo += 1
        trail = []
        while hi > lo and _is_punct(chunk[hi - 1]):
            hi -= 1
            trail.append(hi)
        for pos in lead:
            emit(chunk[pos], base + pos, base + pos + 1)
        if hi > lo:
            emit(chunk[lo:hi], base + lo, base + hi)
        for pos in reversed(trail):
            emit(chunk[pos], base + pos, base + pos + 1)
    return TokenSeq(tuple(tokens), tuple(offsets), text)


# ---------------------------------------------------------------------------
# GLEU


@dataclass(frozen=True)
class GleuConfig:
    max_n: int = 4
    iterations: int = 500
    seed: int = 0
    epsilon_floor: float = 1e-9

    def __post_init__(self):
        if self.max_n < 1:
            raise ValueError("max_n must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class _InstanceStats:
    """Sufficient statistics of one instance against one reference."""

    hyp_len: int
    ref_len: int
    numerators: tuple[float, ...]  # per n, may be negative before flooring
    denominators: tuple[int, ...]


def _instance_stats(src_tokens, hyp_tokens, ref_tokens, max_n) -> _InstanceStats:
    numerators = []
    denominators = []
    for n in range(1, max_n + 1):
        hyp = ngram_counts(hyp_tokens, n)
        ref = ngram_counts(ref_tokens, n)
        src = ngram_counts(src_tokens, n)
        matches = sum((hyp & ref).values())
        retained = sum(
            min(count, src[gram]) for gram, count in hyp.items()
            if src[gram] and not ref[gram]
        )
        numerators.append(float(matches - retained))
        denominators.append(max(len(hyp_tokens) - n + 1, 0))
    return _InstanceStats(
        len(hyp_tokens), len(ref_tokens), tuple(numerators), tuple(denominators)
    )


def _score_from_totals(hyp_len, ref_len, numerators, denominators, cfg) -> float:
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for num, den in zip(numerators, denominators):
        if den == 0:
            # No n-grams of this order exist in the hypotheses: no evidence,
            # treated as a neutral factor.
            continue
        log_sum += math.log(max(num, cfg.epsilon_floor) / den)
    brevity = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    return brevity * math.exp(log_sum / cfg.max_n)


def _prepare(sources, hypotheses, references, cfg):
    if not (len(sources) == len(hypotheses) == len(references)):
        raise ValueError(
            "sources, hypotheses and references must have equal lengths"
            f" (got {len(sources)}, {len(hypotheses)}, {len(references)})"
        )
    if not sources:
        raise ValueError("empty corpus")
    stats = []
    for i, (src, hyp, refs) in enumerate(zip(sources, hypotheses, references)):
        if not refs:
            raise ValueError(f"instance {i} has an empty reference set")
        hyp_tokens = tokenize(hyp).tokens
        if not hyp_tokens:
            log.warning("instance %d: empty hypothesis contributes zero counts", i)
        src_tokens = tokenize(src).tokens
        stats.append(
            [
                _instance_stats(src_tokens, hyp_tokens, tokenize(ref).tokens, cfg.max_n)
                for ref in refs
            ]
        )
    return stats


def _sample_choices(stats, cfg):
    rng = random.Random(cfg.seed)
    return [
        [rng.randrange(len(per_ref)) for per_ref in stats]
        for _ in range(cfg.iterations)
    ]


def _iteration_score(stats, choices, cfg) -> float:
    hyp_len = ref_len = 0
    numerators = [0.0] * cfg.max_n
    denominators = [0] * cfg.max_n
    for per_ref, choice in zip(stats, choices):
        inst = per_ref[choice]
        hyp_len += inst.hyp_len
        ref_len += inst.ref_len
        for k in range(cfg.max_n):
            numerators[k] += inst.numerators[k]
            denominators[k] += inst.denominators[k]
    return _score_from_totals(hyp_len, ref_len, numerators, denominators, cfg)


def gleu_corpus(sources, hypotheses, references, cfg: GleuConfig | None = None) -> float:
    """Corpus GLEU in [0, 100]: one reference sampled per instance per
    iteration, scores averaged over iterations."""
    cfg = cfg or GleuConfig()
    stats = _prepare(sources, hypotheses, references, cfg)
    all_choices = _sample_choices(stats, cfg)
    scores = [_iteration_score(stats, choices, cfg) for choices in all_choices]
    return 100.0 * sum(scores) / len(scores)


@dataclass
class GleuReport:
    score: float
    std_dev: float
    per_instance: list[float]


def gleu_report(sources, hypotheses, references, cfg: GleuConfig | None = None) -> GleuReport:
    """Corpus score plus iteration spread and per-instance scores."""
    cfg = cfg or GleuConfig()
    stats = _prepare(sources, hypotheses, references, cfg)
    all_choices = _sample_choices(stats, cfg)
    scores = [_iteration_score(stats, choices, cfg) for choices in all_choices]
    mean = sum(scores) / len(scores)
    var = sum((s - mean) ** 2 for s in scores) / len(scores)

    per_instance = []
    for i, per_ref in enumerate(stats):
        freq = Counter(choices[i] for choices in all_choices)
        inst_score = sum(
            count
            * _score_from_totals(
                per_ref[r].hyp_len,
                per_ref[r].ref_len,
                per_ref[r].numerators,
                per_ref[r].denominators,
                cfg,
            )
            for r, count in freq.items()
        ) / cfg.iterations
        per_instance.append(100.0 * inst_score)
    return GleuReport(100.0 * mean, 100.0 * math.sqrt(var), per_instance)


# ---------------------------------------------------------------------------
# Token alignment and edit spans


@dataclass(frozen=True)
class EditSpan:
    """Token-level edit: replace source[start:end] with the replacement
    tokens (space-joined; empty string means deletion)."""

    start: int
    end: int
    replacement: str

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid edit span [{self.start}, {self.end})")

    @property
    def replacement_tokens(self) -> tuple[str, ...]:
        return tuple(self.replacement.split(" ")) if self.replacement else ()


def _sub_cost(a: str, b: str) -> float:
    if a == b:
        return 0.0
    if a.casefold() == b.casefold():
        return 0.5
    return 1.0


def align(source_tokens, target_tokens) -> tuple[float, list[tuple[str, int, int]]]:
    """Minimum-cost token alignment.

    Costs: match 0, case-only substitution 0.5, substitution 1,
    insertion/deletion 1, adjacent transposition 1. Returns the total cost
    and the operation list as ``(op, source_index, target_index)`` triples
    where the indices point just past the consumed tokens.
    """
    a, b = list(source_tokens), list(target_tokens)
    n, m = len(a), len(b)
    INF = float("inf")
    cost = [[INF] * (m + 1) for _ in range(n + 1)]
    back: list[list[str | None]] = [[None] * (m + 1) for _ in range(n + 1)]
    cost[0][0] = 0.0
    for i in range(n + 1):
        for j in range(m + 1):
            here = cost[i][j]
            if here == INF:
                continue
            if i < n and j < m:
                c = _sub_cost(a[i], b[j])
                op = "match" if c == 0.0 else "sub"
                if here + c < cost[i + 1][j + 1]:
                    cost[i + 1][j + 1] = here + c
                    back[i + 1][j + 1] = op
            if i < n and here + 1.0 < cost[i + 1][j]:
                cost[i + 1][j] = here + 1.0
                back[i + 1][j] = "del"
            if j < m and here + 1.0 < cost[i][j + 1]:
                cost[i][j + 1] = here + 1.0
                back[i][j + 1] = "ins"
            if (
                i + 1 < n
                and j + 1 < m
                and a[i] == b[j + 1]
                and a[i + 1] == b[j]
                and here + 1.0 < cost[i + 2][j + 2]
            ):
                cost[i + 2][j + 2] = here + 1.0
                back[i + 2][j + 2] = "trans"
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        op = back[i][j]
        ops.append((op, i, j))
        if op in ("match", "sub"):
            i, j = i - 1, j - 1
        elif op == "del":
            i -= 1
        elif op == "ins":
            j -= 1
        else:  # trans
            i, j = i - 2, j - 2
    ops.reverse()
    return cost[n][m], ops


def extract_edits(source_tokens, target_tokens, merge: bool = True) -> list[EditSpan]:
    """Edit spans from the minimum-cost alignment.

    With ``merge`` (the default) contiguous non-match operations collapse
    into one span; otherwise every operation yields its own span.
    """
    source_tokens = list(source_tokens)
    target_tokens = list(target_tokens)
    _, ops = align(source_tokens, target_tokens)
    spans: list[EditSpan] = []
    pending: tuple[int, int, int, int] | None = None  # (si, sj, ti, tj)

    def flush():
        nonlocal pending
        if pending is not None:
            si, sj, ti, tj = pending
            spans.append(EditSpan(si, sj, " ".join(target_tokens[ti:tj])))
            pending = None

    for op, i, j in ops:
        if op == "match":
            flush()
            continue
        src_lo, tgt_lo = {
            "sub": (i - 1, j - 1),
            "del": (i - 1, j),
            "ins": (i, j - 1),
            "trans": (i - 2, j - 2),
        }[op]
        if pending is None or not merge:
            flush()
            pending = (src_lo, i, tgt_lo, j)
        else:
            pending = (pending[0], i, pending[2], j)
    flush()
    return spans


def apply_edit_spans(source_tokens, spans) -> list[str]:
    """Apply token-level spans (assumed non-overlapping, sorted)."""
    out = list(source_tokens)
    for span in sorted(spans, key=lambda s: (s.start, s.end), reverse=True):
        out[span.start : span.end] = list(span.replacement_tokens)
    return out


# ---------------------------------------------------------------------------
# Span-match F0.5


@dataclass(frozen=True)
class F05Result:
    precision: float
    recall: float
    f05: float
    tp: int = 0
    fp: int = 0
    fn: int = 0


def _prf(tp: int, fp: int, fn: int) -> F05Result:
    # Conventions: precision is 1 with no system edits, recall is 1 with no
    # gold edits, F0.5 is 0 when precision + recall is 0.
    if tp == 0 and fp == 0 and fn == 0:
        return F05Result(1.0, 1.0, 1.0, 0, 0, 0)
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    if precision + recall == 0.0:
        return F05Result(precision, recall, 0.0, tp, fp, fn)
    f05 = (1.25 * tp) / (1.25 * tp + 0.25 * fn + fp)
    return F05Result(precision, recall, f05, tp, fp, fn)


def max_match_f05(sources, hypotheses, reference_edit_sets) -> F05Result:
    """Span-equality max-match scoring.

    ``reference_edit_sets[i]`` lists one gold edit list per annotator for
    instance ``i``. Per instance the annotator maximizing instance F0.5 is
    chosen (ties keep the first), and that annotator's counts accumulate
    into the corpus totals. An edit matches when start, end and
    replacement are all equal.
    """
    if not (len(sources) == len(hypotheses) == len(reference_edit_sets)):
        raise ValueError(
            "sources, hypotheses and reference edit sets must have equal"
            f" lengths (got {len(sources)}, {len(hypotheses)},"
            f" {len(reference_edit_sets)})"
        )
    total_tp = total_fp = total_fn = 0
    for src, hyp, annotators in zip(sources, hypotheses, reference_edit_sets):
        if not annotators:
            raise ValueError("each instance needs at least one annotator")
        sys_edits = {
            (e.start, e.end, e.replacement)
            for e in extract_edits(tokenize(src).tokens, tokenize(hyp).tokens)
        }
        best = None
        for gold_list in annotators:
            gold = {(e.start, e.end, e.replacement) for e in gold_list}
            tp = len(sys_edits & gold)
            fp = len(sys_edits - gold)
            fn = len(gold - sys_edits)
            result = _prf(tp, fp, fn)
            if best is None or result.f05 > best.f05:
                best = result
        total_tp += best.tp
        total_fp += best.fp
        total_fn += best.fn
    return _prf(total_tp, total_fp, total_fn)
