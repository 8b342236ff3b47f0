"""Rule-based corruption: worse-quality revisions for reliability tests.

Noise rules target grammaticality and fluency (article/preposition
confusion, verb form damage, token swaps, comma toggling); sentence
shuffling targets paragraph consistency. Everything is seeded and
reproducible, with per-document seeds derived from the config seed.
"""

from __future__ import annotations

import random
import re
import zlib
from dataclasses import dataclass, replace

from reveval.corpus_model import (
    Aspect,
    EditAspect,
    paragraph_spans,
    source_text,
)
from reveval.gec_metrics import EditSpan, apply_edit_spans, tokenize
from reveval.pair_extraction import BETTER_SOURCE, SnippetPair

ARTICLES = ("a", "an", "the")
PREPOSITIONS = ("in", "on", "at", "for", "to", "of", "with")
# Comma insertion sites: before one of these coordinators.
COMMA_CONJUNCTIONS = ("and", "but", "or", "because", "while", "although")

VERB_SUFFIX_CHOICES = ("s", "ed", "ing")

# Tokens that attach to the preceding word when rebuilding text.
_NO_SPACE_BEFORE = {",", ".", ";", ":", "!", "?", ")", "]", "”", "'", '"'}
_NO_SPACE_AFTER = {"(", "[", "“"}

_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")

NOISE_RATE_FIELDS = (
    "article_drop",
    "article_swap",
    "preposition_swap",
    "verb_form_perturb",
    "adjacent_swap",
    "comma_toggle",
)


@dataclass(frozen=True)
class NoiseConfig:
    seed: int = 0
    article_drop: float = 0.0
    article_swap: float = 0.0
    preposition_swap: float = 0.0
    verb_form_perturb: float = 0.0
    adjacent_swap: float = 0.0
    comma_toggle: float = 0.0
    shuffle_doc_fraction: float = 0.05

    def __post_init__(self):
        for name in (*NOISE_RATE_FIELDS, "shuffle_doc_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    @classmethod
    def uniform(cls, seed: int, rate: float, shuffle_doc_fraction: float = 0.05):
        """Same rate for every noise rule."""
        return cls(seed, *([rate] * len(NOISE_RATE_FIELDS)), shuffle_doc_fraction)


def parse_noise_config(path) -> NoiseConfig:
    """Flat key=value file; '#' starts a comment."""
    values: dict = {}
    valid = set(NOISE_RATE_FIELDS) | {"seed", "shuffle_doc_fraction"}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in valid:
                raise ValueError(f"{path}:{lineno}: expected '<rate-name>=<value>'")
            values[key] = int(value) if key == "seed" else float(value)
    return NoiseConfig(**values)


def split_sentences(text: str) -> list[str]:
    """Sentence-final punctuation followed by whitespace and a capital
    starts a new sentence. Intentionally simple; meant for edited prose."""
    return [part for part in _SENTENCE_BREAK.split(text) if part.strip()]


def shuffle_sentences(paragraph: str, seed: int) -> tuple[str, bool]:
    """Seeded non-identity permutation of the sentences.

    Returns (text, changed). Paragraphs with fewer than two sentences come
    back unchanged with changed=False; sentence multiset is preserved.
    """
    sentences = split_sentences(paragraph)
    n = len(sentences)
    if n < 2:
        return paragraph, False
    rng = random.Random(seed)
    order = list(range(n))
    while order == sorted(order):
        rng.shuffle(order)
    return " ".join(sentences[i].strip() for i in order), True


def detokenize(tokens) -> str:
    parts = []
    for i, token in enumerate(tokens):
        if i == 0:
            parts.append(token)
        elif token in _NO_SPACE_BEFORE or (parts and parts[-1] in _NO_SPACE_AFTER):
            parts.append(token)
        else:
            parts.append(" " + token)
    return "".join(parts)


def _swap_case_like(template: str, word: str) -> str:
    return word.capitalize() if template[:1].isupper() else word


def inject_noise(paragraph: str, cfg: NoiseConfig) -> tuple[str, list[EditSpan]]:
    """Apply each noise rule independently per eligible site with its rate.

    Returns the corrupted text and the changed spans in token coordinates
    of the source paragraph; tokens outside the spans are untouched. With
    no rule firing the paragraph comes back byte-identical.
    """
    seq = tokenize(paragraph)
    tokens = list(seq.tokens)
    rng = random.Random(cfg.seed)
    spans: list[EditSpan] = []
    consumed = set()

    def fires(rate):
        return rate > 0.0 and rng.random() < rate

    i = 0
    n = len(tokens)
    while i < n:
        if i in consumed:
            i += 1
            continue
        token = tokens[i]
        lower = token.lower()

        if lower in ARTICLES and fires(cfg.article_drop):
            spans.append(EditSpan(i, i + 1, ""))
            consumed.add(i)
        elif lower in ARTICLES and fires(cfg.article_swap):
            other = [art for art in ARTICLES if art != lower]
            spans.append(EditSpan(i, i + 1, _swap_case_like(token, rng.choice(other))))
            consumed.add(i)
        elif lower in PREPOSITIONS and fires(cfg.preposition_swap):
            other = [prep for prep in PREPOSITIONS if prep != lower]
            spans.append(EditSpan(i, i + 1, _swap_case_like(token, rng.choice(other))))
            consumed.add(i)
        elif _verb_form_eligible(token) and fires(cfg.verb_form_perturb):
            spans.append(EditSpan(i, i + 1, _perturb_verb_form(token, rng)))
            consumed.add(i)
        elif (
            i + 1 < n
            and i + 1 not in consumed
            and token.isalpha()
            and tokens[i + 1].isalpha()
            and token != tokens[i + 1]
            and fires(cfg.adjacent_swap)
        ):
            spans.append(EditSpan(i, i + 2, f"{tokens[i + 1]} {token}"))
            consumed.update((i, i + 1))
        elif token == "," and fires(cfg.comma_toggle):
            spans.append(EditSpan(i, i + 1, ""))
            consumed.add(i)
        elif (
            lower in COMMA_CONJUNCTIONS
            and i > 0
            and tokens[i - 1] != ","
            and fires(cfg.comma_toggle)
        ):
            spans.append(EditSpan(i, i, ","))
            consumed.add(i)
        i += 1

    if not spans:
        return paragraph, []
    return detokenize(apply_edit_spans(tokens, spans)), spans


def _verb_form_eligible(token: str) -> bool:
    return token.isalpha() and token.islower() and len(token) >= 4


def _perturb_verb_form(token: str, rng) -> str:
    if token.endswith("ing") and len(token) > 5:
        return token[:-3]
    if token.endswith("ed") and len(token) > 4:
        return token[:-2]
    if token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token + rng.choice(VERB_SUFFIX_CHOICES)


def _derived_seed(seed: int, doc_id: str, editor: str, extra: int = 0) -> int:
    return seed ^ zlib.crc32(f"{doc_id}\x1f{editor}\x1f{extra}".encode("utf-8"))


def build_worse_testset(docs, cfg: NoiseConfig) -> list[SnippetPair]:
    """(source paragraph, corrupted paragraph) pairs over the corpus.

    Every paragraph is noise-injected; a shuffle_doc_fraction share of the
    documents (round to nearest, at least one) is additionally
    sentence-shuffled. The source side is marked as the better one;
    paragraphs the rules left untouched are dropped.
    """
    ordered = sorted(docs, key=lambda d: (d.id, d.editor))
    if not ordered:
        return []
    n_shuffled = 0
    if cfg.shuffle_doc_fraction > 0.0:
        n_shuffled = max(1, round(cfg.shuffle_doc_fraction * len(ordered)))
        n_shuffled = min(n_shuffled, len(ordered))
    selector = random.Random(cfg.seed)
    shuffle_docs = set(selector.sample(range(len(ordered)), n_shuffled))

    pairs = []
    for doc_index, doc in enumerate(ordered):
        full = source_text(doc)
        for para in paragraph_spans(doc):
            text = full[para.start : para.end]
            para_seed = _derived_seed(cfg.seed, doc.id, doc.editor, para.index)
            corrupted, _spans = inject_noise(text, replace(cfg, seed=para_seed))
            shuffled = False
            if doc_index in shuffle_docs:
                corrupted, shuffled = shuffle_sentences(corrupted, para_seed + 1)
            if tokenize(corrupted).tokens == tokenize(text).tokens:
                continue
            aspect = (
                EditAspect(Aspect.CONSISTENCY, "sentence-shuffle")
                if shuffled
                else EditAspect(Aspect.GRAMMATICALITY, "rule-noise")
            )
            pairs.append(
                SnippetPair(
                    source=text,
                    revised=corrupted,
                    aspect=aspect,
                    doc_id=doc.id,
                    editor=doc.editor,
                    paragraph_index=para.index,
                    edit_index=-1,  # synthetic, not tied to an annotated edit
                    better_side=BETTER_SOURCE,
                )
            )
    return pairs
