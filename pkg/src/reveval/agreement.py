"""Two-level inter-annotator agreement over multi-editor corpora.

Detection agreement: how often one editor's edit spans intersect the
other's on the same paper. Correction agreement: among overlapping edit
pairs, how often the label sets intersect. Both are reported per ordered
editor pair with avg/min/max summaries; spans are compared in source
coordinates, which are shared across editors of the same paper.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from reveval.corpus_model import Document, source_text

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairAgreement:
    annotator: str
    other: str
    value: float | None
    numerator: int
    denominator: int


@dataclass(frozen=True)
class AgreementSummary:
    avg: float
    min: float
    max: float


@dataclass(frozen=True)
class AgreementReport:
    detection: AgreementSummary
    correction: AgreementSummary
    detection_pairs: tuple[PairAgreement, ...]
    correction_pairs: tuple[PairAgreement, ...]

    def to_dict(self) -> dict:
        def rows(pairs):
            return [
                {
                    "annotator": p.annotator,
                    "other": p.other,
                    "value": p.value,
                    "numerator": p.numerator,
                    "denominator": p.denominator,
                }
                for p in pairs
            ]

        return {
            "detection": vars(self.detection) | {"pairs": rows(self.detection_pairs)},
            "correction": vars(self.correction) | {"pairs": rows(self.correction_pairs)},
        }


def group_by_editor(docs) -> dict[str, dict[str, Document]]:
    """editor -> paper id -> document."""
    grouped: dict[str, dict[str, Document]] = {}
    for doc in docs:
        grouped.setdefault(doc.editor, {})[doc.id] = doc
    return grouped


def _check_shared(docs_by_editor):
    editors = sorted(docs_by_editor)
    if len(editors) < 2:
        raise ValueError("agreement needs at least two editors")
    any_shared = False
    for i, x in enumerate(editors):
        for y in editors[i + 1 :]:
            shared = set(docs_by_editor[x]) & set(docs_by_editor[y])
            if shared:
                any_shared = True
                for paper in shared:
                    src_x = source_text(docs_by_editor[x][paper])
                    src_y = source_text(docs_by_editor[y][paper])
                    if src_x != src_y:
                        log.warning(
                            "paper %s: source text differs between editors %s and"
                            " %s; span comparisons may be off",
                            paper,
                            x,
                            y,
                        )
    if not any_shared:
        raise ValueError("editors share no papers")
    return editors


def _label_set(edit, raw_labels: bool):
    if raw_labels:
        return {label.raw_label.casefold() for label in edit.labels}
    return {label.name for label in edit.labels}


def detection_agreement(docs_by_editor) -> list[PairAgreement]:
    """Per ordered pair (X, Y): the fraction of X's edits on shared papers
    whose span intersects at least one of Y's spans on the same paper.
    Insertion points count as overlapping any span containing them."""
    editors = _check_shared(docs_by_editor)
    results = []
    for x in editors:
        for y in editors:
            if x == y:
                continue
            shared = sorted(set(docs_by_editor[x]) & set(docs_by_editor[y]))
            hits = total = 0
            for paper in shared:
                x_edits = docs_by_editor[x][paper].edits
                y_spans = [e.span for e in docs_by_editor[y][paper].edits]
                for edit in x_edits:
                    total += 1
                    if any(edit.span.overlaps(span) for span in y_spans):
                        hits += 1
            value = hits / total if total else None
            results.append(PairAgreement(x, y, value, hits, total))
    return results


def correction_agreement(docs_by_editor, raw_labels: bool = False) -> list[PairAgreement]:
    """Per ordered pair (X, Y): among (x edit, y edit) combinations with
    overlapping spans, the fraction whose label sets intersect. Aspect
    level by default, raw labels with the flag. Pairs with no overlapping
    edits get value None."""
    editors = _check_shared(docs_by_editor)
    results = []
    for x in editors:
        for y in editors:
            if x == y:
                continue
            shared = sorted(set(docs_by_editor[x]) & set(docs_by_editor[y]))
            matched = overlapping = 0
            for paper in shared:
                x_edits = docs_by_editor[x][paper].edits
                y_edits = docs_by_editor[y][paper].edits
                for ex in x_edits:
                    for ey in y_edits:
                        if not ex.span.overlaps(ey.span):
                            continue
                        overlapping += 1
                        if _label_set(ex, raw_labels) & _label_set(ey, raw_labels):
                            matched += 1
            value = matched / overlapping if overlapping else None
            results.append(PairAgreement(x, y, value, matched, overlapping))
    return results


def _summarize(pairs) -> AgreementSummary:
    values = [p.value for p in pairs if p.value is not None]
    if not values:
        raise ValueError("no annotator pair produced a value")
    return AgreementSummary(sum(values) / len(values), min(values), max(values))


def compute_agreement(docs, raw_labels: bool = False) -> AgreementReport:
    """Full report over a flat document list (grouped by editor here)."""
    grouped = group_by_editor(docs)
    detection = detection_agreement(grouped)
    correction = correction_agreement(grouped, raw_labels)
    return AgreementReport(
        detection=_summarize(detection),
        correction=_summarize(correction),
        detection_pairs=tuple(detection),
        correction_pairs=tuple(correction),
    )
