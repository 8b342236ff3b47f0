"""Instance-based revision classification: per-aspect metric accuracy.

Each snippet pair is presented with sides randomized (keyed by the pair's
identity and the seed, not its position), the metric picks a side, and
credit is 1 for the better side, 0.5 for a tie, 0 otherwise. Metric
errors score like ties but are counted separately.
"""

from __future__ import annotations

import hashlib
import io
import csv
import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from reveval.corpus_model import Aspect
from reveval.metric_runtime import Choice, Metric, MetricError, OracleMetric

log = logging.getLogger(__name__)

REPORT_SCHEMA = "irc_report_v1"

ASPECT_ORDER = tuple(Aspect)


@dataclass(frozen=True)
class AspectStats:
    accuracy: float | None
    n: int
    ci_low: float | None
    ci_high: float | None


@dataclass(frozen=True)
class IrcReport:
    overall_accuracy: float
    overall_ci: tuple[float, float]
    per_aspect: dict[Aspect, AspectStats]
    tie_rate: float
    error_count: int
    metric_id: str
    seed: int
    total_pairs: int

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "metric_id": self.metric_id,
            "seed": self.seed,
            "total_pairs": self.total_pairs,
            "overall_accuracy": self.overall_accuracy,
            "overall_ci": list(self.overall_ci),
            "tie_rate": self.tie_rate,
            "error_count": self.error_count,
            "per_aspect": {
                aspect.value: vars(stats) for aspect, stats in self.per_aspect.items()
            },
        }


def bootstrap_ci(credits, resamples: int = 1000, level: float = 0.95, seed: int = 0):
    """Percentile bootstrap interval for the mean credit."""
    values = np.asarray(list(credits), dtype=float)
    if values.size == 0:
        raise ValueError("bootstrap needs at least one credit value")
    rng = np.random.Generator(np.random.PCG64(seed))
    indices = rng.integers(0, values.size, size=(resamples, values.size))
    means = values[indices].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    return float(low), float(high)


def presentation_side(pair, seed: int) -> bool:
    """True when the better text is shown as side A. Keyed by pair
    identity plus seed so reports are invariant to pair ordering."""
    digest = hashlib.sha256(
        f"{seed}\x00{pair.key()}\x00{pair.source}\x1f{pair.revised}".encode("utf-8")
    ).digest()
    return bool(digest[0] & 1)


class InvertedMetric(Metric):
    """Mirror every verdict of the wrapped metric."""

    def __init__(self, inner: Metric):
        self.inner = inner
        self.is_scorer = False
        self.metric_id = f"inverted({inner.metric_id})"

    def choose(self, a, b):
        verdict = self.inner.choose(a, b)
        from reveval.metric_runtime import MetricVerdict

        return MetricVerdict(verdict.choice.mirrored())

    def close(self):
        self.inner.close()


def _bind_oracle(metric: Metric, presented) -> None:
    inner = metric.inner if isinstance(metric, InvertedMetric) else metric
    if isinstance(inner, OracleMetric) and inner.truth is None:
        truth = {(a, b): Choice.A if a_is_better else Choice.B
                 for a, b, a_is_better in presented}

        def lookup(a, b):
            try:
                return truth[(a, b)]
            except KeyError:
                raise MetricError("oracle asked about an unknown pair")

        inner.truth = lookup


def evaluate_metric(
    metric: Metric,
    pairs,
    seed: int = 0,
    resamples: int = 1000,
    ci_level: float = 0.95,
    jobs: int = 1,
) -> IrcReport:
    """Run the metric over every pair and aggregate per-aspect accuracy."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate a metric on zero pairs")
    presented = [
        (
            pair.better_text if a_is_better else pair.worse_text,
            pair.worse_text if a_is_better else pair.better_text,
            a_is_better,
        )
        for pair, a_is_better in ((p, presentation_side(p, seed)) for p in pairs)
    ]
    _bind_oracle(metric, presented)

    def judge(item):
        a, b, a_is_better = item
        try:
            verdict = metric.choose(a, b)
        except MetricError as exc:
            log.warning("metric error, scoring as tie: %s", exc)
            return 0.5, False, True
        if verdict.choice is Choice.TIE:
            return 0.5, True, False
        correct = (verdict.choice is Choice.A) == a_is_better
        return (1.0 if correct else 0.0), False, False

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(judge, presented))
    else:
        outcomes = [judge(item) for item in presented]

    credits = [c for c, _tie, _err in outcomes]
    ties = sum(1 for _c, tie, _err in outcomes if tie)
    errors = sum(1 for _c, _tie, err in outcomes if err)

    # Deterministic aggregation in canonical pair order regardless of how
    # the evaluation was scheduled.
    order = sorted(range(len(pairs)), key=lambda i: pairs[i].key())
    per_aspect: dict[Aspect, AspectStats] = {}
    for aspect in ASPECT_ORDER:
        aspect_credits = [credits[i] for i in order if pairs[i].aspect.name is aspect]
        if aspect_credits:
            low, high = bootstrap_ci(
                aspect_credits,
                resamples,
                ci_level,
                seed ^ zlib.crc32(aspect.value.encode()),
            )
            per_aspect[aspect] = AspectStats(
                sum(aspect_credits) / len(aspect_credits),
                len(aspect_credits),
                low,
                high,
            )
        else:
            per_aspect[aspect] = AspectStats(None, 0, None, None)

    ordered_credits = [credits[i] for i in order]
    overall = sum(ordered_credits) / len(ordered_credits)
    overall_ci = bootstrap_ci(ordered_credits, resamples, ci_level, seed)
    return IrcReport(
        overall_accuracy=overall,
        overall_ci=overall_ci,
        per_aspect=per_aspect,
        tie_rate=ties / len(pairs),
        error_count=errors,
        metric_id=metric.metric_id,
        seed=seed,
        total_pairs=len(pairs),
    )


def per_aspect_report(report: IrcReport, fmt: str = "text") -> str:
    """Aligned text or CSV table, rows in the canonical aspect order with a
    totals row equal to the overall accuracy."""
    rows = []
    for aspect in ASPECT_ORDER:
        stats = report.per_aspect.get(aspect, AspectStats(None, 0, None, None))
        rows.append(
            (
                aspect.value,
                f"{stats.accuracy:.4f}" if stats.accuracy is not None else "-",
                str(stats.n),
                f"{stats.ci_low:.4f}" if stats.ci_low is not None else "-",
                f"{stats.ci_high:.4f}" if stats.ci_high is not None else "-",
            )
        )
    rows.append(
        (
            "Total",
            f"{report.overall_accuracy:.4f}",
            str(report.total_pairs),
            f"{report.overall_ci[0]:.4f}",
            f"{report.overall_ci[1]:.4f}",
        )
    )
    header = ("aspect", "accuracy", "n", "ci_low", "ci_high")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    table = [header, *rows]
    widths = [max(len(row[col]) for row in table) for col in range(len(header))]
    lines = [
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in table
    ]
    return "\n".join(lines) + "\n"


def save_report(report: IrcReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
