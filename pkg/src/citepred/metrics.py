"""Evaluation metrics and the title normalization used across the package.

All title-based metrics compare normalized titles, so surface variation
(case, punctuation, unicode compatibility forms) never affects a score.
Retriever-side callers that rank opaque ids can pass ``normalize=False``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import UndefinedMetricError, ValidationError

_NON_WORD = re.compile(r"[\W_]+", re.UNICODE)


def normalize_title(title: str) -> str:
    """Canonical form of a title: compatibility-decomposed, accent-stripped,
    casefolded, punctuation replaced by single spaces. Idempotent."""
    text = unicodedata.normalize("NFKD", title)
    text = "".join(ch for ch in text if not unicodedata.combining(ch))
    text = text.casefold()
    text = _NON_WORD.sub(" ", text)
    return text.strip()


def levenshtein(a: str, b: str, cutoff: int | None = None) -> int:
    """Edit distance with an optional early-exit cutoff."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if cutoff is not None and len(a) - len(b) > cutoff:
        return cutoff + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if cutoff is not None and min(cur) > cutoff:
            return cutoff + 1
        prev = cur
    return prev[-1]


class TitleMatcher:
    """Membership test for normalized titles.

    Exact matching by default; an edit-distance threshold > 0 enables fuzzy
    matching (nearest pool entry within the threshold counts as a match).
    """

    def __init__(self, fuzzy_threshold: int = 0):
        if fuzzy_threshold < 0:
            raise ValidationError("fuzzy_threshold must be >= 0")
        self.fuzzy_threshold = fuzzy_threshold

    def find(self, item: str, pool: Iterable[str]) -> str | None:
        pool_set = pool if isinstance(pool, (set, frozenset, dict)) else set(pool)
        if item in pool_set:
            return item
        if self.fuzzy_threshold == 0:
            return None
        best, best_d = None, self.fuzzy_threshold + 1
        for cand in sorted(pool_set):
            d = levenshtein(item, cand, cutoff=self.fuzzy_threshold)
            if d < best_d:
                best, best_d = cand, d
        return best

    def contains(self, item: str, pool: Iterable[str]) -> bool:
        return self.find(item, pool) is not None


_EXACT = TitleMatcher()


def _canon(items: Iterable[str], normalize: bool) -> list[str]:
    return [normalize_title(x) if normalize else x for x in items]


def _matched_positions(
    predicted: Sequence[str],
    ground_truth: Iterable[str],
    k: int,
    normalize: bool,
    matcher: TitleMatcher,
) -> list[tuple[int, str]]:
    """(1-based rank, matched ground-truth item) pairs within the top-k.

    Each ground-truth item is credited at most once, at its earliest rank;
    duplicate predictions of an already-matched item earn nothing.
    """
    gt = set(_canon(ground_truth, normalize))
    out: list[tuple[int, str]] = []
    for rank, raw in enumerate(predicted[:k], start=1):
        item = normalize_title(raw) if normalize else raw
        hit = matcher.find(item, gt)
        if hit is not None:
            out.append((rank, hit))
            gt.discard(hit)
    return out


def recall_at_k(
    predicted: Sequence[str],
    ground_truth: Iterable[str],
    k: int,
    *,
    normalize: bool = True,
    matcher: TitleMatcher = _EXACT,
) -> float:
    """|top-k predictions ∩ ground truth| / |ground truth|."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    gt = set(_canon(ground_truth, normalize))
    if not gt:
        raise UndefinedMetricError("recall@k undefined for empty ground truth")
    hits = _matched_positions(predicted, gt, k, normalize, matcher)
    return len(hits) / len(gt)


def mrr_at_k(
    ranked_lists: Sequence[Sequence[str]],
    relevant_sets: Sequence[Iterable[str]],
    k: int,
    *,
    normalize: bool = False,
) -> float:
    """Mean over queries of 1/rank of the first relevant item in the top-k.

    Queries with no relevant item in the top-k contribute zero.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if len(ranked_lists) != len(relevant_sets):
        raise ValidationError("one relevant set per ranked list required")
    if not ranked_lists:
        raise UndefinedMetricError("MRR@k undefined with zero queries")
    total = 0.0
    for ranked, relevant in zip(ranked_lists, relevant_sets):
        rel = set(_canon(relevant, normalize))
        for rank, raw in enumerate(ranked[:k], start=1):
            item = normalize_title(raw) if normalize else raw
            if item in rel:
                total += 1.0 / rank
                break
    return total / len(ranked_lists)


def ndcg_at_k(
    predicted: Sequence[str],
    ground_truth: Iterable[str],
    k: int,
    *,
    normalize: bool = True,
    matcher: TitleMatcher = _EXACT,
) -> float:
    """Binary-relevance NDCG: DCG@k = sum (2^rel - 1)/log2(i+1), normalized
    by the ideal DCG of placing min(k, |GT|) relevant items first."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    gt = set(_canon(ground_truth, normalize))
    if not gt:
        raise UndefinedMetricError("NDCG@k undefined for empty ground truth")
    hits = _matched_positions(predicted, gt, k, normalize, matcher)
    dcg = sum(1.0 / math.log2(rank + 1) for rank, _ in hits)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(gt)) + 1))
    return dcg / idcg


def hit_at_k(
    predicted: Sequence[str],
    ground_truth: Iterable[str],
    k: int,
    *,
    variant: str = "normalized-count",
    normalize: bool = True,
    matcher: TitleMatcher = _EXACT,
) -> float:
    """Correct predictions in the top-k.

    ``normalized-count`` (default): |top-k ∩ GT| / k.
    ``any-hit``: 1.0 if at least one correct prediction, else 0.0.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if variant not in ("normalized-count", "any-hit"):
        raise ValidationError(f"unknown hit variant {variant!r}")
    hits = _matched_positions(predicted, ground_truth, k, normalize, matcher)
    if variant == "any-hit":
        return 1.0 if hits else 0.0
    return len(hits) / k


def paca_at_k(
    candidates: Sequence[Sequence[str]],
    ground_truths: Sequence[str],
    k: int,
    *,
    normalize: bool = True,
    matcher: TitleMatcher = _EXACT,
) -> float:
    """Position-aware citation accuracy over placeholders.

    Each placeholder has one ground-truth title and a ranked candidate list;
    a correct candidate at rank r <= k earns 1 - (r - 1)/k. The score is the
    mean earned credit over all placeholders.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if len(candidates) != len(ground_truths):
        raise ValidationError("one ground truth per placeholder required")
    if not candidates:
        raise UndefinedMetricError("PACA@k undefined with zero placeholders")
    total = 0.0
    for ranked, truth in zip(candidates, ground_truths):
        hits = _matched_positions(ranked, [truth], k, normalize, matcher)
        if hits:
            rank = hits[0][0]
            total += 1.0 - (rank - 1) / k
    return total / len(candidates)


def cde(
    predicted: Iterable[str],
    category_of: Mapping[str, str] | Callable[[str], str | None],
    *,
    normalize: bool = True,
) -> float:
    """Shannon entropy (base 2) of the category distribution of predictions.

    Predictions that do not resolve to a category are excluded from the
    proportions; they are the hallucination metric's concern instead.
    """
    lookup = category_of.get if isinstance(category_of, Mapping) else category_of
    counts: dict[str, int] = {}
    for raw in predicted:
        item = normalize_title(raw) if normalize else raw
        cat = lookup(item)
        if cat is not None:
            counts[cat] = counts.get(cat, 0) + 1
    total = sum(counts.values())
    if total == 0:
        raise UndefinedMetricError("CDE undefined: no prediction resolved to a category")
    entropy = 0.0
    for n in counts.values():
        p = n / total
        entropy -= p * math.log2(p)
    return entropy


@dataclass(frozen=True)
class VerificationSet:
    """Normalized titles known to exist; membership defines 'not hallucinated'."""

    titles: frozenset[str]

    @classmethod
    def from_titles(cls, *sources: Iterable[str]) -> "VerificationSet":
        pool: set[str] = set()
        for source in sources:
            pool.update(normalize_title(t) for t in source)
        pool.discard("")
        return cls(frozenset(pool))

    def __contains__(self, title: str) -> bool:
        return normalize_title(title) in self.titles

    def __len__(self) -> int:
        return len(self.titles)


def hallucination_rate(
    predicted: Iterable[str],
    verification: VerificationSet,
    *,
    matcher: TitleMatcher = _EXACT,
) -> float:
    """Percentage of distinct predicted titles absent from the verification set."""
    preds = {normalize_title(t) for t in predicted}
    preds.discard("")
    if not preds:
        raise UndefinedMetricError("hallucination rate undefined for empty predictions")
    unverified = sum(1 for p in preds if not matcher.contains(p, verification.titles))
    return 100.0 * unverified / len(preds)


_METRIC_RANGES = {
    "recall": (0.0, 1.0),
    "ndcg": (0.0, 1.0),
    "hit": (0.0, 1.0),
    "mrr": (0.0, 1.0),
    "paca": (0.0, 1.0),
    "cde": (0.0, float("inf")),
    "halluc": (0.0, 100.0),
}


def _metric_family(name: str) -> str:
    return name.split("@")[0].lower()


@dataclass
class MetricReport:
    """Metric values for one task under one configuration."""

    task: int
    configuration: str
    values: dict[str, float]
    instance_count: int
    failures: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.instance_count < 1:
            raise ValidationError("instance_count must be >= 1")
        for name, value in self.values.items():
            lo, hi = _METRIC_RANGES.get(_metric_family(name), (-math.inf, math.inf))
            if not (lo - 1e-12 <= value <= hi + 1e-12):
                raise ValidationError(f"{name}={value} outside documented range [{lo}, {hi}]")

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "configuration": self.configuration,
            "values": dict(self.values),
            "instance_count": self.instance_count,
            "failures": list(self.failures),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MetricReport":
        return cls(
            task=int(data["task"]),
            configuration=str(data["configuration"]),
            values={str(k): float(v) for k, v in data["values"].items()},
            instance_count=int(data["instance_count"]),
            failures=list(data.get("failures", [])),
            meta=dict(data.get("meta", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls.from_json_dict(json.loads(text))


def render_table(reports: Sequence[MetricReport]) -> str:
    """Aligned-column text table, one row per configuration."""
    if not reports:
        return "(no reports)"
    metric_names: list[str] = []
    for report in reports:
        for name in report.values:
            if name not in metric_names:
                metric_names.append(name)
    header = ["configuration", "task", "n"] + metric_names
    rows = [header]
    for report in reports:
        row = [report.configuration, str(report.task), str(report.instance_count)]
        row += [
            f"{report.values[name]:.4f}" if name in report.values else "-"
            for name in metric_names
        ]
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def render_csv(reports: Sequence[MetricReport]) -> str:
    """CSV export: one row per (configuration, metric)."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["configuration", "task", "instance_count", "metric", "value"])
    for report in reports:
        for name, value in report.values.items():
            writer.writerow([report.configuration, report.task, report.instance_count, name, f"{value:.10g}"])
    return buf.getvalue()
