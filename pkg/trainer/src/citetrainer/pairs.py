"""Query-positive pair mining from a corpus and a training split."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .data import LEVELS, CorpusDoc, QueryInstance


@dataclass(frozen=True)
class TrainingPair:
    query_text: str
    positive_text: str
    level: str  # L1 | L2 | L3
    query_id: str
    positive_id: str


@dataclass
class TrainingBatch:
    """The loss surface: pairs with their negatives and the temperature."""

    pairs: list[TrainingPair]
    negatives: list[list[str]]  # per pair, negative texts
    temperature: float

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        for pair, negs in zip(self.pairs, self.negatives):
            if any(neg == pair.positive_text for neg in negs):
                raise ValueError("a negative equals its pair's positive")


def mine_pairs(
    docs: Sequence[CorpusDoc],
    instances: Sequence[QueryInstance],
    max_queries: int = 300,
    pairs_per_level: int = 1334,
    seed: int = 0,
) -> list[TrainingPair]:
    """One pair per (sampled query, cited reference, corpus level).

    Queries are sampled deterministically under the seed; per-level output
    is capped at pairs_per_level (so roughly 3x that many pairs total, the
    desk-scale default landing near 4,000). Self-citations and references
    that do not resolve to a corpus record contribute nothing.
    """
    if not instances:
        raise ValueError("empty training split")
    by_title = {}
    for doc in docs:
        by_title.setdefault(doc.normalized_title, doc)
    rng = random.Random(seed)
    sampled = list(instances)
    rng.shuffle(sampled)
    sampled = sampled[:max_queries]

    pairs: list[TrainingPair] = []
    per_level = {level: 0 for level in LEVELS}
    for instance in sampled:
        for ref_title in instance.ground_truth_refs:
            doc = by_title.get(ref_title)
            if doc is None or doc.id == instance.query_id:
                continue
            for level in LEVELS:
                if per_level[level] >= pairs_per_level:
                    continue
                pairs.append(TrainingPair(
                    query_text=instance.query_text,
                    positive_text=doc.texts[level],
                    level=level,
                    query_id=instance.query_id,
                    positive_id=doc.id,
                ))
                per_level[level] += 1
    return pairs
