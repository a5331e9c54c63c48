"""Multi-level retrieval with reciprocal rank fusion.

Each corpus level is searched independently for the same query; the three
ranked lists are merged purely by rank: a document at 1-based rank r in a
list contributes 1/(c + r) to its fused score. Raw scores never enter the
fusion, so any strictly monotone rescaling of a retriever's scores leaves
the fused order unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .errors import RetrievalError, ValidationError
from .ranking import RankedList
from .records import CorpusLevel

RRF_C = 60.0

# A searcher maps (query text, k) to a RankedList for one corpus level.
Searcher = Callable[[str, int], RankedList]


def rrf_fuse(lists: Sequence[RankedList], c: float = RRF_C, k: int | None = None) -> RankedList:
    """Merge ranked lists by summed reciprocal rank 1/(c + rank)."""
    if c <= 0:
        raise ValidationError("rank constant c must be > 0")
    if not lists:
        raise ValidationError("rrf_fuse needs at least one list")
    contributions: dict[str, list[float]] = {}
    for ranked in lists:
        for rank, (doc, _) in enumerate(ranked.entries, start=1):
            contributions.setdefault(doc, []).append(1.0 / (c + rank))
    # fsum is order-independent, so fusion is exactly permutation-invariant.
    scores = {doc: math.fsum(parts) for doc, parts in contributions.items()}
    return RankedList.from_scores(scores, k=k)


@dataclass(frozen=True)
class MultiLevelResult:
    per_level: dict[CorpusLevel, RankedList]
    fused: RankedList


def retrieve_multilevel(
    query: str,
    searchers: Mapping[CorpusLevel, Searcher],
    k: int,
    *,
    c: float = RRF_C,
) -> MultiLevelResult:
    """Top-k per level, then rank fusion over the three lists.

    The fused list keeps every candidate (at most 3k of them); callers take
    the prefix they need.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    for level in CorpusLevel:
        if level not in searchers:
            raise RetrievalError(f"missing index for level {level.name}")
    per_level = {level: searchers[level](query, k) for level in CorpusLevel}
    fused = rrf_fuse([per_level[level] for level in CorpusLevel], c=c, k=3 * k)
    return MultiLevelResult(per_level=per_level, fused=fused)


def single_level_search(
    query: str,
    searchers: Mapping[CorpusLevel, Searcher],
    level: CorpusLevel,
    k: int,
) -> RankedList:
    """Ablation path: search one level only."""
    if level not in searchers:
        raise RetrievalError(f"missing index for level {level.name}")
    return searchers[level](query, k)


def make_sparse_searcher(index, scorer: str = "bm25", **params) -> Searcher:
    from .sparse import sparse_search

    def search(query: str, k: int) -> RankedList:
        return sparse_search(index, query, scorer=scorer, k=k, **params)

    return search


def make_dense_searcher(index, provider, mode: str = "exact") -> Searcher:
    from .dense import dense_search

    def search(query: str, k: int) -> RankedList:
        vector = provider.embed([query])[0]
        return dense_search(index, vector, k=k, mode=mode)

    return search
