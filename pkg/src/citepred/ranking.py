"""Ranked result lists shared by every retriever and the fusion stage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .errors import ValidationError


@dataclass(frozen=True)
class RankedList:
    """Ordered (doc id, score) results.

    Scores are non-increasing and ids unique. Search code builds instances
    through :meth:`from_scores`, which applies the deterministic tie-break
    (ascending id among equal scores); perturbation code such as noise
    injection may construct a pre-ordered list directly.
    """

    entries: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        seen: set[str] = set()
        prev = None
        for doc_id, score in self.entries:
            if doc_id in seen:
                raise ValidationError(f"duplicate doc id {doc_id!r} in ranked list")
            seen.add(doc_id)
            if prev is not None and score > prev:
                raise ValidationError("ranked list scores must be non-increasing")
            prev = score

    @classmethod
    def from_scores(cls, scores: Mapping[str, float] | Iterable[tuple[str, float]],
                    k: int | None = None) -> "RankedList":
        items = scores.items() if isinstance(scores, Mapping) else scores
        ordered = sorted(items, key=lambda item: (-item[1], item[0]))
        if k is not None:
            ordered = ordered[:k]
        return cls(entries=tuple((doc, float(score)) for doc, score in ordered))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def ids(self) -> list[str]:
        return [doc for doc, _ in self.entries]

    def top(self, k: int) -> "RankedList":
        return RankedList(entries=self.entries[:k])

    def rank_of(self, doc_id: str) -> int | None:
        """1-based rank, or None if absent."""
        for rank, (doc, _) in enumerate(self.entries, start=1):
            if doc == doc_id:
                return rank
        return None

    def to_dict(self) -> dict:
        return {"entries": [[doc, score] for doc, score in self.entries]}

    @classmethod
    def from_dict(cls, data: dict) -> "RankedList":
        return cls(entries=tuple((str(d), float(s)) for d, s in data["entries"]))
