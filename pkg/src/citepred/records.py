"""Corpus domain types: papers, levels, sections, reference descriptors."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import CorpusFormatError
from .metrics import normalize_title


class CorpusLevel(enum.IntEnum):
    """The three nested text granularities of a paper."""

    L1 = 1
    L2 = 2
    L3 = 3

    @classmethod
    def parse(cls, name: str) -> "CorpusLevel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise CorpusFormatError(f"unknown corpus level {name!r}") from None


@dataclass(frozen=True)
class ReferenceDescriptor:
    """One entry of a paper's reference list."""

    title: str
    id: str | None = None

    @property
    def normalized_title(self) -> str:
        return normalize_title(self.title)

    def to_dict(self) -> dict:
        out: dict = {"title": self.title}
        if self.id is not None:
            out["id"] = self.id
        return out

    @classmethod
    def from_raw(cls, raw) -> "ReferenceDescriptor":
        if isinstance(raw, str):
            return cls(title=raw)
        return cls(title=str(raw.get("title", "")), id=raw.get("id"))


@dataclass(frozen=True)
class Section:
    """A body section with citation markers intact (pre-stripping)."""

    heading: str
    text: str

    def to_dict(self) -> dict:
        return {"heading": self.heading, "text": self.text}


@dataclass
class PaperRecord:
    """One paper with metadata, three nested text levels, and its references."""

    id: str
    title: str
    abstract: str
    domain_category: str
    authors: list[str]
    year: int | None
    venue: str
    level1_text: str
    level2_text: str
    level3_text: str
    references: list[ReferenceDescriptor]
    sections: list[Section] = field(default_factory=list)
    missing_introduction: bool = False

    @property
    def normalized_title(self) -> str:
        return normalize_title(self.title)

    def text_for(self, level: CorpusLevel) -> str:
        if level == CorpusLevel.L1:
            return self.level1_text
        if level == CorpusLevel.L2:
            return self.level2_text
        return self.level3_text

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract,
            "domain_category": self.domain_category,
            "authors": list(self.authors),
            "year": self.year,
            "venue": self.venue,
            "level1_text": self.level1_text,
            "level2_text": self.level2_text,
            "level3_text": self.level3_text,
            "references": [r.to_dict() for r in self.references],
        }
        if self.sections:
            out["sections"] = [s.to_dict() for s in self.sections]
        if self.missing_introduction:
            out["missing_introduction"] = True
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PaperRecord":
        required = (
            "id", "title", "abstract", "domain_category", "authors",
            "year", "venue", "level1_text", "level2_text", "level3_text",
            "references",
        )
        missing = [key for key in required if key not in data]
        if missing:
            raise CorpusFormatError(f"record missing keys: {', '.join(missing)}")
        return cls(
            id=str(data["id"]),
            title=str(data["title"]),
            abstract=str(data["abstract"]),
            domain_category=str(data["domain_category"]),
            authors=[str(a) for a in data["authors"]],
            year=None if data["year"] is None else int(data["year"]),
            venue=str(data["venue"]),
            level1_text=str(data["level1_text"]),
            level2_text=str(data["level2_text"]),
            level3_text=str(data["level3_text"]),
            references=[ReferenceDescriptor.from_raw(r) for r in data["references"]],
            sections=[Section(str(s["heading"]), str(s["text"])) for s in data.get("sections", [])],
            missing_introduction=bool(data.get("missing_introduction", False)),
        )


class Corpus:
    """An id-keyed, insertion-ordered collection of paper records.

    A built corpus is treated as immutable: mutating operations return new
    instances, so loaded corpora are safe to share across threads.
    """

    def __init__(self, records: Iterable[PaperRecord] = ()):
        self._records: dict[str, PaperRecord] = {}
        for record in records:
            if record.id in self._records:
                raise CorpusFormatError(f"duplicate record id {record.id!r}")
            self._records[record.id] = record
        self._title_index: dict[str, str] | None = None

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[PaperRecord]:
        return iter(self._records.values())

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._records

    def get(self, record_id: str) -> PaperRecord | None:
        return self._records.get(record_id)

    def ids(self) -> list[str]:
        return list(self._records)

    def title_index(self) -> dict[str, str]:
        """normalized title -> record id (first record wins on collisions)."""
        if self._title_index is None:
            index: dict[str, str] = {}
            for record in self:
                index.setdefault(record.normalized_title, record.id)
            self._title_index = index
        return self._title_index

    def resolve_title(self, title: str) -> str | None:
        return self.title_index().get(normalize_title(title))

    def categories(self) -> dict[str, str]:
        """normalized title -> domain category, for diversity scoring."""
        return {record.normalized_title: record.domain_category for record in self}
