"""Task dataset construction: reference-list and placeholder instances.

Both builders apply the quality filters (duplicate or broken citations
excluded), report every exclusion with a reason, and list the selected
query papers so the caller can remove them from the corpus before any
retrieval happens.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import find_citation_markers, marker_reference_indices
from .errors import CorpusFormatError
from .records import Corpus, PaperRecord

PLACEHOLDER = "[ref]_{index}"
PLACEHOLDER_RE = re.compile(r"\[ref\]_(\d+)")

MAX_SECTIONS = 3
MAX_KEPT_REFS_PER_SECTION = 3
MAX_OCCURRENCES_PER_SECTION = 10
_REFS_HEADING = re.compile(r"\b(?:references|bibliography)\b", re.IGNORECASE)


@dataclass
class Task1Instance:
    """Predict a paper's whole reference list from title + abstract."""

    query_id: str
    title: str
    abstract: str
    ground_truth_refs: list[str]  # normalized titles, duplicate-free

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "title": self.title,
            "abstract": self.abstract,
            "ground_truth_refs": list(self.ground_truth_refs),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Task1Instance":
        return cls(
            query_id=str(data["query_id"]),
            title=str(data["title"]),
            abstract=str(data["abstract"]),
            ground_truth_refs=[str(t) for t in data["ground_truth_refs"]],
        )


@dataclass
class SectionTask:
    """One section's placeholder-bearing text and its placeholder targets."""

    text: str
    targets: dict[int, str]  # placeholder index -> normalized ground-truth title

    def to_dict(self) -> dict:
        return {"text": self.text, "targets": {str(k): v for k, v in self.targets.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "SectionTask":
        return cls(
            text=str(data["text"]),
            targets={int(k): str(v) for k, v in data["targets"].items()},
        )


@dataclass
class Task2Instance:
    """Predict the citation for every placeholder in selected sections."""

    query_id: str
    title: str
    abstract: str
    sections: list[SectionTask]

    def placeholder_count(self) -> int:
        return sum(len(s.targets) for s in self.sections)

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "title": self.title,
            "abstract": self.abstract,
            "sections": [s.to_dict() for s in self.sections],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Task2Instance":
        return cls(
            query_id=str(data["query_id"]),
            title=str(data["title"]),
            abstract=str(data["abstract"]),
            sections=[SectionTask.from_dict(s) for s in data["sections"]],
        )


@dataclass
class BuildResult:
    """Instances plus the audit trail of what was excluded and why."""

    instances: list
    excluded: list[tuple[str, str]] = field(default_factory=list)

    @property
    def query_ids(self) -> list[str]:
        """Papers that must be removed from the corpus (leakage control)."""
        return [inst.query_id for inst in self.instances]


def _reference_problems(record: PaperRecord, corpus: Corpus) -> str | None:
    if not record.references:
        return "no references"
    seen: set[str] = set()
    for ref in record.references:
        key = ref.normalized_title
        if key in seen:
            return "duplicate citation"
        seen.add(key)
    for ref in record.references:
        if ref.id is None and corpus.resolve_title(ref.title) is None:
            return f"unresolvable reference: {ref.title!r}"
    return None


def build_task1(corpus: Corpus) -> BuildResult:
    """One instance per paper that passes the citation-quality filters."""
    instances: list[Task1Instance] = []
    excluded: list[tuple[str, str]] = []
    for record in corpus:
        problem = _reference_problems(record, corpus)
        if problem:
            excluded.append((record.id, problem))
            continue
        instances.append(
            Task1Instance(
                query_id=record.id,
                title=record.title,
                abstract=record.abstract,
                ground_truth_refs=[r.normalized_title for r in record.references],
            )
        )
    return BuildResult(instances=instances, excluded=excluded)


def _is_valid_reference(record: PaperRecord, ref_index: int, corpus: Corpus) -> bool:
    """A citation is valid when its reference resolves to a corpus record
    or carries an explicit id."""
    if not (1 <= ref_index <= len(record.references)):
        return False
    ref = record.references[ref_index - 1]
    return ref.id is not None or corpus.resolve_title(ref.title) is not None


def _tidy(text: str) -> str:
    text = re.sub(r"[ \t]+([.,;:!?)])", r"\1", text)
    text = re.sub(r"[ \t]{2,}", " ", text)
    return "\n".join(line.rstrip() for line in text.splitlines()).strip("\n")


def build_task2(corpus: Corpus) -> BuildResult:
    """Per paper: pick the three most-cited sections, keep placeholders for
    each section's top-three valid citations, remove every other marker."""
    instances: list[Task2Instance] = []
    excluded: list[tuple[str, str]] = []

    for record in corpus:
        if not record.sections:
            excluded.append((record.id, "no section data"))
            continue
        if not record.references:
            excluded.append((record.id, "no references"))
            continue
        seen: set[str] = set()
        duplicate = False
        for ref in record.references:
            if ref.normalized_title in seen:
                duplicate = True
                break
            seen.add(ref.normalized_title)
        if duplicate:
            excluded.append((record.id, "duplicate citation"))
            continue

        body_sections = [
            s for s in record.sections
            if not (s.heading and _REFS_HEADING.search(s.heading))
        ]
        counted = []
        citation_error = False
        over_cap = False
        for section in body_sections:
            markers = find_citation_markers(section.text)
            occurrences: dict[int, int] = {}
            for marker in markers:
                for idx in marker_reference_indices(marker.group(0)):
                    if not (1 <= idx <= len(record.references)):
                        citation_error = True
                    occurrences[idx] = occurrences.get(idx, 0) + 1
            if any(n > MAX_OCCURRENCES_PER_SECTION for n in occurrences.values()):
                over_cap = True
            counted.append((section, markers))
        if citation_error:
            excluded.append((record.id, "citation error: marker outside reference list"))
            continue
        if over_cap:
            excluded.append((record.id, "reference cited more than 10 times in a section"))
            continue

        counted = [(s, m) for s, m in counted if m]
        if not counted:
            excluded.append((record.id, "no citations"))
            continue
        # Most-cited sections first; ties keep document order (sort is stable).
        counted.sort(key=lambda item: -len(item[1]))
        selected = counted[:MAX_SECTIONS]

        section_tasks: list[SectionTask] = []
        next_placeholder = 1
        for section, markers in selected:
            occurrences = {}
            first_seen: dict[int, int] = {}
            for marker in markers:
                for idx in marker_reference_indices(marker.group(0)):
                    occurrences[idx] = occurrences.get(idx, 0) + 1
                    first_seen.setdefault(idx, marker.start())
            valid = [i for i in occurrences if _is_valid_reference(record, i, corpus)]
            valid.sort(key=lambda i: (-occurrences[i], first_seen[i]))
            kept = set(valid[:MAX_KEPT_REFS_PER_SECTION])

            pieces: list[str] = []
            targets: dict[int, str] = {}
            cursor = 0
            for marker in markers:
                pieces.append(section.text[cursor:marker.start()])
                indices = marker_reference_indices(marker.group(0))
                if len(indices) == 1 and indices[0] in kept:
                    targets[next_placeholder] = record.references[indices[0] - 1].normalized_title
                    pieces.append(PLACEHOLDER.format(index=next_placeholder))
                    next_placeholder += 1
                cursor = marker.end()
            pieces.append(section.text[cursor:])
            if targets:
                text = _tidy("".join(pieces))
                if section.heading:
                    text = f"{section.heading}\n{text}"
                section_tasks.append(SectionTask(text=text, targets=targets))

        if not section_tasks:
            excluded.append((record.id, "no valid citations"))
            continue
        instances.append(
            Task2Instance(
                query_id=record.id,
                title=record.title,
                abstract=record.abstract,
                sections=section_tasks,
            )
        )
    return BuildResult(instances=instances, excluded=excluded)


@dataclass
class LeakageReport:
    passed: bool
    overlapping_ids: list[str]


def verify_no_leakage(instances: Sequence, corpus: Corpus) -> LeakageReport:
    """Pass iff no instance's query paper is still inside the corpus."""
    overlap = sorted({inst.query_id for inst in instances} & set(corpus.ids()))
    return LeakageReport(passed=not overlap, overlapping_ids=overlap)


def save_instances(instances: Iterable, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for inst in instances:
            handle.write(json.dumps(inst.to_dict(), ensure_ascii=False) + "\n")


def load_instances(path: str | Path, task: int) -> list:
    cls = Task1Instance if task == 1 else Task2Instance
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                out.append(cls.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{path.name}: line {line_no}: {exc}") from exc
    return out
