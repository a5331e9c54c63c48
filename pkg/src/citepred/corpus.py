"""Corpus construction: crawl-window planning, ingest, persistence, merge.

Ingest turns a raw pre-extracted text record into the three-level
representation. Level 1 is category + title + abstract; level 2 appends the
introduction body; level 3 appends the remaining sections minus the
reference section. Citation markers are stripped from every level, which
makes the levels a literal prefix chain (L1 is a prefix of L2 is a prefix
of L3).
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import CorpusFormatError, IngestError, ValidationError
from .metrics import normalize_title
from .records import Corpus, PaperRecord, ReferenceDescriptor, Section

logger = logging.getLogger(__name__)

# Volume thresholds choosing the crawl-window granularity.
YEARLY_BELOW = 2_000
MONTHLY_UPTO = 12_000


@dataclass(frozen=True)
class CrawlPlan:
    """Disjoint, ordered query windows that tile a date span exactly."""

    category: str
    volume_estimate: int
    windows: list[tuple[dt.date, dt.date]]

    @property
    def granularity(self) -> str:
        if self.volume_estimate < YEARLY_BELOW:
            return "year"
        if self.volume_estimate <= MONTHLY_UPTO:
            return "month"
        return "week"


def _year_end(day: dt.date) -> dt.date:
    return dt.date(day.year, 12, 31)


def _month_end(day: dt.date) -> dt.date:
    if day.month == 12:
        return dt.date(day.year, 12, 31)
    return dt.date(day.year, day.month + 1, 1) - dt.timedelta(days=1)


def _week_end(day: dt.date) -> dt.date:
    # ISO weeks: Monday..Sunday.
    return day + dt.timedelta(days=6 - day.weekday())


def plan_crawl_windows(
    category: str,
    volume_estimate: int,
    span: tuple[dt.date, dt.date],
) -> CrawlPlan:
    """Split a date span into calendar-aligned query windows.

    Fewer than 2,000 papers: one window per year. 2,000 to 12,000: one per
    month. More than 12,000: one per ISO week. First and last windows are
    truncated to the span edges, so the windows tile the span exactly.
    """
    start, end = span
    if volume_estimate < 0:
        raise ValidationError("volume_estimate must be >= 0")
    if end < start:
        raise ValidationError(f"invalid span: end {end} before start {start}")
    if volume_estimate < YEARLY_BELOW:
        boundary = _year_end
    elif volume_estimate <= MONTHLY_UPTO:
        boundary = _month_end
    else:
        boundary = _week_end
    windows: list[tuple[dt.date, dt.date]] = []
    cursor = start
    while cursor <= end:
        window_end = min(boundary(cursor), end)
        windows.append((cursor, window_end))
        cursor = window_end + dt.timedelta(days=1)
    return CrawlPlan(category=category, volume_estimate=volume_estimate, windows=windows)


# ---------------------------------------------------------------------------
# Section splitting and citation-marker grammar
# ---------------------------------------------------------------------------

_HEADING_KEYWORDS = (
    r"introduction|related works?|background|preliminaries|motivation"
    r"|methods?|methodology|approach|model|architecture|implementation"
    r"|experiments?|evaluation|results?|discussion|analysis|limitations"
    r"|conclusions?|future work|references|bibliography"
    r"|acknowledge?ments?|appendix(?:\s+\w+)?"
)
_KEYWORD_HEADING = re.compile(rf"^\s*(?:{_HEADING_KEYWORDS})\s*$", re.IGNORECASE)
_NUMBERED_HEADING = re.compile(r"^\s*\d+(?:\.\d+)*[.)]?\s+(\S.{0,78})$")
_INTRO = re.compile(r"\bintroduction\b", re.IGNORECASE)
_REFS = re.compile(r"\b(?:references|bibliography)\b", re.IGNORECASE)

# Committed marker grammar: numeric brackets "[7]", ranges "[2-5]", comma
# lists "[1, 3]" (ranges allowed inside lists), and parenthetical
# author-year citations "(Doe et al., 2020)" including "and"/"&" pairs and
# semicolon-joined runs.
_NUM_ITEM = r"\d+(?:\s*[-–—]\s*\d+)?"
NUMERIC_MARKER = re.compile(rf"\[\s*{_NUM_ITEM}(?:\s*,\s*{_NUM_ITEM})*\s*\]")
_NAME = r"[A-Z][\w'’-]*"
_AY_CLAUSE = rf"{_NAME}(?:\s+(?:et\s+al\.?|(?:and|&)\s+{_NAME}))?\s*,\s*(?:19|20)\d{{2}}[a-z]?"
AUTHOR_YEAR_MARKER = re.compile(rf"\(\s*{_AY_CLAUSE}(?:\s*;\s*{_AY_CLAUSE})*\s*\)")


def _is_heading(line: str) -> bool:
    if _KEYWORD_HEADING.match(line):
        return True
    m = _NUMBERED_HEADING.match(line)
    if m:
        remainder = m.group(1).strip()
        return len(remainder.split()) <= 8 and not remainder.endswith((".", ":", ";", ","))
    return False


def split_sections(body: str) -> list[Section]:
    """Split a body into sections at heading lines; text before the first
    heading becomes a section with an empty heading."""
    sections: list[Section] = []
    heading = ""
    lines: list[str] = []

    def flush() -> None:
        text = "\n".join(lines).strip("\n")
        if heading or text.strip():
            sections.append(Section(heading=heading, text=text))

    for line in body.splitlines():
        if _is_heading(line):
            flush()
            heading = line.strip()
            lines = []
        else:
            lines.append(line)
    flush()
    return sections


def find_citation_markers(text: str) -> list[re.Match]:
    """All marker matches in document order."""
    markers = list(NUMERIC_MARKER.finditer(text)) + list(AUTHOR_YEAR_MARKER.finditer(text))
    return sorted(markers, key=lambda m: m.start())


def marker_reference_indices(marker_text: str) -> list[int]:
    """1-based reference-list indices cited by one numeric marker; ranges
    and comma lists expand to every index. Author-year markers yield none."""
    if not NUMERIC_MARKER.fullmatch(marker_text.strip()):
        return []
    indices: list[int] = []
    for item in marker_text.strip("[] \t").split(","):
        item = item.strip()
        parts = re.split(r"\s*[-–—]\s*", item)
        if len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
            indices.extend(range(lo, hi + 1))
        elif item:
            indices.append(int(item))
    return indices


def strip_citation_markers(text: str) -> str:
    """Remove every citation marker and tidy the whitespace left behind."""
    text = NUMERIC_MARKER.sub(" ", text)
    text = AUTHOR_YEAR_MARKER.sub(" ", text)
    text = re.sub(r"[ \t]+([.,;:!?)])", r"\1", text)
    text = re.sub(r"[ \t]{2,}", " ", text)
    return "\n".join(line.rstrip() for line in text.splitlines())


# ---------------------------------------------------------------------------
# Ingest
# ---------------------------------------------------------------------------


def _derive_id(title: str) -> str:
    digest = hashlib.blake2s(normalize_title(title).encode("utf-8")).hexdigest()
    return f"p{digest[:12]}"


def ingest_paper(raw: Mapping) -> PaperRecord:
    """Build a three-level record from a raw pre-extracted text record.

    Expected raw keys: title, abstract, and optionally id, domain_category,
    authors, year, venue, references (titles or {title, id} objects), and
    body (full text with heading lines and citation markers).
    """
    title = str(raw.get("title") or "").strip()
    abstract = str(raw.get("abstract") or "").strip()
    if not title:
        raise IngestError("missing title")
    if not abstract:
        raise IngestError("missing abstract")

    category = str(raw.get("domain_category") or "unknown")
    record_id = str(raw.get("id") or _derive_id(title))
    body = str(raw.get("body") or raw.get("full_text") or "")
    sections = split_sections(body)

    intro = next((s for s in sections if s.heading and _INTRO.search(s.heading)), None)
    if intro is None:
        logger.debug("no introduction heading found for %s", record_id)

    level1 = f"{category}\n{title}\n{strip_citation_markers(abstract)}"
    level2 = level1
    if intro is not None and intro.text.strip():
        level2 = level1 + "\n\n" + strip_citation_markers(intro.text).strip()

    rest_parts: list[str] = []
    for section in sections:
        if section is intro or (section.heading and _REFS.search(section.heading)):
            continue
        cleaned = strip_citation_markers(section.text).strip()
        part = "\n".join(filter(None, [section.heading, cleaned]))
        if part:
            rest_parts.append(part)
    level3 = level2 + ("\n\n" + "\n\n".join(rest_parts) if rest_parts else "")

    references = []
    for raw_ref in raw.get("references", []) or []:
        descriptor = ReferenceDescriptor.from_raw(raw_ref)
        if descriptor.normalized_title:
            references.append(descriptor)
        else:
            logger.warning("dropping reference with empty title in %s", record_id)

    year = raw.get("year")
    return PaperRecord(
        id=record_id,
        title=title,
        abstract=abstract,
        domain_category=category,
        authors=[str(a) for a in raw.get("authors", []) or []],
        year=None if year in (None, "") else int(year),
        venue=str(raw.get("venue") or ""),
        level1_text=level1,
        level2_text=level2,
        level3_text=level3,
        references=references,
        sections=sections,
        missing_introduction=intro is None,
    )


# ---------------------------------------------------------------------------
# Persistence, removal, merge
# ---------------------------------------------------------------------------


def persist_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write one JSON object per line, in corpus order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for record in corpus:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    """Load a JSONL corpus; any malformed line or duplicate id aborts the load."""
    path = Path(path)
    records: dict[str, PaperRecord] = {}
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                record = PaperRecord.from_dict(data)
            except (json.JSONDecodeError, CorpusFormatError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{path.name}: line {line_no}: {exc}") from exc
            if record.id in records:
                raise CorpusFormatError(f"{path.name}: line {line_no}: duplicate id {record.id!r}")
            records[record.id] = record
    return Corpus(records.values())


@dataclass
class RemovalReport:
    removed: list[str] = field(default_factory=list)
    not_found: list[str] = field(default_factory=list)


def remove_papers(corpus: Corpus, ids: Iterable[str]) -> tuple[Corpus, RemovalReport]:
    """Drop the given ids; absent ids are reported, never an error."""
    targets = set(ids)
    report = RemovalReport(
        removed=sorted(targets & set(corpus.ids())),
        not_found=sorted(targets - set(corpus.ids())),
    )
    remaining = Corpus(record for record in corpus if record.id not in targets)
    return remaining, report


def incremental_merge(base: Corpus, batch: Corpus) -> Corpus:
    """Union of two corpora with normalized-title dedup.

    On a title collision the record with the longer level3_text wins (ties
    keep the earlier record, which makes the merge idempotent). Output order
    is ascending id.
    """
    by_title: dict[str, PaperRecord] = {}
    for record in list(base) + list(batch):
        key = record.normalized_title
        incumbent = by_title.get(key)
        if incumbent is None or len(record.level3_text) > len(incumbent.level3_text):
            by_title[key] = record
    by_id: dict[str, PaperRecord] = {}
    for record in by_title.values():
        incumbent = by_id.get(record.id)
        if incumbent is None or len(record.level3_text) > len(incumbent.level3_text):
            by_id[record.id] = record
    return Corpus(sorted(by_id.values(), key=lambda r: r.id))


def ingest_directory(raw_dir: str | Path) -> tuple[Corpus, list[tuple[str, str]]]:
    """Ingest every .json / .jsonl raw record under a directory.

    Returns the corpus plus (source, reason) pairs for rejected records.
    """
    raw_dir = Path(raw_dir)
    records: list[PaperRecord] = []
    rejected: list[tuple[str, str]] = []
    seen: set[str] = set()
    for path in sorted(raw_dir.glob("*.json")) + sorted(raw_dir.glob("*.jsonl")):
        with path.open("r", encoding="utf-8") as handle:
            if path.suffix == ".json":
                raws = [json.load(handle)]
            else:
                raws = [json.loads(line) for line in handle if line.strip()]
        for i, raw in enumerate(raws):
            source = f"{path.name}#{i}"
            try:
                record = ingest_paper(raw)
            except IngestError as exc:
                rejected.append((source, exc.reason))
                continue
            if record.id in seen:
                rejected.append((source, f"duplicate id {record.id}"))
                continue
            seen.add(record.id)
            records.append(record)
    return Corpus(records), rejected
