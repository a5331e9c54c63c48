"""Readers for the corpus and training-split JSONL files.

The trainer talks to the retrieval stack only through file formats: the
corpus is one JSON object per line with three text levels, the training
split is one instance per line with normalized ground-truth reference
titles, and vectors go out as {id, vector} rows.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

_NON_WORD = re.compile(r"[\W_]+", re.UNICODE)

LEVEL_FIELDS = {"L1": "level1_text", "L2": "level2_text", "L3": "level3_text"}
LEVELS = ("L1", "L2", "L3")


def normalize_title(title: str) -> str:
    """Same canonical form the corpus files use for reference titles."""
    text = unicodedata.normalize("NFKD", title)
    text = "".join(ch for ch in text if not unicodedata.combining(ch))
    text = text.casefold()
    return _NON_WORD.sub(" ", text).strip()


@dataclass
class CorpusDoc:
    id: str
    title: str
    texts: dict[str, str]  # level name -> text

    @property
    def normalized_title(self) -> str:
        return normalize_title(self.title)


@dataclass
class QueryInstance:
    query_id: str
    title: str
    abstract: str
    ground_truth_refs: list[str]  # normalized titles

    @property
    def query_text(self) -> str:
        return f"{self.title}\n{self.abstract}"


def load_corpus_docs(path: str | Path) -> list[CorpusDoc]:
    docs: list[CorpusDoc] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                docs.append(CorpusDoc(
                    id=str(row["id"]),
                    title=str(row["title"]),
                    texts={level: str(row[field]) for level, field in LEVEL_FIELDS.items()},
                ))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from exc
    return docs


def load_training_split(path: str | Path) -> list[QueryInstance]:
    instances: list[QueryInstance] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                instances.append(QueryInstance(
                    query_id=str(row["query_id"]),
                    title=str(row["title"]),
                    abstract=str(row["abstract"]),
                    ground_truth_refs=[str(t) for t in row["ground_truth_refs"]],
                ))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from exc
    return instances


def save_vectors(rows: list[tuple[str, list[float]]], path: str | Path) -> None:
    """Shared vector format: one {id, vector} object per line."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for doc_id, vector in rows:
            handle.write(json.dumps({"id": doc_id, "vector": vector}) + "\n")


def parse_kv_config(path: str | Path) -> dict[str, str]:
    """Plain-text 'key = value' training configuration."""
    out: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}: line {line_no}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out
