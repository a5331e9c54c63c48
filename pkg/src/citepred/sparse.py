"""Lexical retrieval: inverted index with BM25 and cosine TF-IDF scoring.

Scoring is exact and deliberately simple so a full-scan oracle can verify
it term for term. No stemming or stopword removal by default; both are
index-time switches that the index remembers for query time.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorpusFormatError, ValidationError
from .ranking import RankedList
from .records import Corpus, CorpusLevel

BM25_K1 = 1.2
BM25_B = 0.75

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

# Small built-in stopword list; only applied when the switch is on.
STOPWORDS = frozenset(
    "a an and are as at be by for from has have in is it its of on or that the "
    "this to was were which with we our".split()
)

_SUFFIXES = ("ingly", "edly", "ing", "ed", "ies", "es", "s", "ly")


def _stem(token: str) -> str:
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def tokenize(text: str, *, stopwords: bool = False, stem: bool = False) -> list[str]:
    """Lowercased, NFKC-normalized alphanumeric tokens."""
    tokens = _TOKEN.findall(unicodedata.normalize("NFKC", text).casefold())
    if stopwords:
        tokens = [t for t in tokens if t not in STOPWORDS]
    if stem:
        tokens = [_stem(t) for t in tokens]
    return tokens


@dataclass
class InvertedIndex:
    level: CorpusLevel
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    doc_count: int
    avg_doc_length: float
    use_stopwords: bool = False
    use_stem: bool = False
    default_scorer: str = "bm25"
    _doc_norms: dict[str, float] = field(default_factory=dict, repr=False)

    def vocabulary_size(self) -> int:
        return len(self.postings)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def _tokenize(self, text: str) -> list[str]:
        return tokenize(text, stopwords=self.use_stopwords, stem=self.use_stem)

    def tfidf_doc_norm(self, doc_id: str) -> float:
        """Euclidean norm of the document's ln(1+tf)*ln(N/df) vector."""
        if not self._doc_norms:
            squares: dict[str, float] = {d: 0.0 for d in self.doc_lengths}
            for term, postings in self.postings.items():
                idf = math.log(self.doc_count / len(postings))
                for doc, tf in postings:
                    weight = math.log(1.0 + tf) * idf
                    squares[doc] += weight * weight
            self._doc_norms = {d: math.sqrt(v) for d, v in squares.items()}
        return self._doc_norms[doc_id]


def build_sparse_index(
    corpus: Corpus | Iterable,
    level: CorpusLevel,
    *,
    stopwords: bool = False,
    stem: bool = False,
    default_scorer: str = "bm25",
) -> InvertedIndex:
    if default_scorer not in ("bm25", "tfidf"):
        raise ValidationError(f"unknown scorer {default_scorer!r}")
    records = list(corpus)
    if not records:
        raise ValidationError("cannot index an empty corpus")
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    for record in records:
        tokens = tokenize(record.text_for(level), stopwords=stopwords, stem=stem)
        doc_lengths[record.id] = len(tokens)
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, {})[record.id] = tf
    doc_count = len(records)
    avg_len = sum(doc_lengths.values()) / doc_count
    return InvertedIndex(
        level=level,
        postings={t: sorted(docs.items()) for t, docs in sorted(postings.items())},
        doc_lengths=doc_lengths,
        doc_count=doc_count,
        avg_doc_length=avg_len,
        use_stopwords=stopwords,
        use_stem=stem,
        default_scorer=default_scorer,
    )


def bm25_idf(doc_count: int, df: int) -> float:
    return math.log((doc_count - df + 0.5) / (df + 0.5) + 1.0)


def _bm25_scores(index: InvertedIndex, query_tokens: Sequence[str],
                 k1: float, b: float) -> dict[str, float]:
    qtf: dict[str, int] = {}
    for token in query_tokens:
        qtf[token] = qtf.get(token, 0) + 1
    scores: dict[str, float] = {}
    for term, q_count in qtf.items():
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = bm25_idf(index.doc_count, len(postings))
        for doc, tf in postings:
            norm = 1.0 - b + b * index.doc_lengths[doc] / index.avg_doc_length
            part = tf * (k1 + 1.0) / (tf + k1 * norm)
            scores[doc] = scores.get(doc, 0.0) + q_count * idf * part
    return scores


def _tfidf_scores(index: InvertedIndex, query_tokens: Sequence[str]) -> dict[str, float]:
    qtf: dict[str, int] = {}
    for token in query_tokens:
        qtf[token] = qtf.get(token, 0) + 1
    query_weights: dict[str, float] = {}
    for term, q_count in qtf.items():
        df = index.df(term)
        if df == 0:
            continue
        idf = math.log(index.doc_count / df)
        weight = math.log(1.0 + q_count) * idf
        if weight != 0.0:
            query_weights[term] = weight
    query_norm = math.sqrt(sum(w * w for w in query_weights.values()))
    if query_norm == 0.0:
        return {}
    scores: dict[str, float] = {}
    for term, q_weight in query_weights.items():
        idf = math.log(index.doc_count / index.df(term))
        for doc, tf in index.postings[term]:
            scores[doc] = scores.get(doc, 0.0) + q_weight * math.log(1.0 + tf) * idf
    out: dict[str, float] = {}
    for doc, dot in scores.items():
        doc_norm = index.tfidf_doc_norm(doc)
        if doc_norm > 0.0:
            out[doc] = dot / (query_norm * doc_norm)
    return out


def sparse_search(
    index: InvertedIndex,
    query: str,
    scorer: str = "bm25",
    k: int = 10,
    *,
    k1: float = BM25_K1,
    b: float = BM25_B,
) -> RankedList:
    """Top-k documents for a text query; zero scores are never reported."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    tokens = index._tokenize(query)
    if not tokens:
        return RankedList()
    if scorer == "bm25":
        scores = _bm25_scores(index, tokens, k1, b)
    elif scorer == "tfidf":
        scores = _tfidf_scores(index, tokens)
    else:
        raise ValidationError(f"unknown scorer {scorer!r}")
    scores = {doc: s for doc, s in scores.items() if s != 0.0}
    return RankedList.from_scores(scores, k=k)


INDEX_FORMAT = "citepred-sparse"
INDEX_VERSION = 1


def save_sparse_index(index: InvertedIndex, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        header = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "level": index.level.name,
            "doc_count": index.doc_count,
            "avg_doc_length": index.avg_doc_length,
            "stopwords": index.use_stopwords,
            "stem": index.use_stem,
            "scorer": index.default_scorer,
        }
        handle.write(json.dumps(header) + "\n")
        for doc, length in index.doc_lengths.items():
            handle.write(json.dumps({"doc": doc, "length": length}) + "\n")
        for term, postings in index.postings.items():
            handle.write(json.dumps({"term": term, "postings": postings}) + "\n")


def load_sparse_index(path: str | Path) -> InvertedIndex:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        try:
            header = json.loads(handle.readline())
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{path.name}: bad index header: {exc}") from exc
        if header.get("format") != INDEX_FORMAT:
            raise CorpusFormatError(f"{path.name}: not a sparse index file")
        if header.get("version") != INDEX_VERSION:
            raise CorpusFormatError(f"{path.name}: unsupported index version {header.get('version')}")
        doc_lengths: dict[str, int] = {}
        postings: dict[str, list[tuple[str, int]]] = {}
        for line_no, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path.name}: line {line_no}: {exc}") from exc
            if "doc" in data:
                doc_lengths[str(data["doc"])] = int(data["length"])
            elif "term" in data:
                postings[str(data["term"])] = [(str(d), int(tf)) for d, tf in data["postings"]]
            else:
                raise CorpusFormatError(f"{path.name}: line {line_no}: unknown row type")
    return InvertedIndex(
        level=CorpusLevel.parse(header["level"]),
        postings=postings,
        doc_lengths=doc_lengths,
        doc_count=int(header["doc_count"]),
        avg_doc_length=float(header["avg_doc_length"]),
        use_stopwords=bool(header["stopwords"]),
        use_stem=bool(header["stem"]),
        default_scorer=str(header.get("scorer", "bm25")),
    )
