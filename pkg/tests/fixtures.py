"""Synthetic corpora with planted citation structure.

The planted corpus gives every paper a small "theme" vocabulary whose words
are revealed at different text levels (abstract, introduction, body). Query
papers cite a handful of corpus papers and mention a subset of each cited
paper's theme words, so every retrieval level sees a genuine but partial
signal and fusion has something real to aggregate. Ground truth is known by
construction.
"""

from __future__ import annotations

import random

from citepred.corpus import ingest_paper
from citepred.records import Corpus

TOPICS = 10
TOPIC_POOL = 40  # theme words available per topic
THEME_WORDS = 6  # per paper: 2 abstract-only, 2 intro-only, 2 body-only


def _topic_words(topic: int) -> list[str]:
    return [f"t{topic}w{j}" for j in range(TOPIC_POOL)]


def make_corpus_raw(n_docs: int = 500, seed: int = 6) -> list[dict]:
    """Raw records for the reference corpus (no references of their own)."""
    rng = random.Random(seed)
    themes = [rng.sample(_topic_words(i % TOPICS), THEME_WORDS) for i in range(n_docs)]
    raws: list[dict] = []
    for i in range(n_docs):
        topic = i % TOPICS
        pool = _topic_words(topic)
        theme = themes[i]
        common = rng.sample(pool, 8)
        title = f"Study {i} of {theme[0]} and {theme[1]} methods"
        abstract = (
            f"We investigate {theme[0]} together with {theme[1]} in the context of "
            f"{' '.join(common[:4])}. Filler sentence about general findings f{i}a f{i}b."
        )
        # Introduction and body quote theme words of other same-topic papers,
        # the way citing passages echo the cited paper's vocabulary: several
        # words of the same peer in one breath. The quotes make the longer
        # levels noisy where the short level stays precise.
        peers = [j for j in range(n_docs) if j % TOPICS == topic and j != i]
        intro_quotes = [rng.choice(themes[j]) for j in rng.sample(peers, min(2, len(peers)))]
        body_quotes: list[str] = []
        for j in rng.sample(peers, min(4, len(peers))):
            body_quotes.extend(rng.sample(themes[j], 3))
        intro = (
            f"1 Introduction\nPrior work considered {theme[2]} and {theme[3]} "
            f"alongside {' '.join(common[4:6])} and touched on {' '.join(intro_quotes)}. "
            f"More context c{i}a follows here."
        )
        body = (
            f"2 Method\nOur approach builds on {theme[4]} combined with {theme[5]} "
            f"and uses {' '.join(common[6:8])}. Extra detail c{i}b c{i}c c{i}d. "
            f"Related systems explored {' '.join(body_quotes[:6])} before.\n"
            f"3 Results\nNumbers improve across the board for {theme[4]} runs, "
            f"echoing trends from {' '.join(body_quotes[6:])} literature.\n"
            f"4 Conclusion\nWe summarized work on {theme[0]} and {theme[5]}."
        )
        raws.append(
            {
                "id": f"d{i:04d}",
                "title": title,
                "abstract": abstract,
                "domain_category": f"topic{topic}",
                "authors": [f"Author {i}"],
                "year": 2015 + (i % 10),
                "venue": "Synthetic Proceedings",
                "body": f"{intro}\n{body}",
                "references": [],
                "_theme": theme,  # consumed by the query generator, not ingest
            }
        )
    return raws


def make_query_raw(
    corpus_raws: list[dict],
    n_queries: int = 50,
    seed: int = 11,
    refs_low: int = 3,
    refs_high: int = 5,
) -> list[dict]:
    """Raw query papers citing corpus papers, with [n] markers in sections."""
    rng = random.Random(seed)
    queries = []
    for q in range(n_queries):
        topic = q % TOPICS
        topic_docs = [r for r in corpus_raws if r["domain_category"] == f"topic{topic}"]
        cited = rng.sample(topic_docs, rng.randint(refs_low, refs_high))
        mention_words: list[str] = []
        for doc in cited:
            theme = doc["_theme"]
            # Both title/abstract words (surveys echo cited titles) plus one
            # introduction word and one body word, so the short level is
            # precise and every deeper level confirms the same paper.
            picks = [theme[0], theme[1], rng.choice(theme[2:4]), rng.choice(theme[4:6])]
            mention_words.extend(picks)
        rng.shuffle(mention_words)
        pool = _topic_words(topic)
        common = rng.sample(pool, 2)
        title = f"Survey {q} on {mention_words[0]} and {mention_words[1]}"
        abstract = (
            f"This survey covers {' '.join(mention_words)} with attention to "
            f"{' '.join(common)}. Unique marker q{q}x."
        )
        # Sections cite references by [n]; counts vary so section selection
        # and the per-section top-3 rule both have work to do.
        n = len(cited)
        intro_lines = [f"The area grew quickly [1] and matured [2]." if n >= 2 else "The area grew quickly [1]."]
        intro_lines.append(f"Foundational ideas appear in [1] and {common[0]} studies.")
        method_cites = " ".join(f"[{1 + (j % n)}]" for j in range(min(4, n + 1)))
        body = (
            f"1 Introduction\n{' '.join(intro_lines)}\n"
            f"2 Method\nWe extend {mention_words[0]} following {method_cites} closely.\n"
            f"3 Results\nComparisons against [{n}] show gains on {common[1]}.\n"
            f"4 Conclusion\nWe close the survey of {mention_words[1]}.\n"
            f"References\n" + "\n".join(f"[{j + 1}] {doc['title']}" for j, doc in enumerate(cited))
        )
        queries.append(
            {
                "id": f"q{q:04d}",
                "title": title,
                "abstract": abstract,
                "domain_category": f"topic{topic}",
                "authors": [f"Writer {q}"],
                "year": 2025,
                "venue": "Synthetic Surveys",
                "body": body,
                "references": [{"title": doc["title"], "id": doc["id"]} for doc in cited],
            }
        )
    return queries


def ingest_raws(raws: list[dict]) -> Corpus:
    return Corpus(ingest_paper({k: v for k, v in raw.items() if not k.startswith("_")})
                  for raw in raws)


def make_planted(
    n_docs: int = 500,
    n_queries: int = 50,
    seed: int = 6,
) -> tuple[Corpus, Corpus, dict[str, list[str]]]:
    """(retrieval corpus, query corpus, query id -> ground-truth doc ids)."""
    corpus_raws = make_corpus_raw(n_docs, seed=seed)
    query_raws = make_query_raw(corpus_raws, n_queries, seed=seed + 4)
    corpus = ingest_raws(corpus_raws)
    queries = ingest_raws(query_raws)
    truth = {raw["id"]: [ref["id"] for ref in raw["references"]] for raw in query_raws}
    return corpus, queries, truth
