import json
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from citetrainer.data import load_corpus_docs, load_training_split

TOPICS = 20
DOCS_PER_TOPIC = 100
TARGET_SHIFT = 7  # topic t papers cite topic (t + 7) % TOPICS


def _words(topic: int) -> list[str]:
    return [f"v{topic}w{j}" for j in range(30)]


def build_fixture_files(tmp_dir: Path, n_train: int = 300, n_eval: int = 100,
                        seed: int = 5) -> dict:
    """Planted-citation corpus: 2,000 docs in 20 topics; query papers use one
    topic's vocabulary but cite papers from a shifted topic with a disjoint
    vocabulary, so lexical overlap carries no signal about ground truth."""
    rng = random.Random(seed)
    corpus_rows = []
    titles = {}
    for i in range(TOPICS * DOCS_PER_TOPIC):
        topic = i % TOPICS
        words = _words(topic)
        theme = rng.sample(words, 6)
        title = f"Doc {i} about {theme[0]} {theme[1]}"
        abstract = f"Treats {theme[0]} {theme[1]} with {' '.join(rng.sample(words, 3))}."
        level1 = f"topic{topic}\n{title}\n{abstract}"
        level2 = level1 + f"\n\nIntro covering {theme[2]} {theme[3]}."
        level3 = level2 + f"\n\nBody about {theme[4]} {theme[5]} " \
                          f"{' '.join(rng.sample(words, 4))}."
        titles[i] = title
        corpus_rows.append({
            "id": f"d{i:04d}", "title": title, "abstract": abstract,
            "domain_category": f"topic{topic}", "authors": [], "year": 2020,
            "venue": "Fixture", "level1_text": level1, "level2_text": level2,
            "level3_text": level3, "references": [],
        })

    def make_queries(count: int, tag: str, qseed: int) -> list[dict]:
        qrng = random.Random(qseed)
        rows = []
        for q in range(count):
            source = q % TOPICS
            target = (source + TARGET_SHIFT) % TOPICS
            words = _words(source)
            cited = qrng.sample(range(DOCS_PER_TOPIC), qrng.randint(3, 6))
            cited_ids = [target + c * TOPICS for c in cited]
            rows.append({
                "query_id": f"{tag}{q:04d}",
                "title": f"Query {tag}{q} on {' '.join(qrng.sample(words, 2))}",
                "abstract": f"Discusses {' '.join(qrng.sample(words, 6))} broadly.",
                "ground_truth_refs": [titles[i].lower() for i in cited_ids],
                "_truth_ids": [f"d{i:04d}" for i in cited_ids],
            })
        return rows

    train_rows = make_queries(n_train, "tr", seed + 1)
    eval_rows = make_queries(n_eval, "ev", seed + 2)

    corpus_path = tmp_dir / "corpus.jsonl"
    with corpus_path.open("w") as handle:
        for row in corpus_rows:
            handle.write(json.dumps(row) + "\n")
    train_path = tmp_dir / "train_split.jsonl"
    with train_path.open("w") as handle:
        for row in train_rows:
            handle.write(json.dumps({k: v for k, v in row.items()
                                     if not k.startswith("_")}) + "\n")
    eval_truth = {row["query_id"]: row["_truth_ids"] for row in eval_rows}
    eval_path = tmp_dir / "eval_split.jsonl"
    with eval_path.open("w") as handle:
        for row in eval_rows:
            handle.write(json.dumps({k: v for k, v in row.items()
                                     if not k.startswith("_")}) + "\n")
    return {
        "corpus": corpus_path,
        "train": train_path,
        "eval": eval_path,
        "eval_truth": eval_truth,
    }


@pytest.fixture(scope="session")
def planted_citations(tmp_path_factory):
    tmp_dir = tmp_path_factory.mktemp("planted")
    paths = build_fixture_files(tmp_dir)
    docs = load_corpus_docs(paths["corpus"])
    train_split = load_training_split(paths["train"])
    eval_split = load_training_split(paths["eval"])
    return {
        "docs": docs,
        "train": train_split,
        "eval": eval_split,
        "eval_truth": paths["eval_truth"],
        "paths": paths,
    }
