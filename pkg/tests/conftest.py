import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import make_planted  # noqa: E402

from citepred.corpus import incremental_merge, remove_papers  # noqa: E402
from citepred.datasets import build_task1, build_task2  # noqa: E402


@pytest.fixture(scope="session")
def planted():
    """(retrieval corpus, query corpus, query id -> ground-truth doc ids)."""
    return make_planted()


@pytest.fixture(scope="session")
def planted_pipeline(planted):
    """The planted fixture pushed through the full dataset pipeline.

    Returns (clean corpus, task1 build, task2 build): query papers are
    removed from the corpus, so retrieval runs leakage-free.
    """
    corpus, queries, _ = planted
    pool = incremental_merge(corpus, queries)
    task1 = build_task1(pool)
    task2 = build_task2(pool)
    clean, _ = remove_papers(pool, set(task1.query_ids) | set(task2.query_ids))
    return clean, task1, task2
