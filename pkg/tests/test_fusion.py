import random

import pytest

from citepred.errors import RetrievalError, ValidationError
from citepred.fusion import (
    make_sparse_searcher,
    retrieve_multilevel,
    rrf_fuse,
    single_level_search,
)
from citepred.metrics import mrr_at_k
from citepred.ranking import RankedList
from citepred.records import CorpusLevel
from citepred.sparse import build_sparse_index


def ranked(*ids: str) -> RankedList:
    return RankedList(entries=tuple((doc, float(len(ids) - i)) for i, doc in enumerate(ids)))


def random_ranked(rng: random.Random, pool: list[str], length: int) -> RankedList:
    return ranked(*rng.sample(pool, length))


class TestRRFHandCases:
    def test_single_list_rank_one(self):
        fused = rrf_fuse([ranked("a")], c=60)
        assert fused.entries[0][1] == pytest.approx(1 / 61, abs=1e-9)

    def test_two_lists_ranks_one_and_three(self):
        lists = [ranked("a", "b", "c"), ranked("x", "y", "a")]
        fused = rrf_fuse(lists, c=60)
        score = dict(fused.entries)["a"]
        assert score == pytest.approx(1 / 61 + 1 / 63, abs=1e-9)

    def test_absent_doc_absent_from_fusion(self):
        fused = rrf_fuse([ranked("a"), ranked("b")], c=60)
        assert "z" not in fused.ids()

    def test_consensus_beats_single_appearance(self):
        # rank 1 in two lists (2/61) > rank 1 in one list (1/61)
        lists = [ranked("both", "x"), ranked("both", "y"), ranked("solo")]
        fused = rrf_fuse(lists, c=60)
        assert fused.ids()[0] == "both"
        scores = dict(fused.entries)
        assert scores["both"] == pytest.approx(2 / 61, abs=1e-9)
        assert scores["solo"] == pytest.approx(1 / 61, abs=1e-9)

    def test_identical_lists_preserve_order(self):
        shared = ranked("a", "b", "c", "d")
        fused = rrf_fuse([shared, shared, shared], c=60)
        assert fused.ids() == ["a", "b", "c", "d"]

    def test_validation(self):
        with pytest.raises(ValidationError):
            rrf_fuse([], c=60)
        with pytest.raises(ValidationError):
            rrf_fuse([ranked("a")], c=0)


class TestRRFProperties:
    def test_permutation_invariance(self):
        rng = random.Random(17)
        pool = [f"d{i}" for i in range(30)]
        for _ in range(100):
            lists = [random_ranked(rng, pool, rng.randint(1, 12)) for _ in range(3)]
            base = rrf_fuse(lists, c=60)
            shuffled = lists[:]
            rng.shuffle(shuffled)
            assert rrf_fuse(shuffled, c=60).entries == base.entries

    def test_monotone_transform_invariance(self):
        # fusion depends on ranks only: rescaling scores changes nothing
        rng = random.Random(18)
        pool = [f"d{i}" for i in range(25)]
        for _ in range(100):
            lists = [random_ranked(rng, pool, rng.randint(1, 10)) for _ in range(3)]
            transformed = []
            for lst in lists:
                scale = rng.uniform(0.1, 5.0)
                shift = rng.uniform(0.0, 3.0)
                transformed.append(RankedList(entries=tuple(
                    (doc, score * scale + shift) for doc, score in lst.entries)))
            assert rrf_fuse(transformed, c=60).entries == rrf_fuse(lists, c=60).entries

    def test_score_bounds(self):
        rng = random.Random(19)
        pool = [f"d{i}" for i in range(25)]
        for _ in range(50):
            lists = [random_ranked(rng, pool, rng.randint(1, 10)) for _ in range(3)]
            fused = rrf_fuse(lists, c=60)
            for _, score in fused.entries:
                assert 0.0 < score <= len(lists) / 61 + 1e-12


class TestMultiLevel:
    def _searchers(self, corpus):
        return {
            level: make_sparse_searcher(build_sparse_index(corpus, level), "bm25")
            for level in CorpusLevel
        }

    def test_missing_level_names_it(self, planted):
        corpus, _, _ = planted
        searchers = self._searchers(corpus)
        del searchers[CorpusLevel.L2]
        with pytest.raises(RetrievalError) as err:
            retrieve_multilevel("query text", searchers, 5)
        assert "L2" in str(err.value)

    def test_single_level_matches_multilevel_entry(self, planted):
        corpus, queries, _ = planted
        searchers = self._searchers(corpus)
        query = next(iter(queries))
        text = f"{query.title}\n{query.abstract}"
        multi = retrieve_multilevel(text, searchers, 10)
        solo = single_level_search(text, searchers, CorpusLevel.L1, 10)
        assert solo.entries == multi.per_level[CorpusLevel.L1].entries

    def test_disjoint_levels_fuse_to_3k(self):
        searchers = {
            CorpusLevel.L1: lambda q, k: ranked(*[f"a{i}" for i in range(k)]),
            CorpusLevel.L2: lambda q, k: ranked(*[f"b{i}" for i in range(k)]),
            CorpusLevel.L3: lambda q, k: ranked(*[f"c{i}" for i in range(k)]),
        }
        result = retrieve_multilevel("anything", searchers, 5)
        assert len(result.fused) == 15

    def test_fused_bounded_by_3k(self, planted):
        corpus, queries, _ = planted
        searchers = self._searchers(corpus)
        for query in list(queries)[:5]:
            result = retrieve_multilevel(f"{query.title}\n{query.abstract}", searchers, 7)
            assert len(result.fused) <= 21
            per_level_ids = set()
            for lst in result.per_level.values():
                per_level_ids.update(lst.ids())
            assert set(result.fused.ids()) == per_level_ids

    def test_k_validation(self, planted):
        corpus, _, _ = planted
        with pytest.raises(ValidationError):
            retrieve_multilevel("q", self._searchers(corpus), 0)

    def test_fused_mrr_at_least_each_single_level(self, planted):
        """On the planted corpus, fusing the three levels beats every single
        level on mean reciprocal rank."""
        corpus, queries, truth = planted
        searchers = self._searchers(corpus)
        per_mode: dict[str, list[list[str]]] = {"L1": [], "L2": [], "L3": [], "fused": []}
        relevant = []
        for query in queries:
            text = f"{query.title}\n{query.abstract}"
            result = retrieve_multilevel(text, searchers, 50)
            for level in CorpusLevel:
                per_mode[level.name].append(result.per_level[level].ids())
            per_mode["fused"].append(result.fused.ids())
            relevant.append(set(truth[query.id]))
        values = {mode: mrr_at_k(lists, relevant, 50) for mode, lists in per_mode.items()}
        for level in ("L1", "L2", "L3"):
            assert values["fused"] >= values[level], values
