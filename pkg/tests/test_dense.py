import logging

import numpy as np
import pytest

from citepred.dense import (
    EmbeddingVector,
    HashingProvider,
    PrecomputedProvider,
    RemoteProvider,
    build_dense_index,
    dense_search,
    embed_corpus,
    load_vectors,
    save_vectors,
)
from citepred.errors import (
    ProviderError,
    ProviderTransportError,
    ValidationError,
    VectorFormatError,
)
from citepred.records import CorpusLevel

import oracles


def random_vectors(n: int, dim: int, seed: int) -> list[EmbeddingVector]:
    rng = np.random.default_rng(seed)
    return [EmbeddingVector(f"v{i:05d}", rng.standard_normal(dim)) for i in range(n)]


class TestVectorIO:
    def test_jsonl_round_trip(self, tmp_path):
        vectors = random_vectors(10, 64, seed=0)
        path = tmp_path / "vectors.jsonl"
        save_vectors(vectors, path)
        loaded = load_vectors(path)
        assert len(loaded) == 10
        for original, again in zip(vectors, loaded):
            assert again.id == original.id
            np.testing.assert_allclose(again.values, original.values, atol=1e-7)

    def test_binary_round_trip(self, tmp_path):
        vectors = random_vectors(17, 32, seed=1)
        path = tmp_path / "vectors.bin"
        save_vectors(vectors, path, fmt="binary")
        loaded = load_vectors(path)
        assert [v.id for v in loaded] == [v.id for v in vectors]
        for original, again in zip(vectors, loaded):
            np.testing.assert_allclose(again.values, original.values, atol=1e-6)

    def test_dimension_mismatch_names_offender(self, tmp_path):
        vectors = random_vectors(5, 64, seed=2)
        vectors[3] = EmbeddingVector("v00003", np.ones(63))
        path = tmp_path / "vectors.jsonl"
        save_vectors(vectors, path)
        with pytest.raises(VectorFormatError) as err:
            load_vectors(path)
        assert "v00003" in str(err.value)

    def test_non_finite_rejected(self, tmp_path):
        vectors = random_vectors(3, 8, seed=3)
        vectors[1].values[0] = float("nan")
        path = tmp_path / "vectors.jsonl"
        save_vectors(vectors, path)
        with pytest.raises(VectorFormatError) as err:
            load_vectors(path)
        assert "v00001" in str(err.value)

    def test_zero_norm_rejected(self, tmp_path):
        vectors = random_vectors(3, 8, seed=4)
        vectors[2] = EmbeddingVector("v00002", np.zeros(8))
        path = tmp_path / "vectors.jsonl"
        save_vectors(vectors, path)
        with pytest.raises(VectorFormatError):
            load_vectors(path)


class TestExactSearch:
    def test_identical_vector_scores_one(self):
        vectors = random_vectors(20, 16, seed=5)
        index = build_dense_index(vectors, CorpusLevel.L1)
        result = dense_search(index, vectors[7].values, k=3)
        assert result.entries[0][0] == "v00007"
        assert result.entries[0][1] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_vector_scores_zero(self):
        index = build_dense_index([EmbeddingVector("only", np.array([1.0, 0.0]))],
                                  CorpusLevel.L1)
        result = dense_search(index, np.array([0.0, 1.0]), k=1)
        assert result.entries[0][1] == pytest.approx(0.0, abs=1e-12)

    def test_matches_brute_force_on_1000(self):
        vectors = random_vectors(1000, 24, seed=6)
        index = build_dense_index(vectors, CorpusLevel.L1)
        rng = np.random.default_rng(7)
        ids = [v.id for v in vectors]
        matrix = [v.values for v in vectors]
        for _ in range(5):
            query = rng.standard_normal(24)
            expected = oracles.brute_force_cosine_topk(ids, matrix, query, 10)
            got = dense_search(index, query, k=10)
            assert got.ids() == [doc for doc, _ in expected]
            for (_, got_score), (_, want_score) in zip(got.entries, expected):
                assert got_score == pytest.approx(want_score, abs=1e-6)

    def test_scale_invariance(self):
        vectors = random_vectors(50, 12, seed=8)
        scaled = [EmbeddingVector(v.id, v.values * 37.5) for v in vectors]
        query = np.random.default_rng(9).standard_normal(12)
        a = dense_search(build_dense_index(vectors, CorpusLevel.L1), query, k=10)
        b = dense_search(build_dense_index(scaled, CorpusLevel.L1), query, k=10)
        assert a.ids() == b.ids()
        for (_, sa), (_, sb) in zip(a.entries, b.entries):
            assert sa == pytest.approx(sb, abs=1e-9)

    def test_empty_index_empty_result(self):
        index = build_dense_index([], CorpusLevel.L1)
        assert len(dense_search(index, np.ones(4), k=5)) == 0

    def test_dim_mismatch_rejected(self):
        index = build_dense_index(random_vectors(5, 8, seed=10), CorpusLevel.L1)
        with pytest.raises(ValidationError):
            dense_search(index, np.ones(7), k=2)

    def test_duplicate_ids_rejected(self):
        duplicated = [EmbeddingVector("same", np.ones(4)), EmbeddingVector("same", np.ones(4))]
        with pytest.raises(VectorFormatError):
            build_dense_index(duplicated, CorpusLevel.L1)


class TestApproximateSearch:
    def test_recall_against_exact(self):
        vectors = random_vectors(2000, 64, seed=11)
        exact_index = build_dense_index(vectors, CorpusLevel.L1)
        approx_index = build_dense_index(vectors, CorpusLevel.L1, approximate=True, seed=11)
        rng = np.random.default_rng(12)
        hits = total = 0
        for _ in range(50):
            query = rng.standard_normal(64)
            truth = set(dense_search(exact_index, query, k=10).ids())
            got = set(dense_search(approx_index, query, k=10, mode="approximate").ids())
            hits += len(truth & got)
            total += len(truth)
        assert hits / total >= 0.95

    def test_approximate_mode_without_structure_falls_back(self):
        index = build_dense_index(random_vectors(30, 8, seed=13), CorpusLevel.L1)
        query = np.random.default_rng(14).standard_normal(8)
        exact = dense_search(index, query, k=5)
        approx = dense_search(index, query, k=5, mode="approximate")
        assert exact.entries == approx.entries


class TestProviders:
    def test_precomputed_lookup(self):
        vectors = random_vectors(4, 6, seed=15)
        provider = PrecomputedProvider(vectors)
        out = provider.embed(["v00002"])[0]
        np.testing.assert_allclose(out, vectors[2].values)

    def test_precomputed_unknown_key(self):
        provider = PrecomputedProvider(random_vectors(2, 4, seed=16))
        with pytest.raises(ProviderError):
            provider.embed(["missing"])

    def test_hashing_provider_deterministic(self):
        provider = HashingProvider(dim=32, seed=3)
        a = provider.embed(["graph retrieval systems"])[0]
        b = HashingProvider(dim=32, seed=3).embed(["graph retrieval systems"])[0]
        np.testing.assert_allclose(a, b)
        assert np.linalg.norm(a) == pytest.approx(1.0)

    def test_hashing_provider_tracks_overlap(self):
        provider = HashingProvider(dim=64, seed=4)
        base, similar, unrelated = provider.embed([
            "graph neural retrieval", "graph neural ranking", "quantum chemistry lab",
        ])
        assert float(base @ similar) > float(base @ unrelated)

    def test_remote_provider_retries_then_fails(self):
        calls = []

        def transport(payload):
            calls.append(payload)
            raise ProviderTransportError("connection refused")

        provider = RemoteProvider("http://embedder.local", max_retries=2,
                                  transport=transport, sleep=lambda _: None)
        with pytest.raises(ProviderTransportError):
            provider.embed(["text"])
        assert len(calls) == 3  # initial + 2 retries

    def test_remote_provider_recovers_after_transient_failure(self):
        state = {"failures": 1}

        def transport(payload):
            if state["failures"] > 0:
                state["failures"] -= 1
                raise ProviderTransportError("flaky")
            return {"data": [{"embedding": [1.0, 2.0]} for _ in payload["input"]]}

        provider = RemoteProvider("http://embedder.local", transport=transport,
                                  sleep=lambda _: None)
        out = provider.embed(["one text"])
        np.testing.assert_allclose(out[0], [1.0, 2.0])

    def test_remote_provider_chunks_long_text(self, caplog):
        def transport(payload):
            return {"data": [{"embedding": [float(len(t)), 1.0]} for t in payload["input"]]}

        provider = RemoteProvider("http://embedder.local", max_chars=10,
                                  transport=transport, sleep=lambda _: None)
        with caplog.at_level(logging.WARNING):
            out = provider.embed(["x" * 25])
        assert "chunk" in caplog.text
        # chunks of 10, 10, 5 -> mean of [10,1],[10,1],[5,1]
        np.testing.assert_allclose(out[0], [25 / 3, 1.0])

    def test_embed_corpus_shapes(self, planted):
        corpus, _, _ = planted
        provider = HashingProvider(dim=16, seed=5)
        vectors = embed_corpus(corpus, CorpusLevel.L1, provider, batch_size=128)
        assert len(vectors) == len(corpus)
        assert all(v.dim == 16 for v in vectors)
