from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trialscreen.chunking import ChunkingConfig, DocumentChunk
from trialscreen.corpus import Specialty
from trialscreen.errors import (DimensionMismatchError, StoreBuildError,
                                ValidationError)
from trialscreen.vectorstore import (HashEmbedder, RetrievalConfig, build_store,
                                     build_union_store, load_store, save_store,
                                     search)


def make_chunk(doc_id="D1", chunk_index=0, text="finding", patient_id="P1",
               tokenizer_id="whitespace"):
    return DocumentChunk(doc_id=doc_id, patient_id=patient_id,
                         note_type="Progress Note",
                         created_date=date(2024, 1, 1),
                         chunk_index=chunk_index, token_start=0,
                         token_end=max(1, len(text.split())), text=text,
                         tokenizer_id=tokenizer_id)


def store_of(texts, dimension=16, specialty=None):
    chunks = [make_chunk(doc_id=f"D{i}", text=t) for i, t in enumerate(texts)]
    result = build_store(chunks, HashEmbedder(dimension), specialty=specialty)
    assert result.failures == ()
    return result.store


class TestHashEmbedder:
    def test_deterministic_and_unit_norm(self):
        emb = HashEmbedder(32)
        a = emb.embed_texts(["alpha", "beta"])
        b = emb.embed_texts(["alpha", "beta"])
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)

    def test_distinct_texts_distinct_vectors(self):
        emb = HashEmbedder(32)
        vecs = emb.embed_texts(["alpha", "beta"])
        assert not np.allclose(vecs[0], vecs[1])

    def test_identifier_carries_dimension(self):
        assert HashEmbedder(8).embedder_id == "hash:d8"

    def test_rejects_nonpositive_dimension(self):
        with pytest.raises(ValidationError):
            HashEmbedder(0)


class TestBuild:
    def test_build_scopes_patient_and_specialty(self):
        store = store_of(["a", "b"], specialty=Specialty.PATHOLOGY)
        assert store.patient_id == "P1"
        assert store.specialty is Specialty.PATHOLOGY
        assert len(store) == 2
        assert all(c.specialty is Specialty.PATHOLOGY for c in store.chunks)

    def test_multi_patient_rejected(self):
        chunks = [make_chunk(), make_chunk(doc_id="D2", patient_id="P2")]
        with pytest.raises(ValidationError):
            build_store(chunks, HashEmbedder(8))

    def test_mixed_tokenizers_rejected(self):
        chunks = [make_chunk(), make_chunk(doc_id="D2", tokenizer_id="subword:x")]
        with pytest.raises(ValidationError):
            build_store(chunks, HashEmbedder(8))

    def test_wrong_embedder_shape_aborts(self):
        class BadEmbedder:
            dimension = 8
            embedder_id = "bad"

            def embed_texts(self, texts):
                return np.zeros((len(texts), 5))

        with pytest.raises(StoreBuildError):
            build_store([make_chunk()], BadEmbedder())

    def test_empty_store(self):
        result = build_store([], HashEmbedder(8))
        assert len(result.store) == 0
        assert search(result.store, np.ones(8)) == []

    def test_union_store_canonical_order(self):
        a = store_of(["one", "two"], specialty=Specialty.PATHOLOGY)
        b = store_of(["three"], specialty=Specialty.RADIOLOGY)
        union_ab = build_union_store([a, b])
        union_ba = build_union_store([b, a])
        assert [c.doc_id for c in union_ab.chunks] == [c.doc_id for c in union_ba.chunks]
        assert union_ab.specialty is None
        assert all(c.specialty is None for c in union_ab.chunks)
        assert len(union_ab) == 3


class TestSearch:
    def test_self_query_ranks_first(self):
        store = store_of(["alpha report", "beta report", "gamma report"])
        emb = HashEmbedder(16)
        query = emb.embed_texts(["beta report"])[0]
        results = search(store, query, RetrievalConfig(k=3))
        assert results[0][0].text == "beta report"
        assert results[0][1] == pytest.approx(1.0)

    def test_k_caps_results(self):
        store = store_of(["a", "b", "c"])
        assert len(search(store, np.ones(16), RetrievalConfig(k=2))) == 2
        assert len(search(store, np.ones(16), RetrievalConfig(k=99))) == 3

    def test_matches_exhaustive_cosine_scan(self):
        rng = np.random.default_rng(5)
        texts = [f"note {i} {rng.integers(0, 100)}" for i in range(40)]
        store = store_of(texts, dimension=12)
        query = rng.standard_normal(12)
        results = search(store, query, RetrievalConfig(k=10))

        qn = query / np.linalg.norm(query)
        expected = []
        for c in store.chunks:
            sim = float(np.dot(c.embedding / np.linalg.norm(c.embedding), qn))
            expected.append((-sim, c.doc_id, c.chunk_index))
        expected.sort()
        got = [(c.doc_id, c.chunk_index) for c, _ in results]
        assert got == [(d, i) for _, d, i in expected[:10]]
        for (c, s), (neg_sim, _, _) in zip(results, expected):
            assert s == pytest.approx(-neg_sim, abs=1e-12)

    def test_tie_order_is_doc_then_chunk(self):
        emb = HashEmbedder(8)
        chunks = [make_chunk(doc_id=d, chunk_index=i, text="same text")
                  for d in ("D2", "D1") for i in (1, 0)]
        store = build_store(chunks, emb).store
        query = emb.embed_texts(["same text"])[0]
        results = search(store, query, RetrievalConfig(k=4))
        assert [(c.doc_id, c.chunk_index) for c, _ in results] == [
            ("D1", 0), ("D1", 1), ("D2", 0), ("D2", 1)]

    def test_zero_norm_query_sorts_everything_last(self):
        store = store_of(["a", "b"])
        results = search(store, np.zeros(16), RetrievalConfig(k=2))
        assert [s for _, s in results] == [-1.0, -1.0]

    def test_dimension_mismatch(self):
        store = store_of(["a"])
        with pytest.raises(DimensionMismatchError):
            search(store, np.ones(4))

    @given(n=st.integers(min_value=1, max_value=25),
           k=st.integers(min_value=1, max_value=30),
           seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_search_oracle_property(self, n, k, seed):
        rng = np.random.default_rng(seed)
        texts = [f"text {seed} {i}" for i in range(n)]
        store = store_of(texts, dimension=8)
        query = rng.standard_normal(8)
        results = search(store, query, RetrievalConfig(k=k))
        assert len(results) == min(k, n)
        sims = [s for _, s in results]
        assert sims == sorted(sims, reverse=True)
        qn = query / np.linalg.norm(query)
        best = max(float(np.dot(c.embedding, qn)) for c in store.chunks)
        assert results[0][1] == pytest.approx(best)


class TestSnapshots:
    def test_round_trip_bit_exact(self, tmp_path):
        store = store_of(["alpha", "beta", "gamma"], specialty=Specialty.RADIOLOGY)
        path = tmp_path / "store.json"
        save_store(store, path)
        loaded = load_store(path)
        assert loaded.patient_id == store.patient_id
        assert loaded.specialty is store.specialty
        assert loaded.embedder_id == store.embedder_id
        assert loaded.meta == store.meta
        for a, b in zip(store.chunks, loaded.chunks):
            assert a.embedding.tobytes() == b.embedding.tobytes()
            assert (a.doc_id, a.chunk_index, a.text) == (b.doc_id, b.chunk_index, b.text)

    def test_snapshot_bytes_stable(self, tmp_path):
        store = store_of(["alpha", "beta"])
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_store(store, p1)
        save_store(load_store(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_search_identical_after_reload(self, tmp_path):
        store = store_of([f"note {i}" for i in range(10)])
        path = tmp_path / "s.json"
        save_store(store, path)
        loaded = load_store(path)
        query = HashEmbedder(16).embed_texts(["note 3"])[0]
        before = [(c.doc_id, s) for c, s in search(store, query)]
        after = [(c.doc_id, s) for c, s in search(loaded, query)]
        assert before == after
