from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trialscreen.chunking import (ChunkingConfig, SubwordTokenizer,
                                  WhitespaceTokenizer, chunk_document,
                                  load_tokenizer)
from trialscreen.corpus import PatientDocument
from trialscreen.errors import ValidationError


def make_doc(text, doc_id="D1"):
    return PatientDocument(doc_id=doc_id, patient_id="P1",
                           note_type="Progress Note",
                           created_date=date(2024, 1, 1), text=text)


def words(n):
    return " ".join(f"w{i}" for i in range(n))


class TestConfig:
    def test_defaults(self):
        cfg = ChunkingConfig()
        assert cfg.chunk_tokens == 500
        assert cfg.overlap_tokens == 50
        assert cfg.stride == 450

    @pytest.mark.parametrize("chunk,overlap", [(0, 0), (-1, 0), (10, -1),
                                               (10, 10), (10, 11)])
    def test_invalid_configs(self, chunk, overlap):
        with pytest.raises(ValidationError):
            ChunkingConfig(chunk_tokens=chunk, overlap_tokens=overlap)


class TestChunking:
    def test_empty_document_yields_nothing(self):
        assert chunk_document(make_doc("   "), WhitespaceTokenizer()) == []

    def test_short_document_single_chunk(self):
        chunks = chunk_document(make_doc(words(7)), WhitespaceTokenizer(),
                                ChunkingConfig(chunk_tokens=10, overlap_tokens=2))
        assert len(chunks) == 1
        assert (chunks[0].token_start, chunks[0].token_end) == (0, 7)
        assert chunks[0].text == words(7)

    def test_exact_multiple_has_no_empty_tail(self):
        cfg = ChunkingConfig(chunk_tokens=10, overlap_tokens=0)
        chunks = chunk_document(make_doc(words(20)), WhitespaceTokenizer(), cfg)
        assert [(c.token_start, c.token_end) for c in chunks] == [(0, 10), (10, 20)]

    def test_overlap_token_spans(self):
        cfg = ChunkingConfig(chunk_tokens=10, overlap_tokens=3)
        chunks = chunk_document(make_doc(words(25)), WhitespaceTokenizer(), cfg)
        assert [(c.token_start, c.token_end) for c in chunks] == [
            (0, 10), (7, 17), (14, 24), (21, 25)]

    def test_chunk_provenance(self):
        chunks = chunk_document(make_doc(words(3), doc_id="DX"),
                                WhitespaceTokenizer())
        c = chunks[0]
        assert c.doc_id == "DX"
        assert c.patient_id == "P1"
        assert c.note_type == "Progress Note"
        assert c.chunk_index == 0
        assert c.tokenizer_id == "whitespace"

    @given(total=st.integers(min_value=1, max_value=400),
           chunk=st.integers(min_value=1, max_value=60),
           overlap=st.integers(min_value=0, max_value=59))
    @settings(max_examples=200, deadline=None)
    def test_window_invariants(self, total, chunk, overlap):
        if overlap >= chunk:
            overlap = chunk - 1
        cfg = ChunkingConfig(chunk_tokens=chunk, overlap_tokens=overlap)
        tokenizer = WhitespaceTokenizer()
        tokens = [f"w{i}" for i in range(total)]
        chunks = chunk_document(make_doc(" ".join(tokens)), tokenizer, cfg)

        assert chunks[0].token_start == 0
        assert chunks[-1].token_end == total
        covered = set()
        for i, c in enumerate(chunks):
            assert c.chunk_index == i
            assert c.token_start == i * cfg.stride
            assert c.token_end == min(c.token_start + chunk, total)
            assert c.token_start < c.token_end
            assert tokenizer.encode(c.text) == tokens[c.token_start:c.token_end]
            covered.update(range(c.token_start, c.token_end))
        assert covered == set(range(total))
        for prev, nxt in zip(chunks, chunks[1:]):
            assert prev.token_end - nxt.token_start == min(overlap, prev.token_end - nxt.token_start)
            assert nxt.token_start - prev.token_start == cfg.stride
        # all chunks except the last stop short of the end
        for c in chunks[:-1]:
            assert c.token_end < total


class TestTokenizers:
    def test_whitespace_round_trip(self):
        t = WhitespaceTokenizer()
        assert t.decode(t.encode("a  b\tc\nd")) == "a b c d"

    def test_subword_round_trip(self):
        t = SubwordTokenizer(["meta", "sta", "tic", "disease", "bio", "psy"])
        tokens = t.encode("metastatic disease biopsy")
        assert t.decode(tokens) == "metastatic disease biopsy"
        assert tokens[0] == "meta"
        assert tokens[1].startswith("##")

    def test_subword_falls_back_to_characters(self):
        t = SubwordTokenizer(["ab"])
        assert t.decode(t.encode("abxyz")) == "abxyz"

    def test_subword_id_tracks_vocab(self):
        a = SubwordTokenizer(["x", "y"], name="v")
        b = SubwordTokenizer(["x", "z"], name="v")
        assert a.tokenizer_id != b.tokenizer_id

    @given(st.lists(st.text(alphabet="abcdef", min_size=1, max_size=8),
                    min_size=0, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_subword_round_trip_property(self, word_list):
        t = SubwordTokenizer(["ab", "cd", "abc", "def", "f"])
        text = " ".join(word_list)
        assert t.decode(t.encode(text)) == " ".join(text.split())

    def test_load_tokenizer_names(self):
        assert load_tokenizer("whitespace").tokenizer_id == "whitespace"
        assert load_tokenizer("subword").tokenizer_id.startswith("vocab_base:")
        with pytest.raises(ValidationError):
            load_tokenizer("bpe")
