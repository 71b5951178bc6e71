"""Tokenization and sliding-window document chunking.

Chunks are windows of ``chunk_tokens`` tokens advanced by a stride of
``chunk_tokens - overlap_tokens``, so consecutive chunks of one document
share exactly ``overlap_tokens`` tokens (the final chunk may be shorter).
The chunking math is tokenizer-agnostic; two tokenizers ship here: a
whitespace tokenizer for tests and a greedy longest-match subword
tokenizer loaded from a vocabulary file for realistic token counts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .corpus import PatientDocument
from .errors import ValidationError


class Tokenizer(Protocol):
    tokenizer_id: str

    def encode(self, text: str) -> list[str]: ...

    def decode(self, tokens: Sequence[str]) -> str: ...


class WhitespaceTokenizer:
    """Splits on whitespace; decode joins with single spaces."""

    tokenizer_id = "whitespace"

    def encode(self, text: str) -> list[str]:
        return text.split()

    def decode(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)


class SubwordTokenizer:
    """Greedy longest-match subword tokenizer over a fixed vocabulary.

    Words are split on whitespace, then each word is decomposed into the
    longest vocabulary pieces that prefix it.  Continuation pieces are
    stored with a ``##`` marker so decode can rejoin words exactly.
    Characters missing from the vocabulary fall back to single-character
    pieces, so encoding is total.
    """

    def __init__(self, vocab: Sequence[str], name: str = "subword"):
        self._vocab = set(vocab)
        digest = hashlib.sha256("\n".join(sorted(self._vocab)).encode()).hexdigest()[:8]
        self.tokenizer_id = f"{name}:{digest}"
        self._max_len = max((len(v) for v in self._vocab), default=1)

    @classmethod
    def from_vocab_file(cls, path: str | Path) -> "SubwordTokenizer":
        words = [w.strip() for w in Path(path).read_text(encoding="utf-8").splitlines()]
        return cls([w for w in words if w], name=Path(path).stem)

    def _split_word(self, word: str) -> list[str]:
        pieces: list[str] = []
        pos = 0
        while pos < len(word):
            end = min(len(word), pos + self._max_len)
            piece = None
            while end > pos:
                cand = word[pos:end]
                if cand in self._vocab:
                    piece = cand
                    break
                end -= 1
            if piece is None:
                piece = word[pos]  # single-char fallback keeps encoding total
            pieces.append(piece if pos == 0 else "##" + piece)
            pos += len(piece)
        return pieces

    def encode(self, text: str) -> list[str]:
        tokens: list[str] = []
        for word in text.split():
            tokens.extend(self._split_word(word))
        return tokens

    def decode(self, tokens: Sequence[str]) -> str:
        words: list[str] = []
        for tok in tokens:
            if tok.startswith("##") and words:
                words[-1] += tok[2:]
            else:
                words.append(tok[2:] if tok.startswith("##") else tok)
        return " ".join(words)


def packaged_vocab_path() -> Path:
    return Path(__file__).parent / "fixtures" / "vocab_base.txt"


def load_tokenizer(name: str) -> Tokenizer:
    """Resolve a tokenizer by config name ('whitespace' or 'subword')."""
    if name == "whitespace":
        return WhitespaceTokenizer()
    if name == "subword":
        return SubwordTokenizer.from_vocab_file(packaged_vocab_path())
    raise ValidationError(f"unknown tokenizer {name!r}")


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_tokens: int = 500
    overlap_tokens: int = 50

    def __post_init__(self) -> None:
        if self.chunk_tokens <= 0:
            raise ValidationError("chunk_tokens must be positive")
        if self.overlap_tokens < 0:
            raise ValidationError("overlap_tokens must be non-negative")
        if self.overlap_tokens >= self.chunk_tokens:
            raise ValidationError("overlap_tokens must be smaller than chunk_tokens")

    @property
    def stride(self) -> int:
        return self.chunk_tokens - self.overlap_tokens


@dataclass(frozen=True)
class DocumentChunk:
    """A pre-embedding chunk with provenance and token-span bookkeeping."""

    doc_id: str
    patient_id: str
    note_type: str
    created_date: object  # datetime.date
    chunk_index: int
    token_start: int
    token_end: int
    text: str
    tokenizer_id: str


def chunk_document(doc: PatientDocument, tokenizer: Tokenizer,
                   config: ChunkingConfig = ChunkingConfig()) -> list[DocumentChunk]:
    """Split one document into overlapping token windows.

    Chunk i spans tokens [i*stride, min(i*stride + chunk_tokens, total)).
    Emission stops once a chunk reaches the end of the token stream, so no
    fully-redundant tail window is produced.  An empty document yields no
    chunks.
    """
    tokens = tokenizer.encode(doc.text)
    total = len(tokens)
    if total == 0:
        return []
    chunks: list[DocumentChunk] = []
    start = 0
    index = 0
    while True:
        end = min(start + config.chunk_tokens, total)
        chunks.append(DocumentChunk(
            doc_id=doc.doc_id,
            patient_id=doc.patient_id,
            note_type=doc.note_type,
            created_date=doc.created_date,
            chunk_index=index,
            token_start=start,
            token_end=end,
            text=tokenizer.decode(tokens[start:end]),
            tokenizer_id=tokenizer.tokenizer_id,
        ))
        if end >= total:
            break
        start += config.stride
        index += 1
    return chunks
