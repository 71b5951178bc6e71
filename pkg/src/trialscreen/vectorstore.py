"""Per-patient, per-specialty vector stores with exact top-k cosine search.

Stores are deliberately exhaustive (no approximate index): they hold at most
a few hundred chunks per patient, and exact ranking with deterministic tie
breaking keeps retrieval auditable.  Zero-norm embeddings are legal inputs
and always sort last with similarity -1.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .chunking import ChunkingConfig, DocumentChunk
from .corpus import Specialty
from .errors import DimensionMismatchError, StoreBuildError, ValidationError

SNAPSHOT_FORMAT = "vector-store-v1"


class Embedder(Protocol):
    dimension: int
    embedder_id: str

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic test embedder: a stable pseudo-random unit vector per text.

    The seed is derived from the SHA-256 of the text, so identical texts map
    to identical embeddings on every platform and run.
    """

    def __init__(self, dimension: int = 64):
        if dimension <= 0:
            raise ValidationError("embedding dimension must be positive")
        self.dimension = dimension
        self.embedder_id = f"hash:d{dimension}"

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dimension), dtype=np.float64)
        for i, text in enumerate(texts):
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
            vec = np.random.default_rng(seed).standard_normal(self.dimension)
            norm = np.linalg.norm(vec)
            out[i] = vec / norm if norm > 0 else vec
        return out


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 10

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError("k must be >= 1")


@dataclass(frozen=True, eq=False)
class EmbeddedChunk:
    doc_id: str
    patient_id: str
    specialty: Optional[Specialty]
    chunk_index: int
    token_start: int
    token_end: int
    text: str
    embedding: np.ndarray
    note_type: str
    created_date: date


@dataclass(frozen=True)
class StoreMeta:
    tokenizer_id: str
    chunk_tokens: int
    overlap_tokens: int


class VectorStore:
    """Immutable embedded-chunk index for one patient (and one specialty)."""

    def __init__(self, patient_id: str, specialty: Optional[Specialty],
                 chunks: Sequence[EmbeddedChunk], dimension: int,
                 embedder_id: str, meta: StoreMeta):
        self.patient_id = patient_id
        self.specialty = specialty
        self.chunks = tuple(chunks)
        self.dimension = dimension
        self.embedder_id = embedder_id
        self.meta = meta
        if self.chunks:
            matrix = np.stack([c.embedding for c in self.chunks]).astype(np.float64)
        else:
            matrix = np.zeros((0, dimension), dtype=np.float64)
        norms = np.linalg.norm(matrix, axis=1)
        self._zero_rows = norms == 0.0
        safe = np.where(self._zero_rows, 1.0, norms)
        self._normalized = matrix / safe[:, None]
        self._matrix = matrix

    def __len__(self) -> int:
        return len(self.chunks)


@dataclass(frozen=True)
class StoreBuildResult:
    store: VectorStore
    failures: tuple[tuple[str, str], ...]  # (doc_id/chunk_index locator, message)


def build_store(chunks: Sequence[DocumentChunk], embedder: Embedder,
                chunking: ChunkingConfig = ChunkingConfig(),
                specialty: Optional[Specialty] = None) -> StoreBuildResult:
    """Embed chunks and assemble a store.

    All chunks must belong to one patient; when ``specialty`` is given the
    store is scoped to it (a None specialty builds a generalist union
    store).  Per-chunk embedding failures are collected into the build
    result rather than aborting the whole store; a wrong embedder output
    dimension aborts with StoreBuildError.
    """
    patients = {c.patient_id for c in chunks}
    if len(patients) > 1:
        raise ValidationError(f"chunks span multiple patients: {sorted(patients)}")
    patient_id = patients.pop() if patients else ""
    tokenizer_ids = {c.tokenizer_id for c in chunks}
    if len(tokenizer_ids) > 1:
        raise ValidationError("chunks were produced by different tokenizers")
    meta = StoreMeta(tokenizer_id=tokenizer_ids.pop() if tokenizer_ids else "",
                     chunk_tokens=chunking.chunk_tokens,
                     overlap_tokens=chunking.overlap_tokens)

    embedded: list[EmbeddedChunk] = []
    failures: list[tuple[str, str]] = []
    for chunk in chunks:
        try:
            vec = embedder.embed_texts([chunk.text])[0]
        except Exception as exc:  # embedder failures are per-chunk, not fatal
            failures.append((f"{chunk.doc_id}#{chunk.chunk_index}", str(exc)))
            continue
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (embedder.dimension,):
            raise StoreBuildError(
                f"embedder returned shape {vec.shape}, expected ({embedder.dimension},)")
        embedded.append(EmbeddedChunk(
            doc_id=chunk.doc_id, patient_id=chunk.patient_id, specialty=specialty,
            chunk_index=chunk.chunk_index, token_start=chunk.token_start,
            token_end=chunk.token_end, text=chunk.text, embedding=vec,
            note_type=chunk.note_type, created_date=chunk.created_date))
    store = VectorStore(patient_id=patient_id, specialty=specialty, chunks=embedded,
                        dimension=embedder.dimension, embedder_id=embedder.embedder_id,
                        meta=meta)
    return StoreBuildResult(store=store, failures=tuple(failures))


def build_union_store(stores: Sequence[VectorStore]) -> VectorStore:
    """Merge one patient's per-specialty stores into a generalist store.

    Reuses existing embeddings; chunk order is canonical (doc_id, chunk
    index) so the union is independent of input store order.
    """
    nonempty = [s for s in stores if len(s)]
    if not nonempty:
        raise ValidationError("cannot build a union of empty stores")
    patient_ids = {s.patient_id for s in nonempty}
    if len(patient_ids) > 1:
        raise ValidationError("union store requires stores of one patient")
    dims = {s.dimension for s in nonempty}
    if len(dims) > 1:
        raise StoreBuildError("stores have differing embedding dimensions")
    chunks = sorted((c for s in nonempty for c in s.chunks),
                    key=lambda c: (c.doc_id, c.chunk_index))
    chunks = [replace_specialty(c, None) for c in chunks]
    first = nonempty[0]
    return VectorStore(patient_id=first.patient_id, specialty=None, chunks=chunks,
                       dimension=first.dimension, embedder_id=first.embedder_id,
                       meta=first.meta)


def replace_specialty(chunk: EmbeddedChunk, specialty: Optional[Specialty]) -> EmbeddedChunk:
    return replace(chunk, specialty=specialty)


def search(store: VectorStore, query_embedding: np.ndarray,
           config: RetrievalConfig = RetrievalConfig()) -> list[tuple[EmbeddedChunk, float]]:
    """Exact top-k cosine retrieval.

    Returns min(k, len(store)) results sorted by similarity descending,
    ties broken by (doc_id, chunk_index) ascending.  Zero-norm chunk or
    query embeddings yield similarity -1 and sort last.
    """
    q = np.asarray(query_embedding, dtype=np.float64)
    if q.shape != (store.dimension,):
        raise DimensionMismatchError(
            f"query dimension {q.shape} does not match store dimension {store.dimension}")
    if len(store) == 0:
        return []
    qnorm = np.linalg.norm(q)
    if qnorm == 0.0:
        sims = np.full(len(store), -1.0)
    else:
        # row-wise reduction instead of a matmul: BLAS gemv rounds rows
        # differently by position, which would break exact ties between
        # identical embeddings and with them the documented tie order
        sims = (store._normalized * (q / qnorm)).sum(axis=1)
        sims[store._zero_rows] = -1.0
    order = sorted(range(len(store)),
                   key=lambda i: (-sims[i], store.chunks[i].doc_id,
                                  store.chunks[i].chunk_index))
    top = order[:min(config.k, len(store))]
    return [(store.chunks[i], float(sims[i])) for i in top]


# ---------------------------------------------------------------------------
# On-disk snapshots (bit-exact round trip)

def _chunk_to_record(c: EmbeddedChunk) -> dict:
    return {
        "doc_id": c.doc_id,
        "patient_id": c.patient_id,
        "specialty": c.specialty.value if c.specialty else None,
        "chunk_index": c.chunk_index,
        "token_start": c.token_start,
        "token_end": c.token_end,
        "text": c.text,
        "note_type": c.note_type,
        "created_date": c.created_date.isoformat(),
        "embedding_b64": base64.b64encode(
            np.ascontiguousarray(c.embedding, dtype="<f8").tobytes()).decode("ascii"),
    }


def _record_to_chunk(r: dict) -> EmbeddedChunk:
    vec = np.frombuffer(base64.b64decode(r["embedding_b64"]), dtype="<f8").copy()
    return EmbeddedChunk(
        doc_id=r["doc_id"], patient_id=r["patient_id"],
        specialty=Specialty(r["specialty"]) if r["specialty"] else None,
        chunk_index=r["chunk_index"], token_start=r["token_start"],
        token_end=r["token_end"], text=r["text"], embedding=vec,
        note_type=r["note_type"], created_date=date.fromisoformat(r["created_date"]))


def save_store(store: VectorStore, path: str | Path) -> None:
    payload = {
        "format": SNAPSHOT_FORMAT,
        "header": {
            "dimension": store.dimension,
            "count": len(store),
            "embedder_id": store.embedder_id,
            "tokenizer_id": store.meta.tokenizer_id,
            "chunk_tokens": store.meta.chunk_tokens,
            "overlap_tokens": store.meta.overlap_tokens,
            "patient_id": store.patient_id,
            "specialty": store.specialty.value if store.specialty else None,
        },
        "records": [_chunk_to_record(c) for c in store.chunks],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")),
                          encoding="utf-8")


def load_store(path: str | Path) -> VectorStore:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != SNAPSHOT_FORMAT:
        raise ValidationError(f"unsupported snapshot format {payload.get('format')!r}")
    h = payload["header"]
    chunks = [_record_to_chunk(r) for r in payload["records"]]
    if len(chunks) != h["count"]:
        raise ValidationError("snapshot record count does not match header")
    return VectorStore(
        patient_id=h["patient_id"],
        specialty=Specialty(h["specialty"]) if h["specialty"] else None,
        chunks=chunks, dimension=h["dimension"], embedder_id=h["embedder_id"],
        meta=StoreMeta(tokenizer_id=h["tokenizer_id"], chunk_tokens=h["chunk_tokens"],
                       overlap_tokens=h["overlap_tokens"]))
