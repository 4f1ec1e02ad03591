"""Chunking, embedding and exact cosine top-k retrieval.

The index is a deliberate linear scan over L2-normalized vectors: corpora at
the scale this package targets make exact search cheap, and exactness is the
tested contract. The reference embedder is a seeded feature-hashing bag of
tokens, so the whole retrieval path is deterministic and offline; a remote
embedding adapter speaking the same wire family as the chat gateway is
available but never used in tests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import ParseError, ValidationError

INDEX_SCHEMA = "protopredict/index-v1"

DEFAULT_MAX_UNITS = 256
DEFAULT_OVERLAP = 32
DEFAULT_TOP_K = 5
DEFAULT_EMBED_DIM = 64


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    seq: int
    text: str
    unit_count: int


@dataclass(frozen=True)
class RetrievalHit:
    chunk: Chunk
    score: float


def chunk_text(
    text: str,
    max_units: int = DEFAULT_MAX_UNITS,
    overlap: int = DEFAULT_OVERLAP,
    doc_id: str = "",
) -> list[Chunk]:
    """Greedy whitespace-token chunking with a fixed overlap.

    Consecutive chunks share exactly `overlap` tokens (the final chunk may
    share fewer when the text runs out); dropping each chunk's first
    `overlap` tokens after the first chunk reproduces the token sequence.
    """
    if max_units <= 0:
        raise ValidationError(f"max_units must be > 0, got {max_units!r}")
    if not (0 <= overlap < max_units):
        raise ValidationError(
            f"overlap must satisfy 0 <= overlap < max_units, got {overlap!r}"
        )
    tokens = text.split()
    if not tokens:
        raise ValidationError("cannot chunk empty text")
    step = max_units - overlap
    chunks: list[Chunk] = []
    for seq, start in enumerate(range(0, len(tokens), step)):
        window = tokens[start : start + max_units]
        chunks.append(
            Chunk(doc_id=doc_id, seq=seq, text=" ".join(window), unit_count=len(window))
        )
    return chunks


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """dot(a, b) / (|a| |b|); raises on dimension mismatch or zero vectors."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ValidationError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity is undefined for the zero vector")
    return float(np.dot(va, vb) / (na * nb))


def hash_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic bag-of-tokens embedding by feature hashing.

    Each whitespace token is hashed (with the seed) to a bucket and a sign,
    the signed counts are accumulated, and the vector is L2-normalized.
    Token order never affects the result.
    """
    if dim < 8:
        raise ValidationError(f"embedding dim must be >= 8, got {dim!r}")
    tokens = text.split()
    if not tokens:
        raise ValidationError("cannot embed empty text")
    vec = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        digest = hashlib.sha256(f"{seed}|{token}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "big") % dim
        sign = 1.0 if digest[8] & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


class Embedder(Protocol):
    @property
    def descriptor(self) -> dict: ...

    def embed(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class HashEmbedder:
    """The reference embedder: pure function of (text, dim, seed)."""

    dim: int = DEFAULT_EMBED_DIM
    seed: int = 0

    @property
    def descriptor(self) -> dict:
        return {"kind": "hash", "dim": self.dim, "seed": self.seed}

    def embed(self, text: str) -> np.ndarray:
        return hash_embed(text, self.dim, self.seed)


class RemoteEmbedder:
    """Adapter for an OpenAI-compatible /v1/embeddings endpoint.

    Optional; tests and the benchmark never touch it. The descriptor pins
    the model so a persisted index cannot silently mix embedding spaces.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str,
        dim: int,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.dim = dim
        self._client = httpx.Client(transport=transport, timeout=timeout)

    @property
    def descriptor(self) -> dict:
        return {"kind": "remote", "model": self.model, "dim": self.dim}

    def embed(self, text: str) -> np.ndarray:
        resp = self._client.post(
            f"{self.base_url}/v1/embeddings",
            headers={"Authorization": f"Bearer {self.api_key}"},
            json={"model": self.model, "input": text},
        )
        resp.raise_for_status()
        payload = resp.json()
        vec = np.asarray(payload["data"][0]["embedding"], dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValidationError(
                f"remote embedding has dimension {vec.shape}, expected {self.dim}"
            )
        return vec


class VectorIndex:
    """Immutable after build: concurrent readers are safe, rebuilds replace.

    Stored vectors are L2-normalized, so the query score is a plain dot
    product with the normalized query vector, i.e. an exact cosine.
    """

    def __init__(self, chunks: list[Chunk], vectors: np.ndarray, embedder: Embedder):
        if len(chunks) != vectors.shape[0]:
            raise ValidationError("chunk count and vector count differ")
        self.chunks = list(chunks)
        self.vectors = vectors
        self.embedder = embedder

    def __len__(self) -> int:
        return len(self.chunks)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def query(self, query_text: str, k: int = DEFAULT_TOP_K) -> list[RetrievalHit]:
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k!r}")
        if not self.chunks:
            raise ValidationError("cannot query an empty index")
        q = np.asarray(self.embedder.embed(query_text), dtype=np.float64)
        norm = float(np.linalg.norm(q))
        if norm == 0.0:
            raise ValidationError("query embeds to the zero vector")
        q = q / norm
        scores = np.clip(self.vectors @ q, -1.0, 1.0)
        order = sorted(
            range(len(self.chunks)),
            key=lambda i: (-scores[i], self.chunks[i].doc_id, self.chunks[i].seq),
        )
        return [
            RetrievalHit(chunk=self.chunks[i], score=float(scores[i]))
            for i in order[:k]
        ]


def build_index(chunks: Sequence[Chunk], embedder: Embedder) -> VectorIndex:
    if not chunks:
        raise ValidationError("cannot build an index from zero chunks")
    vectors = np.zeros((len(chunks), embedder.descriptor["dim"]), dtype=np.float64)
    for i, chunk in enumerate(chunks):
        vec = np.asarray(embedder.embed(chunk.text), dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        vectors[i] = vec / norm if norm > 0.0 else vec
    return VectorIndex(list(chunks), vectors, embedder)


def query_top_k(index: VectorIndex, query_text: str, k: int = DEFAULT_TOP_K) -> list[RetrievalHit]:
    return index.query(query_text, k)


def save_index(index: VectorIndex, path: str | Path) -> None:
    doc = {
        "schema": INDEX_SCHEMA,
        "dim": index.dim,
        "embedder": index.embedder.descriptor,
        "chunks": [
            {"doc_id": c.doc_id, "seq": c.seq, "text": c.text, "unit_count": c.unit_count}
            for c in index.chunks
        ],
        "vectors": [[float(x) for x in row] for row in index.vectors],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_index(path: str | Path, embedder: Embedder | None = None) -> VectorIndex:
    """Load a persisted index. Hash embedders are rebuilt from the stored
    descriptor; any other embedder kind must be supplied and must match."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"index file is not valid JSON: {exc.msg}") from exc
    schema = doc.get("schema")
    if schema != INDEX_SCHEMA:
        raise ParseError(f"unsupported index schema {schema!r}, expected {INDEX_SCHEMA!r}")
    descriptor = doc.get("embedder", {})
    if embedder is None:
        if descriptor.get("kind") != "hash":
            raise ValidationError(
                f"index uses embedder {descriptor!r}; pass a matching embedder to load it"
            )
        embedder = HashEmbedder(dim=int(descriptor["dim"]), seed=int(descriptor["seed"]))
    elif embedder.descriptor != descriptor:
        raise ValidationError(
            f"embedder descriptor mismatch: index has {descriptor!r}, got {embedder.descriptor!r}"
        )
    chunks = [
        Chunk(
            doc_id=str(c["doc_id"]),
            seq=int(c["seq"]),
            text=str(c["text"]),
            unit_count=int(c["unit_count"]),
        )
        for c in doc["chunks"]
    ]
    vectors = np.asarray(doc["vectors"], dtype=np.float64)
    if vectors.shape != (len(chunks), int(doc["dim"])):
        raise ParseError("index vector table shape does not match chunk table")
    return VectorIndex(chunks, vectors, embedder)


def index_corpus(
    rendered_docs: dict[str, str],
    embedder: Embedder | None = None,
    max_units: int = DEFAULT_MAX_UNITS,
    overlap: int = DEFAULT_OVERLAP,
) -> VectorIndex:
    """Chunk and index a mapping of doc_id -> rendered document text."""
    embedder = embedder or HashEmbedder()
    chunks: list[Chunk] = []
    for doc_id in sorted(rendered_docs):
        chunks.extend(
            chunk_text(rendered_docs[doc_id], max_units=max_units, overlap=overlap, doc_id=doc_id)
        )
    return build_index(chunks, embedder)
