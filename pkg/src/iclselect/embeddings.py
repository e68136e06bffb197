"""Embedding vectors: persistence, deterministic synthetic embedding, and
inner-product ranking of a training pool against a query.

Binary store layout (all integers little-endian):

    magic  b"EMB1"
    dim    uint32
    count  uint64
    then per record: id_len uint16, id bytes (UTF-8), dim float32 values

Similarity is the raw inner product of the stored vectors; no normalisation
is applied by the ranking itself. Equal scores rank the lexicographically
smaller example id first, so rankings are reproducible and independent of
insertion order. Stores are immutable after load and safe for concurrent
readers; ranking is a pure function.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from iclselect.errors import BackendError, DataError
from iclselect.kernels import top_k_desc

_MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sIQ")
_ID_LEN = struct.Struct("<H")

DEFAULT_CANDIDATE_DEPTH = 250


class EmbeddingStore:
    """Immutable id -> vector map with a matrix view for ranking.

    Rows are ordered by lexicographic id so that row index order coincides
    with the id tie-break used by ranking.
    """

    def __init__(self, vectors: Mapping[str, np.ndarray]):
        if not vectors:
            raise DataError("embedding store must hold at least one vector")
        ids = sorted(vectors)
        dim = None
        rows = []
        for ex_id in ids:
            vec = np.asarray(vectors[ex_id], dtype=np.float32)
            if vec.ndim != 1 or vec.shape[0] == 0:
                raise DataError(f"vector for {ex_id!r} must be a non-empty 1-D sequence")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise DataError(f"vector for {ex_id!r} has dim {vec.shape[0]}, store dim is {dim}")
            if not np.all(np.isfinite(vec)):
                raise DataError(f"vector for {ex_id!r} contains a non-finite value")
            rows.append(vec)
        self._ids: tuple[str, ...] = tuple(ids)
        self._row_of: dict[str, int] = {ex_id: i for i, ex_id in enumerate(ids)}
        self._matrix = np.vstack(rows)
        self._matrix64: np.ndarray | None = None
        self.dim: int = int(dim)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, ex_id: str) -> bool:
        return ex_id in self._row_of

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def vector(self, ex_id: str) -> np.ndarray:
        try:
            return self._matrix[self._row_of[ex_id]]
        except KeyError:
            raise DataError(f"no embedding stored for id {ex_id!r}") from None

    def subset(self, ids: Iterable[str]) -> "EmbeddingStore":
        return EmbeddingStore({ex_id: self.vector(ex_id) for ex_id in ids})

    def _scores_for(self, query: np.ndarray) -> np.ndarray:
        # Scores accumulate in float64 so that both selection kernels see the
        # identical array and ties are decided identically everywhere.
        if self._matrix64 is None:
            self._matrix64 = self._matrix.astype(np.float64)
        return self._matrix64 @ np.asarray(query, dtype=np.float64)


@dataclass(frozen=True)
class RankedCandidates:
    """Ids ranked by inner product against one query, best first."""

    query_id: str
    entries: tuple[tuple[str, float], ...]
    depth: int

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(ex_id for ex_id, _ in self.entries)


def rank_candidates(
    query: np.ndarray,
    store: EmbeddingStore,
    depth: int | None = None,
    query_id: str = "",
) -> RankedCandidates:
    """Top ``depth`` store entries by dot(query, entry), descending.

    Equal scores break toward the lexicographically smaller id. The default
    depth caps at 250 candidates (or the store size, whichever is smaller);
    callers that feed the misclassification constraints should rank deeper.
    """
    query = np.asarray(query, dtype=np.float32)
    if query.ndim != 1 or query.shape[0] != store.dim:
        raise DataError(f"query dim {query.shape} does not match store dim {store.dim}")
    if depth is None:
        depth = min(DEFAULT_CANDIDATE_DEPTH, len(store))
    if depth <= 0:
        raise DataError("retrieval depth must be positive")
    if depth > len(store):
        raise DataError(f"retrieval depth {depth} exceeds store size {len(store)}")
    scores = store._scores_for(query)
    picked = top_k_desc(scores, depth)
    entries = tuple((store.ids[i], float(scores[i])) for i in picked)
    return RankedCandidates(query_id=query_id, entries=entries, depth=depth)


def save_store(vectors: Mapping[str, np.ndarray] | EmbeddingStore, path: str | Path) -> None:
    """Write vectors in the binary store layout (ids in lexicographic order)."""
    if not isinstance(vectors, EmbeddingStore):
        vectors = EmbeddingStore(vectors)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, vectors.dim, len(vectors)))
        for ex_id in vectors.ids:
            raw = ex_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DataError(f"example id too long to serialize ({len(raw)} bytes)")
            fh.write(_ID_LEN.pack(len(raw)))
            fh.write(raw)
            fh.write(vectors.vector(ex_id).astype("<f4").tobytes())


def load_store(path: str | Path, valid_ids: set[str] | None = None) -> EmbeddingStore:
    """Read a binary embedding store.

    When ``valid_ids`` is given, every stored id must resolve against it
    (i.e. belong to some dataset split).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing embedding store file {path}")
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise DataError(f"{path}: bad magic bytes {magic!r}")
    if dim == 0:
        raise DataError(f"{path}: dim must be positive")
    offset = _HEADER.size
    vectors: dict[str, np.ndarray] = {}
    vec_bytes = 4 * dim
    for _ in range(count):
        if offset + _ID_LEN.size > len(blob):
            raise DataError(f"{path}: truncated record header at byte {offset}")
        (id_len,) = _ID_LEN.unpack_from(blob, offset)
        offset += _ID_LEN.size
        if offset + id_len + vec_bytes > len(blob):
            raise DataError(f"{path}: truncated record at byte {offset}")
        ex_id = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if ex_id in vectors:
            raise DataError(f"{path}: duplicate id {ex_id!r}")
        if not np.all(np.isfinite(vec)):
            raise DataError(f"{path}: non-finite value in vector for {ex_id!r}")
        if valid_ids is not None and ex_id not in valid_ids:
            raise DataError(f"{path}: id {ex_id!r} does not resolve against the dataset")
        vectors[ex_id] = vec
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes after {count} records")
    return EmbeddingStore(vectors)


class EmbedderBackend(Protocol):
    identifier: str

    def embed(self, texts: Sequence[str]) -> list[Sequence[float]]: ...


class HashingEmbedder:
    """Deterministic character-trigram feature-hashing embedder.

    Purely local and reproducible: the same text always maps to the same
    L2-normalised float32 vector, which makes it suitable for tests and
    desk-scale experiments in place of a live encoder.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise DataError("embedder dim must be positive")
        self.dim = dim
        self.identifier = f"hashing-{dim}"

    def _vector(self, text: str) -> np.ndarray:
        acc = np.zeros(self.dim, dtype=np.float64)
        padded = f"\x02{text}\x03"
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3].encode("utf-8")
            digest = hashlib.blake2b(gram, digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            bucket = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            acc[bucket] += sign
        norm = float(np.linalg.norm(acc))
        if norm > 0.0:
            acc /= norm
        return acc.astype(np.float32)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self._vector(text) for text in texts]


def embed_with_backend(texts: Sequence[str], backend: EmbedderBackend) -> list[np.ndarray]:
    """One float32 vector per text, validated for finiteness and a stable dim."""
    if not texts:
        return []
    raw = backend.embed(texts)
    if len(raw) != len(texts):
        raise BackendError(f"embedder {backend.identifier} returned {len(raw)} vectors for {len(texts)} texts")
    out: list[np.ndarray] = []
    dim: int | None = None
    for pos, values in enumerate(raw):
        vec = np.asarray(values, dtype=np.float32)
        if vec.ndim != 1:
            raise BackendError(f"embedder {backend.identifier} returned a non-vector at position {pos}")
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise BackendError(
                f"embedder {backend.identifier} drifted from dim {dim} to {vec.shape[0]} mid-batch"
            )
        if not np.all(np.isfinite(vec)):
            raise BackendError(f"embedder {backend.identifier} returned a non-finite value at position {pos}")
        out.append(vec)
    return out


def build_store_for_dataset(dataset, embedder: EmbedderBackend, splits: Sequence[str] | None = None) -> EmbeddingStore:
    """Embed every example text of the chosen splits into a store."""
    chosen = splits if splits is not None else sorted(dataset.splits)
    examples = [ex for split in chosen for ex in dataset.splits[split]]
    vectors = embed_with_backend([ex.text for ex in examples], embedder)
    return EmbeddingStore({ex.id: vec for ex, vec in zip(examples, vectors)})
