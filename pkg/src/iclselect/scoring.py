"""Per-label log-likelihood scoring against a pluggable backend.

A backend maps (prompt, ordered label names) to one raw log-likelihood per
label. Results are cached under (backend id, 64-bit prompt digest, label-space
fingerprint); the cache coalesces duplicate in-flight requests so the same
prompt never hits a backend twice, and optionally persists to an append-only
JSONL file.

The synthetic backend is fully deterministic for a fixed seed: it parses the
prompt, embeds the test text with a hashing embedder, applies a per-label
linear score, adds a label-copying bias proportional to how often each label
appears among the demonstrations, and perturbs with counter-seeded Gaussian
noise keyed on (seed, prompt digest) so cache warmth can never change results.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from iclselect.corpus import LabelSpace
from iclselect.embeddings import HashingEmbedder
from iclselect.errors import BackendError, DataError
from iclselect.prompting import parse_prompt

_MASK64 = (1 << 64) - 1

CacheKey = tuple[str, int, str]


def prompt_digest(prompt: str) -> int:
    """64-bit digest of the exact prompt bytes."""
    raw = hashlib.blake2b(prompt.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(raw, "little")


@dataclass(frozen=True)
class LabelScores:
    """One finite log-likelihood per label, in canonical label order."""

    scores: tuple[float, ...]
    backend_id: str
    prompt_hash: int

    def __post_init__(self):
        if not all(math.isfinite(s) for s in self.scores):
            raise BackendError(f"non-finite score from backend {self.backend_id!r}")


@dataclass(frozen=True)
class LabelDistribution:
    probs: tuple[float, ...]

    def __post_init__(self):
        total = sum(self.probs)
        if any(p < 0.0 or p > 1.0 for p in self.probs) or abs(total - 1.0) > 1e-9:
            raise DataError(f"invalid probability vector (sum={total!r})")


@dataclass(frozen=True)
class PredictionRecord:
    example_id: str
    scores: LabelScores
    predicted: int
    correct: bool


def _score_values(scores) -> Sequence[float]:
    return scores.scores if isinstance(scores, LabelScores) else scores


def predict(scores) -> int:
    """Id of the highest-scoring label; ties break toward the lowest id."""
    values = _score_values(scores)
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def normalize(scores) -> LabelDistribution:
    """Overflow-safe softmax of raw log-likelihood scores."""
    values = np.asarray(_score_values(scores), dtype=np.float64)
    shifted = np.exp(values - values.max())
    probs = shifted / shifted.sum()
    return LabelDistribution(probs=tuple(float(p) for p in probs))


class ScorerBackend(Protocol):
    identifier: str

    def score(self, prompt: str, label_names: Sequence[str]) -> Sequence[float]: ...


class ScoreCache:
    """In-memory score cache with optional append-only JSONL persistence.

    Concurrent readers are safe; writes are serialized; ``key_lock`` hands out
    one lock per cache key so duplicate prompts coalesce into a single
    backend request.
    """

    def __init__(self, path: str | Path | None = None):
        self._mem: dict[CacheKey, tuple[float, ...]] = {}
        self._lock = threading.Lock()
        self._key_locks: dict[CacheKey, threading.Lock] = {}
        self._path = Path(path) if path is not None else None
        self.hits = 0
        self.misses = 0
        if self._path is not None and self._path.is_file():
            with self._path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    key = (record["backend"], int(record["prompt_hash"]), record["labels_fp"])
                    self._mem[key] = tuple(float(s) for s in record["scores"])

    def key_lock(self, key: CacheKey) -> threading.Lock:
        with self._lock:
            lock = self._key_locks.get(key)
            if lock is None:
                lock = self._key_locks[key] = threading.Lock()
            return lock

    def lookup(self, key: CacheKey) -> tuple[float, ...] | None:
        with self._lock:
            found = self._mem.get(key)
            if found is None:
                self.misses += 1
            else:
                self.hits += 1
            return found

    def store(self, key: CacheKey, scores: tuple[float, ...]) -> None:
        with self._lock:
            self._mem[key] = scores
            if self._path is not None:
                record = {
                    "backend": key[0],
                    "prompt_hash": key[1],
                    "labels_fp": key[2],
                    "scores": list(scores),
                }
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("a", encoding="utf-8", newline="\n") as fh:
                    fh.write(json.dumps(record) + "\n")

    def stats(self) -> dict[str, int]:
        return {"hits": self.hits, "misses": self.misses, "entries": len(self._mem)}


def _call_backend(backend: ScorerBackend, prompt: str, space: LabelSpace) -> tuple[float, ...]:
    values = backend.score(prompt, space.names)
    if len(values) != space.size:
        raise BackendError(
            f"backend {backend.identifier!r} returned {len(values)} scores for {space.size} labels"
        )
    out = tuple(float(v) for v in values)
    if not all(math.isfinite(v) for v in out):
        raise BackendError(f"backend {backend.identifier!r} returned a non-finite score")
    return out


def score_labels(
    prompt: str,
    space: LabelSpace,
    backend: ScorerBackend,
    cache: ScoreCache | None = None,
) -> LabelScores:
    """Score every label for a prompt, via the cache when one is given."""
    if not prompt:
        raise DataError("prompt must be non-empty")
    digest = prompt_digest(prompt)
    if cache is None:
        return LabelScores(scores=_call_backend(backend, prompt, space), backend_id=backend.identifier, prompt_hash=digest)
    key: CacheKey = (backend.identifier, digest, space.fingerprint())
    with cache.key_lock(key):
        cached = cache.lookup(key)
        if cached is None:
            cached = _call_backend(backend, prompt, space)
            cache.store(key, cached)
    return LabelScores(scores=cached, backend_id=backend.identifier, prompt_hash=digest)


def build_synthetic_weights(
    n_labels: int,
    dim: int,
    seed: int = 0,
    confusable: tuple[int, int] | None = None,
    eps: float = 0.05,
) -> np.ndarray:
    """Unit-norm per-label weight rows; an optional pair is made nearly parallel.

    With a confusable pair (i, j), row j becomes row i perturbed by a unit
    direction scaled by eps, renormalised, so the two labels score almost
    identically on any input (cosine ~ 1 - eps^2 / 2).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    weights = rng.standard_normal((n_labels, dim))
    weights /= np.linalg.norm(weights, axis=1, keepdims=True)
    if confusable is not None:
        i, j = confusable
        if i == j or not (0 <= i < n_labels and 0 <= j < n_labels):
            raise DataError(f"confusable pair {confusable} invalid for {n_labels} labels")
        direction = rng.standard_normal(dim)
        noisy = weights[i] + eps * direction / np.linalg.norm(direction)
        weights[j] = noisy / np.linalg.norm(noisy)
    return weights


def synthetic_score(
    features: np.ndarray,
    demo_label_counts: Sequence[int],
    weights: np.ndarray,
    alpha: float,
    sigma: float,
    noise_key: int,
) -> list[float]:
    """score_l = dot(W_l, features) + alpha * count_l + seeded Gaussian noise.

    The noise generator is keyed on ``noise_key`` alone (counter-based), so a
    given key always yields the same perturbation regardless of call order.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (weights.shape[1],):
        raise DataError(f"feature dim {features.shape} does not match weights {weights.shape}")
    base = weights @ features + alpha * np.asarray(demo_label_counts, dtype=np.float64)
    if sigma > 0.0:
        rng = np.random.Generator(np.random.Philox(key=noise_key & ((1 << 128) - 1)))
        base = base + rng.normal(0.0, sigma, size=weights.shape[0])
    return [float(v) for v in base]


class SyntheticScorer:
    """Deterministic local scoring backend for tests and desk-scale runs."""

    def __init__(
        self,
        weights: np.ndarray,
        label_names: Sequence[str],
        alpha: float = 0.0,
        sigma: float = 0.05,
        seed: int = 0,
        embedder: HashingEmbedder | None = None,
    ):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[0] != len(label_names):
            raise DataError(f"weights shape {weights.shape} does not match {len(label_names)} labels")
        if alpha < 0.0:
            raise DataError("copy-bias strength alpha must be >= 0")
        if seed < 0:
            raise DataError("seed must be >= 0")
        self.weights = weights
        self.label_names = tuple(label_names)
        self.alpha = float(alpha)
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.embedder = embedder or HashingEmbedder(dim=weights.shape[1])
        config = hashlib.blake2b(digest_size=8)
        config.update(weights.tobytes())
        config.update(f"{self.alpha!r}|{self.sigma!r}|{self.seed}|{self.embedder.identifier}".encode())
        config.update("\x1f".join(self.label_names).encode("utf-8"))
        self.identifier = f"synthetic-{config.hexdigest()}"

    def score(self, prompt: str, label_names: Sequence[str]) -> list[float]:
        if tuple(label_names) != self.label_names:
            raise BackendError("label space does not match the synthetic scorer configuration")
        parsed = parse_prompt(prompt)
        counts = [0] * len(self.label_names)
        for _, label_name in parsed.demos:
            try:
                counts[self.label_names.index(label_name)] += 1
            except ValueError:
                raise BackendError(f"demonstration label {label_name!r} is outside the label space") from None
        features = self.embedder.embed([parsed.test_text])[0]
        noise_key = ((self.seed & _MASK64) << 64) | (prompt_digest(prompt) & _MASK64)
        return synthetic_score(features, counts, self.weights, self.alpha, self.sigma, noise_key)
