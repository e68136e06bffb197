"""HTTP backends speaking the JSON scoring protocol.

Scoring request/response::

    POST <base_url>/score   {"prompt": <text>, "labels": [<name>, ...]}
                        ->  {"scores": [<float>, ...]}   (same label order)

Embedding request/response::

    POST <base_url>/embed   {"texts": [<text>, ...]}
                        ->  {"vectors": [[<float>, ...], ...]}

Timeouts and connection failures are retried up to ``retries`` times;
malformed replies are not retried. The ``AMBIG_SCORER_URL`` environment
variable overrides the configured scorer base URL.
"""

from __future__ import annotations

import os
import time
from typing import Sequence

import requests

from iclselect.errors import BackendError

SCORER_URL_ENV = "AMBIG_SCORER_URL"


def resolve_scorer_url(configured: str | None) -> str:
    url = os.environ.get(SCORER_URL_ENV) or configured
    if not url:
        raise BackendError(f"no scorer URL configured and {SCORER_URL_ENV} is unset")
    return url.rstrip("/")


def _post_json(url: str, payload: dict, timeout: float, retries: int) -> dict:
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            response = requests.post(url, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
            if attempt < retries:
                time.sleep(min(0.1 * 2**attempt, 2.0))
            continue
        if response.status_code != 200:
            raise BackendError(f"backend at {url} replied with HTTP {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise BackendError(f"backend at {url} replied with non-JSON body") from exc
    raise BackendError(f"backend at {url} unreachable after {retries + 1} attempts: {last_error}")


class HTTPScorer:
    """Label scorer backed by a remote model endpoint."""

    def __init__(self, base_url: str, timeout: float = 30.0, retries: int = 2):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.identifier = f"http:{self.base_url}"

    def score(self, prompt: str, label_names: Sequence[str]) -> list[float]:
        payload = {"prompt": prompt, "labels": list(label_names)}
        reply = _post_json(f"{self.base_url}/score", payload, self.timeout, self.retries)
        scores = reply.get("scores")
        if not isinstance(scores, list):
            raise BackendError(f"malformed reply from {self.base_url}: missing 'scores' list")
        return [float(s) for s in scores]


class HTTPEmbedder:
    """Text embedder speaking the same wire conventions as the scorer."""

    def __init__(self, base_url: str, timeout: float = 30.0, retries: int = 2):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.identifier = f"http:{self.base_url}"

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        payload = {"texts": list(texts)}
        reply = _post_json(f"{self.base_url}/embed", payload, self.timeout, self.retries)
        vectors = reply.get("vectors")
        if not isinstance(vectors, list):
            raise BackendError(f"malformed reply from {self.base_url}: missing 'vectors' list")
        return vectors
