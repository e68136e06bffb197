"""Pure-numpy fallback for the top-k selection kernel.

Contract (shared with the compiled version in ``_topk.pyx``): given a float64
score vector, return the indices of the k largest scores ordered by
(score descending, index ascending). Ties on score always resolve toward the
smaller index, so results are reproducible regardless of how scores were
produced.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def top_k_desc(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, score-descending with index tie-break."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError("scores must be one-dimensional")
    if not 0 < k <= scores.shape[0]:
        raise ValueError(f"k must be in 1..{scores.shape[0]}, got {k}")
    # Stable sort on the negated scores keeps equal-score entries in ascending
    # index order, which is exactly the tie-break the contract requires.
    order = np.argsort(-scores, kind="stable")
    return order[:k].astype(np.int64)
