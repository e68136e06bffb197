"""Independent brute-force reference implementations used by the tests.

These deliberately re-derive the behaviour from the documented rules with
straight filter-then-prefix list building, staying away from the library's
scanning code paths.
"""

from __future__ import annotations

STAGES = ("gold_mis_pred", "gold_mis", "gold", "retr")


def oracle_select(
    candidates: list[tuple[str, int, int]],  # (id, gold, pred) in rank order
    ambig: tuple[int, int],
    n: int,
    budget: int,
    requested_stage: str,
    fallback: bool = True,
) -> tuple[str, list[str], bool]:
    """Reference selection: returns (satisfied stage, demo ids, short_fill)."""

    def admitted_for(stage: str) -> list[str]:
        if stage == "retr":
            return [c_id for c_id, _gold, _pred in candidates[:n]]
        if stage == "gold":
            pool = candidates[:budget]
        else:
            pool = [c for c in candidates if c[2] != c[1]][:budget]
        keep = []
        for c_id, gold, pred in pool:
            if gold not in ambig:
                continue
            if stage == "gold_mis_pred" and pred not in ambig:
                continue
            keep.append(c_id)
        return keep[:n]

    stages = STAGES[STAGES.index(requested_stage) :] if fallback else (requested_stage,)
    stage = requested_stage
    chosen: list[str] = []
    for stage in stages:
        chosen = admitted_for(stage)
        if len(chosen) == n:
            break
    return stage, chosen, len(chosen) < n


def oracle_rank(vectors: dict[str, list[float]], query: list[float], depth: int) -> list[str]:
    """Exhaustive inner-product sort with (score desc, id asc) tie-break.

    Scores use one float64 matmul (float products of float32 inputs are
    identical regardless of blocking for a fixed summation path, so this
    matches the library's score array); the ranking itself is an exhaustive
    Python sort, independent of the library's top-k selection.
    """
    import numpy as np

    ids = sorted(vectors)
    matrix = np.vstack([np.asarray(vectors[ex_id], dtype=np.float32) for ex_id in ids]).astype(np.float64)
    scores = matrix @ np.asarray(query, dtype=np.float32).astype(np.float64)
    ordered = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [ids[i] for i in ordered[:depth]]
