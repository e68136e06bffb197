"""Zero-shot scoring tables, ambiguous label sets, and misclassification flags.

The zero-shot pass scores every example with the task-definition-only prompt.
From those scores come the two labels the model is most confused about
(the ambiguous set), the predicted-vs-gold correctness flags that drive the
misclassification constraints, and the analysis rates reported alongside the
main metrics. Ambiguous sets are computed once per example and reused across
all selection variants.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from iclselect.corpus import LabeledExample, LabelSpace
from iclselect.embeddings import RankedCandidates
from iclselect.errors import DataError, IclSelectError
from iclselect.prompting import build_zero_shot
from iclselect.scoring import (
    LabelScores,
    PredictionRecord,
    ScoreCache,
    ScorerBackend,
    predict,
    score_labels,
)


@dataclass(frozen=True)
class AmbiguousLabelSet:
    """The two labels the scorer ranks highest for one input."""

    example_id: str
    first: int
    second: int

    def __contains__(self, label_id: int) -> bool:
        return label_id == self.first or label_id == self.second

    @property
    def pair(self) -> tuple[int, int]:
        return (self.first, self.second)


def ambiguous_set(scores, example_id: str = "") -> AmbiguousLabelSet:
    """Top-2 scoring labels; ties break toward the lowest label id."""
    values = scores.scores if isinstance(scores, LabelScores) else tuple(scores)
    if len(values) < 2:
        raise DataError("ambiguous set needs a label space of size >= 2")
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return AmbiguousLabelSet(example_id=example_id, first=order[0], second=order[1])


class ZeroShotTable:
    """Prediction records (and ambiguous sets) for a set of example ids."""

    def __init__(self):
        self._records: dict[str, PredictionRecord] = {}
        self._ambig: dict[str, AmbiguousLabelSet] = {}

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, example_id: str) -> bool:
        return example_id in self._records

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._records)

    def add(self, record: PredictionRecord, ambig: AmbiguousLabelSet) -> None:
        self._records[record.example_id] = record
        self._ambig[record.example_id] = ambig

    def update(self, other: "ZeroShotTable") -> None:
        for ex_id in other.ids:
            self.add(other.record(ex_id), other.ambiguous(ex_id))

    def record(self, example_id: str) -> PredictionRecord:
        try:
            return self._records[example_id]
        except KeyError:
            raise DataError(f"example {example_id!r} is not covered by the zero-shot table") from None

    def ambiguous(self, example_id: str) -> AmbiguousLabelSet:
        record = self.record(example_id)  # same coverage check
        return self._ambig[record.example_id]

    def covers(self, ids: Iterable[str]) -> bool:
        return all(ex_id in self._records for ex_id in ids)

    def accuracy(self) -> float:
        if not self._records:
            raise DataError("empty zero-shot table")
        return sum(r.correct for r in self._records.values()) / len(self._records)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for ex_id in sorted(self._records):
                record = self._records[ex_id]
                ambig = self._ambig[ex_id]
                fh.write(
                    json.dumps(
                        {
                            "id": ex_id,
                            "scores": list(record.scores.scores),
                            "backend": record.scores.backend_id,
                            "prompt_hash": record.scores.prompt_hash,
                            "predicted": record.predicted,
                            "correct": record.correct,
                            "ambiguous": [ambig.first, ambig.second],
                        },
                        sort_keys=True,
                    )
                )
                fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ZeroShotTable":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"missing zero-shot table file {path}")
        table = cls()
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                scores = LabelScores(
                    scores=tuple(float(s) for s in row["scores"]),
                    backend_id=row["backend"],
                    prompt_hash=int(row["prompt_hash"]),
                )
                record = PredictionRecord(
                    example_id=row["id"],
                    scores=scores,
                    predicted=int(row["predicted"]),
                    correct=bool(row["correct"]),
                )
                first, second = row["ambiguous"]
                table.add(record, AmbiguousLabelSet(example_id=row["id"], first=int(first), second=int(second)))
        return table


def zero_shot_pass(
    examples: Sequence[LabeledExample],
    defn: str,
    space: LabelSpace,
    backend: ScorerBackend,
    cache: ScoreCache | None = None,
    max_workers: int = 1,
    error_sink: list[tuple[str, str]] | None = None,
) -> ZeroShotTable:
    """Score every example with the zero-shot prompt and tabulate the results.

    Scoring may fan out across a thread pool; table assembly is serialized.
    Failures re-raise with the offending example id attached, unless
    ``error_sink`` is given, in which case (id, message) pairs are collected
    there and the affected examples are simply absent from the table.
    """

    def evaluate(ex: LabeledExample):
        try:
            scores = score_labels(build_zero_shot(defn, ex.text), space, backend, cache)
        except IclSelectError as exc:
            if error_sink is None:
                raise type(exc)(f"example {ex.id!r}: {exc}") from exc
            error_sink.append((ex.id, str(exc)))
            return None
        predicted = predict(scores)
        record = PredictionRecord(
            example_id=ex.id,
            scores=scores,
            predicted=predicted,
            correct=predicted == ex.gold.id,
        )
        return record, ambiguous_set(scores, example_id=ex.id)

    table = ZeroShotTable()
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(evaluate, examples))
    else:
        results = [evaluate(ex) for ex in examples]
    for result in results:
        if result is not None:
            table.add(*result)
    return table


def misclassified_candidates(ranked: RankedCandidates, table: ZeroShotTable) -> RankedCandidates:
    """Rank-order-preserving subsequence of candidates the scorer got wrong."""
    kept = tuple(entry for entry in ranked.entries if not table.record(entry[0]).correct)
    return replace(ranked, entries=kept, depth=len(kept))


def gold_in_ambig_rate(
    ambig_sets: Sequence[AmbiguousLabelSet],
    golds: Sequence[int],
) -> tuple[float, dict[int, float]]:
    """Fraction of examples whose gold label is in the ambiguous pair.

    Returns the overall rate plus per-gold-label rates (only labels that
    occur among ``golds`` appear in the mapping).
    """
    if len(ambig_sets) != len(golds):
        raise DataError(f"length mismatch: {len(ambig_sets)} ambiguous sets vs {len(golds)} golds")
    if not golds:
        raise DataError("cannot compute rates over zero examples")
    hits_total = 0
    per_label_hits: dict[int, int] = {}
    per_label_counts: dict[int, int] = {}
    for ambig, gold in zip(ambig_sets, golds):
        hit = gold in ambig
        hits_total += hit
        per_label_hits[gold] = per_label_hits.get(gold, 0) + hit
        per_label_counts[gold] = per_label_counts.get(gold, 0) + 1
    per_label = {label: per_label_hits[label] / per_label_counts[label] for label in sorted(per_label_counts)}
    return hits_total / len(golds), per_label
