"""Demonstration-selection strategies: baselines and the ambiguity-constrained
variants with their fallback cascade.

The three constrained stages scan retrieval candidates in rank order and admit
a candidate (x_i, y_i) when:

    gold           y_i is in the test example's ambiguous pair, scanning the
                   top ``candidate_budget`` retrieved candidates;
    gold_mis       additionally the zero-shot prediction got x_i wrong,
                   scanning the top ``candidate_budget`` *misclassified*
                   retrieved candidates (filter first, then truncate);
    gold_mis_pred  additionally that wrong prediction also lies in the
                   ambiguous pair, over the same misclassified pool.

Scanning stops once ``n_shots`` candidates are admitted. When a stage cannot
fill ``n_shots`` within its budget, selection restarts at the next weaker
stage: gold_mis_pred -> gold_mis -> gold -> plain retrieval prefix. The stage
that actually produced the demonstrations is recorded so experiments can
report fallback frequency. Selection is pure given its context and admitted
demonstrations keep their retrieval rank order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from iclselect.ambiguity import AmbiguousLabelSet, ZeroShotTable
from iclselect.corpus import Dataset, LabeledExample
from iclselect.embeddings import RankedCandidates
from iclselect.errors import DataError, SelectionError
from iclselect.prompting import Demonstration, DemonstrationSet

STRATEGY_FREQ = "freq"
STRATEGY_ZERO = "zero"
STRATEGY_STATIC_N = "static_n"
STRATEGY_RETR = "retr"
STRATEGY_AMBIG_GOLD = "ambig_gold"
STRATEGY_AMBIG_GOLD_MIS = "ambig_gold_mis"
STRATEGY_AMBIG_GOLD_MIS_PRED = "ambig_gold_mis_pred"

ALL_STRATEGIES = (
    STRATEGY_FREQ,
    STRATEGY_ZERO,
    STRATEGY_STATIC_N,
    STRATEGY_RETR,
    STRATEGY_AMBIG_GOLD,
    STRATEGY_AMBIG_GOLD_MIS,
    STRATEGY_AMBIG_GOLD_MIS_PRED,
)
AMBIG_STRATEGIES = (STRATEGY_AMBIG_GOLD, STRATEGY_AMBIG_GOLD_MIS, STRATEGY_AMBIG_GOLD_MIS_PRED)
FEWSHOT_STRATEGIES = (STRATEGY_STATIC_N, STRATEGY_RETR) + AMBIG_STRATEGIES

STAGE_GOLD = "gold"
STAGE_GOLD_MIS = "gold_mis"
STAGE_GOLD_MIS_PRED = "gold_mis_pred"
STAGE_RETR = "retr"

# Strictest first; fallback walks this list left to right.
STAGE_CASCADE = (STAGE_GOLD_MIS_PRED, STAGE_GOLD_MIS, STAGE_GOLD, STAGE_RETR)

_STRATEGY_STAGE = {
    STRATEGY_AMBIG_GOLD: STAGE_GOLD,
    STRATEGY_AMBIG_GOLD_MIS: STAGE_GOLD_MIS,
    STRATEGY_AMBIG_GOLD_MIS_PRED: STAGE_GOLD_MIS_PRED,
}


@dataclass(frozen=True)
class SelectionConfig:
    strategy: str
    n_shots: int = 4
    candidate_budget: int = 250
    fallback_enabled: bool = True

    def __post_init__(self):
        if self.strategy not in ALL_STRATEGIES:
            raise DataError(f"unknown strategy {self.strategy!r}; expected one of {ALL_STRATEGIES}")
        if self.strategy in FEWSHOT_STRATEGIES and self.n_shots < 1:
            raise DataError(f"n_shots must be >= 1 for strategy {self.strategy!r}")
        if self.candidate_budget < self.n_shots:
            raise DataError(
                f"candidate_budget {self.candidate_budget} must be >= n_shots {self.n_shots}"
            )


@dataclass(frozen=True)
class SelectionOutcome:
    """A demonstration set plus where in the cascade it was actually filled."""

    demo_set: DemonstrationSet
    satisfied_stage: str
    candidates_scanned: int
    short_fill: bool = False


@dataclass(frozen=True)
class StrategyPlan:
    """What the dispatcher decided for one (test example, strategy) pair."""

    mode: str  # "direct_label" | "zero_shot" | "few_shot"
    outcome: SelectionOutcome | None = None
    direct_label: int | None = None


@dataclass
class SelectionContext:
    """Everything a strategy may need for one test example."""

    pool: Mapping[str, LabeledExample]
    ranked: RankedCandidates | None = None
    ambig: AmbiguousLabelSet | None = None
    table: ZeroShotTable | None = None
    majority: int | None = None
    static_demos: DemonstrationSet | None = None


def select_static_n(dataset: Dataset) -> DemonstrationSet:
    """One demonstration per label: the first training example of each label
    in split order, emitted in label-id order. Static across test examples."""
    first_by_label: dict[int, LabeledExample] = {}
    for ex in dataset.train:
        first_by_label.setdefault(ex.gold.id, ex)
    missing = [label.name for label in dataset.label_space.labels if label.id not in first_by_label]
    if missing:
        raise SelectionError(f"no training example for labels: {missing}")
    demos = tuple(
        Demonstration(example=first_by_label[label.id], provenance="static", rank=0)
        for label in dataset.label_space.labels
    )
    return DemonstrationSet(test_example_id="", demos=demos)


def select_retr(
    ranked: RankedCandidates,
    n: int,
    pool: Mapping[str, LabeledExample],
) -> DemonstrationSet:
    """The n nearest retrieved candidates, in rank order."""
    if n < 1:
        raise SelectionError("n must be >= 1")
    if len(ranked.entries) < n:
        raise SelectionError(
            f"ranked list for {ranked.query_id!r} has {len(ranked.entries)} candidates, need {n}"
        )
    demos = tuple(
        Demonstration(example=pool[ex_id], provenance=STAGE_RETR, rank=pos)
        for pos, (ex_id, _score) in enumerate(ranked.entries[:n], start=1)
    )
    return DemonstrationSet(test_example_id=ranked.query_id, demos=demos)


def _scan_stage(
    stage: str,
    ranked: RankedCandidates,
    ambig: AmbiguousLabelSet,
    table: ZeroShotTable | None,
    pool: Mapping[str, LabeledExample],
    n: int,
    budget: int,
) -> tuple[list[tuple[LabeledExample, int]], int]:
    """Admitted (example, rank) pairs plus how many stage-pool members were scanned."""
    if stage != STAGE_GOLD and table is None:
        raise DataError(f"stage {stage!r} needs a zero-shot table over the candidate pool")
    admitted: list[tuple[LabeledExample, int]] = []
    scanned = 0
    for pos, (ex_id, _score) in enumerate(ranked.entries, start=1):
        if stage != STAGE_GOLD and table.record(ex_id).correct:
            continue  # mis pools contain only misclassified candidates
        scanned += 1
        example = pool.get(ex_id)
        if example is None:
            raise DataError(f"ranked candidate {ex_id!r} is not in the training pool")
        ok = example.gold.id in ambig
        if ok and stage == STAGE_GOLD_MIS_PRED:
            ok = table.record(ex_id).predicted in ambig
        if ok:
            admitted.append((example, pos))
            if len(admitted) == n:
                break
        if scanned >= budget:
            break
    return admitted, scanned


def select_ambig(
    ranked: RankedCandidates,
    ambig: AmbiguousLabelSet,
    table: ZeroShotTable | None,
    config: SelectionConfig,
    pool: Mapping[str, LabeledExample],
) -> SelectionOutcome:
    """Constrained selection with the fallback cascade described above."""
    requested = _STRATEGY_STAGE.get(config.strategy)
    if requested is None:
        raise DataError(f"strategy {config.strategy!r} is not an ambiguity-constrained strategy")
    n = config.n_shots
    if len(ranked.entries) < n:
        raise SelectionError(
            f"ranked list for {ranked.query_id!r} has {len(ranked.entries)} candidates, need {n}"
        )
    stages = STAGE_CASCADE[STAGE_CASCADE.index(requested) :] if config.fallback_enabled else (requested,)

    stage = requested
    admitted: list[tuple[LabeledExample, int]] = []
    scanned = 0
    for stage in stages:
        if stage == STAGE_RETR:
            admitted = [
                (pool[ex_id], pos) for pos, (ex_id, _score) in enumerate(ranked.entries[:n], start=1)
            ]
            scanned = n
        else:
            admitted, scanned = _scan_stage(stage, ranked, ambig, table, pool, n, config.candidate_budget)
        if len(admitted) == n:
            break

    demos = DemonstrationSet(
        test_example_id=ranked.query_id,
        demos=tuple(Demonstration(example=ex, provenance=stage, rank=pos) for ex, pos in admitted),
    )
    return SelectionOutcome(
        demo_set=demos,
        satisfied_stage=stage,
        candidates_scanned=scanned,
        short_fill=len(admitted) < n,
    )


def select_for_strategy(
    test_example: LabeledExample,
    context: SelectionContext,
    config: SelectionConfig,
) -> StrategyPlan:
    """Dispatch one test example to its strategy's selection routine."""
    strategy = config.strategy
    if strategy == STRATEGY_FREQ:
        if context.majority is None:
            raise DataError("freq strategy needs the corpus majority label in the context")
        return StrategyPlan(mode="direct_label", direct_label=context.majority)
    if strategy == STRATEGY_ZERO:
        return StrategyPlan(mode="zero_shot")
    if strategy == STRATEGY_STATIC_N:
        if context.static_demos is None:
            raise DataError("static_n strategy needs the shared static demonstration set")
        demo_set = replace(context.static_demos, test_example_id=test_example.id)
        outcome = SelectionOutcome(demo_set=demo_set, satisfied_stage="static", candidates_scanned=0)
        return StrategyPlan(mode="few_shot", outcome=outcome)
    if context.ranked is None:
        raise DataError(f"strategy {strategy!r} needs ranked retrieval candidates")
    if strategy == STRATEGY_RETR:
        demo_set = select_retr(context.ranked, config.n_shots, context.pool)
        outcome = SelectionOutcome(demo_set=demo_set, satisfied_stage=STAGE_RETR, candidates_scanned=config.n_shots)
        return StrategyPlan(mode="few_shot", outcome=outcome)
    if context.ambig is None:
        raise DataError(f"strategy {strategy!r} needs the test example's ambiguous label set")
    outcome = select_ambig(context.ranked, context.ambig, context.table, config, context.pool)
    return StrategyPlan(mode="few_shot", outcome=outcome)
