"""Experiment orchestration: multi-seed runs, persistence, replay, inspection.

A run directory contains::

    run_manifest.json    config snapshot, version, cache stats, fallback
                         histogram, timings, per-file sha256 checksums
    report.json          every EvaluationReport plus the F1/entropy Pearson r
    report.csv           one row per strategy x shots x seed, plus a mean row
    zero_test.jsonl      zero-shot table over the test split
    zero_train.jsonl     lazy zero-shot table over candidate training examples
    selections/<cell>.jsonl   per-test-example selection outcome (seed-free)
    records/<cell>.jsonl      per-(seed, test example) prediction record
    confusion/<cell>_seed<k>.csv, <cell>_pooled.csv

where <cell> is "freq", "zero", "static_n", or "<strategy>_<shots>". All
outputs except the manifest's timing fields are a pure function of the config,
so a rerun with the same config is byte-identical. Records are written
streaming and scoring goes through the append-only cache, which makes crashed
wire-backend runs resumable.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from iclselect import __version__
from iclselect.ambiguity import ZeroShotTable, gold_in_ambig_rate, zero_shot_pass
from iclselect.config import ExperimentConfig
from iclselect.corpus import Dataset, LabeledExample, LabelSpace, label_frequencies, load_dataset, majority_label
from iclselect.embeddings import HashingEmbedder, RankedCandidates, load_store, rank_candidates
from iclselect.errors import ConfigError, DataError, IclSelectError
from iclselect.kernels import KERNEL_BACKEND
from iclselect.metrics import (
    EvaluationReport,
    SeedMetrics,
    aggregate_report,
    classification_scores,
    entropy_bits,
    gold_share,
    pearson_r,
)
from iclselect.prompting import (
    ORDER_ENTROPY_ASCENDING,
    ORDER_SHUFFLED,
    build_few_shot,
    build_zero_shot,
    demo_set_from_examples,
    order_demos,
)
from iclselect.scoring import (
    ScoreCache,
    SyntheticScorer,
    build_synthetic_weights,
    normalize,
    predict,
    prompt_digest,
    score_labels,
)
from iclselect.selection import (
    AMBIG_STRATEGIES,
    FEWSHOT_STRATEGIES,
    STRATEGY_FREQ,
    STRATEGY_STATIC_N,
    STRATEGY_ZERO,
    SelectionConfig,
    SelectionContext,
    StrategyPlan,
    select_for_strategy,
    select_static_n,
)
from iclselect.wire import HTTPScorer, resolve_scorer_url

MANIFEST_FILE = "run_manifest.json"
REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
ZERO_TEST_FILE = "zero_test.jsonl"
ZERO_TRAIN_FILE = "zero_train.jsonl"
SELECTIONS_DIR = "selections"
RECORDS_DIR = "records"
CONFUSION_DIR = "confusion"

_TABLE_STAGES = ("gold_mis", "gold_mis_pred")
_CSV_COLUMNS = (
    "strategy",
    "n_shots",
    "seed",
    "f1_macro",
    "precision_macro",
    "recall_macro",
    "accuracy",
    "mean_entropy_bits",
    "gold_share_selected",
    "gold_share_topk",
)


@dataclass
class RunResult:
    out_dir: Path
    reports: list[EvaluationReport]
    manifest: dict
    pearson_f1_entropy: float | None


def make_backend(config: ExperimentConfig, space: LabelSpace):
    if config.backend_kind == "synthetic":
        weights = build_synthetic_weights(
            space.size,
            config.synthetic_dim,
            seed=config.synthetic_weights_seed,
            confusable=config.synthetic_confusable,
            eps=config.synthetic_eps,
        )
        return SyntheticScorer(
            weights,
            space.names,
            alpha=config.synthetic_alpha,
            sigma=config.synthetic_sigma,
            seed=config.synthetic_seed,
            embedder=HashingEmbedder(dim=config.synthetic_dim),
        )
    return HTTPScorer(resolve_scorer_url(config.scorer_url), timeout=config.timeout_s, retries=config.retries)


def cell_name(strategy: str, shots: int | None) -> str:
    return strategy if shots is None else f"{strategy}_{shots}"


def _shots_grid(strategy: str, config: ExperimentConfig) -> tuple[int | None, ...]:
    # freq/zero take no demonstrations; static_n always shows one per label.
    if strategy in (STRATEGY_FREQ, STRATEGY_ZERO, STRATEGY_STATIC_N):
        return (None,)
    return config.n_shots


def _needs_zero_test(strategy: str) -> bool:
    return strategy == STRATEGY_ZERO or strategy in AMBIG_STRATEGIES


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def _read_jsonl(path: Path) -> list[dict]:
    if not path.is_file():
        raise DataError(f"missing run file {path}")
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _map_ordered(fn, items, workers: int):
    """Apply fn over items, optionally in a thread pool, preserving order."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _extend_table(
    table: ZeroShotTable,
    ids: list[str],
    pool_map: dict[str, LabeledExample],
    dataset: Dataset,
    backend,
    cache: ScoreCache,
    workers: int,
    error_sink: list[tuple[str, str]] | None,
) -> None:
    missing = [ex_id for ex_id in ids if ex_id not in table]
    if not missing:
        return
    examples = [pool_map[ex_id] for ex_id in missing]
    fresh = zero_shot_pass(
        examples,
        dataset.task_definition,
        dataset.label_space,
        backend,
        cache,
        max_workers=workers,
        error_sink=error_sink,
    )
    table.update(fresh)


def _walk_rankings_for_table(
    rankings: dict[str, RankedCandidates],
    table: ZeroShotTable,
    budget: int,
    pool_map: dict[str, LabeledExample],
    dataset: Dataset,
    backend,
    cache: ScoreCache,
    workers: int,
    error_sink: list[tuple[str, str]] | None,
) -> None:
    """Score just enough training candidates to cover the misclassified pools.

    Walks each ranking in order until ``budget`` misclassified candidates are
    known (the deepest any constrained stage can scan) or the list ends, so a
    large training pool never needs a full zero-shot pass.
    """
    for ranked in rankings.values():
        # The first `budget` candidates are needed regardless; batch them.
        _extend_table(
            table, [ex_id for ex_id, _ in ranked.entries[:budget]], pool_map, dataset, backend, cache, workers, error_sink
        )
        mis_found = 0
        for pos, (ex_id, _score) in enumerate(ranked.entries, start=1):
            if ex_id not in table:
                _extend_table(table, [ex_id], pool_map, dataset, backend, cache, workers, error_sink)
            if ex_id not in table:
                continue  # scoring failed and was recorded; stage scans will surface it
            if not table.record(ex_id).correct:
                mis_found += 1
            if pos >= budget and mis_found >= budget:
                break


def _entropy_map(table: ZeroShotTable, ids: set[str]) -> dict[str, float]:
    return {ex_id: entropy_bits(normalize(table.record(ex_id).scores)) for ex_id in ids if ex_id in table}


def _selection_row(ex: LabeledExample, shots: int | None, strategy: str, plan: StrategyPlan, topk_golds) -> dict:
    row = {
        "id": ex.id,
        "gold": ex.gold.id,
        "strategy": strategy,
        "n_shots": shots,
        "mode": plan.mode,
        "direct_label": plan.direct_label,
        "stage": None,
        "short_fill": None,
        "scanned": None,
        "demo_ids": [],
        "demo_golds": [],
        "demo_ranks": [],
        "demo_provenance": [],
        "topk_golds": topk_golds,
    }
    if plan.outcome is not None:
        demos = plan.outcome.demo_set.demos
        row.update(
            {
                "stage": plan.outcome.satisfied_stage,
                "short_fill": plan.outcome.short_fill,
                "scanned": plan.outcome.candidates_scanned,
                "demo_ids": [d.example.id for d in demos],
                "demo_golds": [d.example.gold.id for d in demos],
                "demo_ranks": [d.rank for d in demos],
                "demo_provenance": [d.provenance for d in demos],
            }
        )
    return row


def _seed_metrics_from_rows(
    seed: int,
    rows: list[dict],
    selection_rows: list[dict],
    space_size: int,
    names: tuple[str, ...],
) -> SeedMetrics:
    if not rows:
        raise DataError(f"no successful examples for seed {seed}")
    golds = [row["gold"] for row in rows]
    preds = [row["predicted"] for row in rows]
    matrix = _confusion_from_pairs(golds, preds, space_size)
    scores = classification_scores(matrix)
    entropies = [entropy_bits(normalize(row["scores"])) for row in rows if row["scores"] is not None]
    mean_entropy = float(sum(entropies) / len(entropies)) if entropies else None
    shares = None
    if rows[0]["mode"] == "few_shot":
        shares = gold_share([row["demo_golds"] for row in rows], golds)
    topk = None
    with_topk = [sel for sel in selection_rows if sel["topk_golds"] is not None]
    if with_topk:
        topk = gold_share([sel["topk_golds"] for sel in with_topk], [sel["gold"] for sel in with_topk])
    return SeedMetrics(
        seed=seed,
        f1_macro=scores.f1_macro,
        precision_macro=scores.precision_macro,
        recall_macro=scores.recall_macro,
        accuracy=scores.accuracy,
        mean_entropy_bits=mean_entropy,
        gold_share_selected=shares,
        gold_share_topk=topk,
        confusion=matrix.tolist(),
    )


def _confusion_from_pairs(golds, preds, space_size):
    matrix = np.zeros((space_size, space_size), dtype=np.int64)
    for gold, pred in zip(golds, preds):
        matrix[gold, pred] += 1
    return matrix


def _gold_in_ambig_for(selection_rows: list[dict], zero_test: ZeroShotTable, names) -> tuple[float, dict[str, float]]:
    covered = [(row["id"], row["gold"]) for row in selection_rows if row["id"] in zero_test]
    if not covered:
        return 0.0, {}
    ambig_sets = [zero_test.ambiguous(ex_id) for ex_id, _gold in covered]
    overall, per_label = gold_in_ambig_rate(ambig_sets, [gold for _ex_id, gold in covered])
    return overall, {names[label]: rate for label, rate in per_label.items()}


def _write_confusion_csvs(out_dir: Path, cell: str, per_seed: list[SeedMetrics], names) -> list[Path]:
    folder = out_dir / CONFUSION_DIR
    folder.mkdir(parents=True, exist_ok=True)
    written = []

    def write_grid(path: Path, matrix) -> None:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["gold\\pred", *names])
            for name, row in zip(names, matrix):
                writer.writerow([name, *[int(v) for v in row]])
        written.append(path)

    pooled = np.zeros((len(names), len(names)), dtype=np.int64)
    for metrics in per_seed:
        matrix = np.asarray(metrics.confusion)
        pooled += matrix
        write_grid(folder / f"{cell}_seed{metrics.seed}.csv", matrix)
    write_grid(folder / f"{cell}_pooled.csv", pooled)
    return written


def _report_csv_text(reports: list[EvaluationReport]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)

    def fmt(value):
        return "" if value is None else repr(value) if isinstance(value, float) else value

    for report in reports:
        for metrics in report.per_seed:
            writer.writerow(
                [
                    report.strategy,
                    fmt(report.n_shots),
                    metrics.seed,
                    fmt(metrics.f1_macro),
                    fmt(metrics.precision_macro),
                    fmt(metrics.recall_macro),
                    fmt(metrics.accuracy),
                    fmt(metrics.mean_entropy_bits),
                    fmt(metrics.gold_share_selected),
                    fmt(metrics.gold_share_topk),
                ]
            )
        writer.writerow(
            [
                report.strategy,
                fmt(report.n_shots),
                "mean",
                *[fmt(report.mean[key]) for key in _CSV_COLUMNS[3:]],
            ]
        )
    return buffer.getvalue()


def _emit_reports(out_dir: Path, reports: list[EvaluationReport], pearson: float | None, names) -> list[Path]:
    files = []
    payload = {
        "reports": [report.to_dict() for report in reports],
        "pearson_f1_entropy": pearson,
    }
    report_path = out_dir / REPORT_JSON
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append(report_path)
    csv_path = out_dir / REPORT_CSV
    csv_path.write_text(_report_csv_text(reports), encoding="utf-8")
    files.append(csv_path)
    for report in reports:
        files.extend(_write_confusion_csvs(out_dir, cell_name(report.strategy, report.n_shots), list(report.per_seed), names))
    return files


def _pearson_over_reports(reports: list[EvaluationReport]) -> float | None:
    points = [
        (report.mean["f1_macro"], report.mean["mean_entropy_bits"])
        for report in reports
        if report.mean["mean_entropy_bits"] is not None and report.mean["f1_macro"] is not None
    ]
    if len(points) < 2:
        return None
    try:
        return pearson_r([p[0] for p in points], [p[1] for p in points])
    except DataError:
        return None


def run_experiment(config: ExperimentConfig) -> RunResult:
    started_at = time.time()
    clock = time.monotonic()
    config.validate_paths()
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    dataset = load_dataset(config.dataset_dir)
    space = dataset.label_space
    names = space.names
    if not dataset.test:
        raise DataError("dataset has no test split")

    retrieval_strategies = [s for s in config.strategies if s in FEWSHOT_STRATEGIES and s != STRATEGY_STATIC_N]
    needs_train = any(s != STRATEGY_ZERO for s in config.strategies)
    if needs_train and not dataset.train:
        raise DataError("dataset has no train split but a training-pool strategy was requested")
    max_shots = max(config.n_shots)
    if retrieval_strategies and len(dataset.train) < max_shots:
        raise ConfigError(
            f"training pool of {len(dataset.train)} examples cannot supply {max_shots} demonstrations"
        )

    pool_map = {ex.id: ex for ex in dataset.train}
    errors: list[tuple[str, str]] = []
    error_sink = None if config.fail_fast else errors

    backend = make_backend(config, space)
    cache = ScoreCache(config.resolved_cache_path())
    written: list[Path] = []

    # Zero-shot pass over the test split: predictions, ambiguous sets, and the
    # analysis rates all come from here, whatever strategies are requested.
    zero_test = zero_shot_pass(
        dataset.test,
        dataset.task_definition,
        space,
        backend,
        cache,
        max_workers=config.workers,
        error_sink=error_sink,
    )
    zero_test_path = out_dir / ZERO_TEST_FILE
    zero_test.save(zero_test_path)
    written.append(zero_test_path)
    t_zero = time.monotonic() - clock

    # Retrieval rankings for every test example.
    rankings: dict[str, RankedCandidates] = {}
    if retrieval_strategies:
        store = load_store(config.embeddings_path, valid_ids=dataset.all_ids())
        needed = [ex.id for ex in dataset.train] + [ex.id for ex in dataset.test]
        missing = [ex_id for ex_id in needed if ex_id not in store]
        if missing:
            raise DataError(f"embedding store lacks vectors for {len(missing)} examples, e.g. {missing[:3]}")
        pool_store = store.subset(pool_map)
        depth = len(pool_store) if config.retrieval_depth is None else min(config.retrieval_depth, len(pool_store))
        depth = max(depth, min(len(pool_store), max_shots))
        for ex in dataset.test:
            rankings[ex.id] = rank_candidates(store.vector(ex.id), pool_store, depth, query_id=ex.id)
    t_retrieval = time.monotonic() - clock - t_zero

    # Lazy zero-shot table over training candidates, only as deep as the
    # misclassification constraints can scan.
    train_table = ZeroShotTable()
    mis_requested = any(s in (AMBIG_STRATEGIES[1], AMBIG_STRATEGIES[2]) for s in config.strategies)
    if mis_requested:
        _walk_rankings_for_table(
            rankings, train_table, config.candidate_budget, pool_map, dataset, backend, cache, config.workers, error_sink
        )

    majority = None
    if STRATEGY_FREQ in config.strategies:
        majority = majority_label(label_frequencies(dataset.train, space))
    static_demos = select_static_n(dataset) if STRATEGY_STATIC_N in config.strategies else None

    reports: list[EvaluationReport] = []
    fallback_histogram: dict[str, dict[str, int]] = {}

    for strategy in config.strategies:
        for shots in _shots_grid(strategy, config):
            cell = cell_name(strategy, shots)
            sel_config = SelectionConfig(
                strategy=strategy,
                n_shots=shots if shots is not None else 1,
                candidate_budget=config.candidate_budget,
                fallback_enabled=config.fallback_enabled,
            )

            # Selection is seed-independent: demo order is the only thing a
            # seed changes, and ordering happens after selection.
            plans: dict[str, StrategyPlan] = {}
            selection_rows: list[dict] = []
            for ex in dataset.test:
                if _needs_zero_test(strategy) and ex.id not in zero_test:
                    continue  # zero-shot scoring already failed and was recorded
                try:
                    context = SelectionContext(
                        pool=pool_map,
                        ranked=rankings.get(ex.id),
                        ambig=zero_test.ambiguous(ex.id) if ex.id in zero_test else None,
                        table=train_table if mis_requested else None,
                        majority=majority,
                        static_demos=static_demos,
                    )
                    plan = select_for_strategy(ex, context, sel_config)
                except IclSelectError as exc:
                    if config.fail_fast:
                        raise
                    errors.append((ex.id, f"{cell}: {exc}"))
                    continue
                plans[ex.id] = plan
                topk_golds = None
                if strategy in retrieval_strategies and shots is not None:
                    ranked = rankings[ex.id]
                    topk_golds = [pool_map[c_id].gold.id for c_id, _ in ranked.entries[:shots]]
                selection_rows.append(_selection_row(ex, shots, strategy, plan, topk_golds))
            sel_path = out_dir / SELECTIONS_DIR / f"{cell}.jsonl"
            _write_jsonl(sel_path, selection_rows)
            written.append(sel_path)

            if strategy in AMBIG_STRATEGIES:
                stage_counts: dict[str, int] = {}
                for row in selection_rows:
                    stage_counts[row["stage"]] = stage_counts.get(row["stage"], 0) + 1
                fallback_histogram[cell] = stage_counts

            # Entropy ordering keys demos by their zero-shot entropy.
            entropies = None
            if config.order_policy == "entropy" and strategy in FEWSHOT_STRATEGIES:
                demo_ids = {d_id for plan in plans.values() if plan.outcome for d_id in plan.outcome.demo_set.demo_ids}
                _extend_table(train_table, sorted(demo_ids), pool_map, dataset, backend, cache, config.workers, error_sink)
                entropies = _entropy_map(train_table, demo_ids)

            per_seed: list[SeedMetrics] = []
            record_rows: list[dict] = []
            for seed in config.seeds:
                def run_example(ex: LabeledExample):
                    plan = plans.get(ex.id)
                    if plan is None:
                        return None
                    try:
                        if plan.mode == "direct_label":
                            return ex, plan, None, plan.direct_label, None
                        if plan.mode == "zero_shot":
                            record = zero_test.record(ex.id)
                            return ex, plan, record.scores, record.predicted, None
                        demo_set = plan.outcome.demo_set
                        if demo_set.demos:
                            if config.order_policy == "entropy":
                                ordered = order_demos(demo_set, ORDER_ENTROPY_ASCENDING, entropies=entropies)
                            else:
                                ordered = order_demos(demo_set, ORDER_SHUFFLED, seed=seed)
                            prompt = build_few_shot(dataset.task_definition, ordered, ex.text)
                        else:
                            # Degenerate short-fill with zero demos: fall back
                            # to the zero-shot prompt but keep the provenance.
                            ordered = demo_set
                            prompt = build_zero_shot(dataset.task_definition, ex.text)
                        scores = score_labels(prompt, space, backend, cache)
                        return ex, plan, scores, predict(scores), ordered
                    except IclSelectError as exc:
                        if config.fail_fast:
                            raise
                        errors.append((ex.id, f"{cell} seed {seed}: {exc}"))
                        return None

                results = _map_ordered(run_example, dataset.test, config.workers)
                seed_rows = []
                for result in results:
                    if result is None:
                        continue
                    ex, plan, scores, predicted, ordered = result
                    row = {
                        "seed": seed,
                        "id": ex.id,
                        "gold": ex.gold.id,
                        "predicted": predicted,
                        "correct": predicted == ex.gold.id,
                        "mode": plan.mode,
                        "scores": list(scores.scores) if scores is not None else None,
                        "prompt_hash": scores.prompt_hash if scores is not None else None,
                        "backend": scores.backend_id if scores is not None else None,
                        "demo_ids": list(ordered.demo_ids) if ordered is not None else [],
                        "demo_golds": [d.example.gold.id for d in ordered.demos] if ordered is not None else [],
                        "stage": plan.outcome.satisfied_stage if plan.outcome else None,
                        "short_fill": plan.outcome.short_fill if plan.outcome else None,
                        "order_policy": config.order_policy if plan.mode == "few_shot" else None,
                    }
                    seed_rows.append(row)
                per_seed.append(_seed_metrics_from_rows(seed, seed_rows, selection_rows, space.size, names))
                record_rows.extend(seed_rows)

            records_path = out_dir / RECORDS_DIR / f"{cell}.jsonl"
            _write_jsonl(records_path, record_rows)
            written.append(records_path)

            overall, per_label = _gold_in_ambig_for(selection_rows, zero_test, names)
            reports.append(
                aggregate_report(
                    strategy,
                    shots,
                    per_seed,
                    gold_in_ambig_overall=overall,
                    gold_in_ambig_per_label=per_label,
                    fallback_stage_counts=fallback_histogram.get(cell),
                )
            )

    if mis_requested or len(train_table):
        train_path = out_dir / ZERO_TRAIN_FILE
        train_table.save(train_path)
        written.append(train_path)

    pearson = _pearson_over_reports(reports)
    written.extend(_emit_reports(out_dir, reports, pearson, names))
    t_total = time.monotonic() - clock

    manifest = {
        "artifact_version": __version__,
        "config": config.snapshot(),
        "dataset_name": dataset.name,
        "label_names": list(names),
        "split_sizes": {split: len(examples) for split, examples in dataset.splits.items()},
        "kernel_backend": KERNEL_BACKEND,
        "cache_stats": cache.stats(),
        "fallback_stage_histogram": fallback_histogram,
        "pearson_f1_entropy": pearson,
        "errors": [{"example": ex_id, "error": message} for ex_id, message in errors],
        "started_at_unix": started_at,
        "timings_s": {
            "zero_pass": round(t_zero, 6),
            "retrieval": round(t_retrieval, 6),
            "total": round(t_total, 6),
        },
        "files": {str(path.relative_to(out_dir)): _sha256(path) for path in written},
    }
    manifest_tmp = out_dir / (MANIFEST_FILE + ".tmp")
    manifest_tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest_tmp.replace(out_dir / MANIFEST_FILE)

    return RunResult(out_dir=out_dir, reports=reports, manifest=manifest, pearson_f1_entropy=pearson)


def _load_manifest(run_dir: Path) -> dict:
    path = run_dir / MANIFEST_FILE
    if not path.is_file():
        raise DataError(f"{run_dir} does not contain a run manifest")
    return json.loads(path.read_text(encoding="utf-8"))


def replay(run_dir: str | Path) -> list[EvaluationReport]:
    """Recompute all aggregates from persisted records, without any backend.

    Verifies file checksums first (a tampered record is an error), then
    rebuilds every report; aggregate files that were deleted are regenerated,
    and existing ones must match the manifest checksums.
    """
    run_dir = Path(run_dir)
    manifest = _load_manifest(run_dir)
    names = tuple(manifest["label_names"])
    space_size = len(names)

    for rel_path, expected in sorted(manifest["files"].items()):
        path = run_dir / rel_path
        is_aggregate = rel_path in (REPORT_JSON, REPORT_CSV) or rel_path.startswith(CONFUSION_DIR)
        if not path.is_file():
            if is_aggregate:
                continue  # deleted aggregates are regenerated below
            raise DataError(f"missing run file {rel_path}")
        if _sha256(path) != expected:
            raise DataError(f"checksum mismatch for {rel_path}; records were modified after the run")

    zero_test = ZeroShotTable.load(run_dir / ZERO_TEST_FILE)
    seeds = manifest["config"]["seeds"]

    reports: list[EvaluationReport] = []
    for strategy in manifest["config"]["strategies"]:
        shots_grid = (None,) if strategy in (STRATEGY_FREQ, STRATEGY_ZERO, STRATEGY_STATIC_N) else tuple(
            manifest["config"]["shots"]
        )
        for shots in shots_grid:
            cell = cell_name(strategy, shots)
            selection_rows = _read_jsonl(run_dir / SELECTIONS_DIR / f"{cell}.jsonl")
            record_rows = _read_jsonl(run_dir / RECORDS_DIR / f"{cell}.jsonl")
            per_seed = []
            for seed in seeds:
                seed_rows = [row for row in record_rows if row["seed"] == seed]
                per_seed.append(_seed_metrics_from_rows(seed, seed_rows, selection_rows, space_size, names))
            overall, per_label = _gold_in_ambig_for(selection_rows, zero_test, names)
            stage_counts: dict[str, int] = {}
            if strategy in AMBIG_STRATEGIES:
                for row in selection_rows:
                    stage_counts[row["stage"]] = stage_counts.get(row["stage"], 0) + 1
            reports.append(
                aggregate_report(strategy, shots, per_seed, overall, per_label, stage_counts or None)
            )

    pearson = _pearson_over_reports(reports)
    report_path = run_dir / REPORT_JSON
    regenerated = {
        "reports": [report.to_dict() for report in reports],
        "pearson_f1_entropy": pearson,
    }
    if report_path.is_file():
        stored = json.loads(report_path.read_text(encoding="utf-8"))
        if stored != regenerated:
            raise DataError("replayed aggregates disagree with the stored report.json")
    else:
        _emit_reports(run_dir, reports, pearson, names)
    return reports


def inspect_example(run_dir: str | Path, example_id: str) -> str:
    """Human-readable trace for one test example: prompts, scores, selection."""
    run_dir = Path(run_dir)
    manifest = _load_manifest(run_dir)
    names = manifest["label_names"]
    dataset = load_dataset(manifest["config"]["dataset"])
    examples = {ex.id: ex for split in dataset.splits.values() for ex in split}
    if example_id not in examples:
        raise DataError(f"example {example_id!r} not found in dataset {dataset.name!r}")
    test_example = examples[example_id]

    lines = [f"example {example_id}", f"  text: {test_example.text}", f"  gold: {test_example.gold.name}"]
    zero_test = ZeroShotTable.load(run_dir / ZERO_TEST_FILE)
    if example_id in zero_test:
        ambig = zero_test.ambiguous(example_id)
        record = zero_test.record(example_id)
        lines.append(f"  zero-shot scores: {list(record.scores.scores)}")
        lines.append(f"  zero-shot prediction: {names[record.predicted]} (correct={record.correct})")
        lines.append(f"  ambiguous set: ({names[ambig.first]}, {names[ambig.second]})")

    for strategy in manifest["config"]["strategies"]:
        shots_grid = (None,) if strategy in (STRATEGY_FREQ, STRATEGY_ZERO, STRATEGY_STATIC_N) else tuple(
            manifest["config"]["shots"]
        )
        for shots in shots_grid:
            cell = cell_name(strategy, shots)
            selection_rows = [r for r in _read_jsonl(run_dir / SELECTIONS_DIR / f"{cell}.jsonl") if r["id"] == example_id]
            record_rows = [r for r in _read_jsonl(run_dir / RECORDS_DIR / f"{cell}.jsonl") if r["id"] == example_id]
            if not selection_rows and not record_rows:
                continue
            lines.append(f"[{cell}]")
            if selection_rows:
                sel = selection_rows[0]
                if sel["stage"] is not None:
                    lines.append(f"  selection stage: {sel['stage']} (scanned {sel['scanned']} candidates)")
                    for d_id, d_gold, d_rank, d_prov in zip(
                        sel["demo_ids"], sel["demo_golds"], sel["demo_ranks"], sel["demo_provenance"]
                    ):
                        lines.append(f"    demo {d_id} gold={names[d_gold]} rank={d_rank} via={d_prov}")
            for row in record_rows:
                lines.append(f"  seed {row['seed']}: predicted {names[row['predicted']]} (correct={row['correct']})")
                if row["scores"] is not None:
                    lines.append(f"    scores: {row['scores']}")
                if row["mode"] == "few_shot" and row["demo_ids"]:
                    demo_examples = [examples[d_id] for d_id in row["demo_ids"]]
                    demo_set = demo_set_from_examples(example_id, demo_examples, provenance="replayed")
                    prompt = build_few_shot(dataset.task_definition, demo_set, test_example.text)
                    marker = "" if prompt_digest(prompt) == row["prompt_hash"] else "  [HASH MISMATCH]"
                    lines.append(f"    prompt{marker}:")
                    lines.extend(f"      {line}" for line in prompt.split("\n"))
                elif row["mode"] == "zero_shot":
                    prompt = build_zero_shot(dataset.task_definition, test_example.text)
                    lines.append("    prompt:")
                    lines.extend(f"      {line}" for line in prompt.split("\n"))
    return "\n".join(lines)
