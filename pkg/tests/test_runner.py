import json
import shutil

import pytest

from iclselect.ambiguity import ZeroShotTable
from iclselect.config import apply_overrides, load_config
from iclselect.errors import BackendError, ConfigError, DataError
from iclselect.metrics import entropy_bits
from iclselect.prompting import parse_prompt
from iclselect.runner import (
    MANIFEST_FILE,
    RECORDS_DIR,
    REPORT_CSV,
    REPORT_JSON,
    ZERO_TRAIN_FILE,
    inspect_example,
    make_backend,
    replay,
    run_experiment,
)
from iclselect.scoring import normalize

from world import (
    build_confusable_dataset,
    build_separable_dataset,
    confusable_config,
    write_config,
    write_world,
)

ALL_CELLS = ["freq", "zero", "static_n", "retr_2", "ambig_gold_2", "ambig_gold_mis_2", "ambig_gold_mis_pred_2"]


@pytest.fixture(scope="module")
def confusable_world(tmp_path_factory):
    root = tmp_path_factory.mktemp("confusable")
    dataset = build_confusable_dataset(n_train=120, n_test=20)
    dataset_dir, emb_path = write_world(root, dataset, 32)
    return root, dataset, dataset_dir, emb_path


@pytest.fixture(scope="module")
def finished_run(confusable_world):
    root, dataset, dataset_dir, emb_path = confusable_world
    config = load_config(confusable_config(root, dataset_dir, emb_path, out="main_run"))
    result = run_experiment(config)
    return config, result


def run_files(out_dir):
    return {
        p.relative_to(out_dir).as_posix(): p.read_bytes()
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and p.name != MANIFEST_FILE
    }


def test_reports_cover_the_whole_strategy_grid(finished_run):
    _config, result = finished_run
    cells = [f"{r.strategy}_{r.n_shots}" if r.n_shots else r.strategy for r in result.reports]
    assert cells == ALL_CELLS
    for report in result.reports:
        assert len(report.per_seed) == 2
        assert 0.0 <= report.mean["f1_macro"] <= 1.0
    assert result.pearson_f1_entropy is not None


def test_manifest_checksums_and_histogram(finished_run):
    config, result = finished_run
    manifest = json.loads((config.out_dir / MANIFEST_FILE).read_text())
    assert manifest["artifact_version"]
    assert manifest["config"]["strategies"][0] == "freq"
    # every checksummed file verifies
    import hashlib

    for rel, digest in manifest["files"].items():
        blob = (config.out_dir / rel).read_bytes()
        assert hashlib.sha256(blob).hexdigest() == digest
    # the fallback histogram covers (test size x ambig cells run)
    histogram = manifest["fallback_stage_histogram"]
    total = sum(sum(counts.values()) for counts in histogram.values())
    assert total == 20 * 3
    assert manifest["cache_stats"]["entries"] > 0
    assert manifest["errors"] == []


def test_gold_share_of_ambig_gold_exceeds_retr(finished_run):
    _config, result = finished_run
    by_cell = {(r.strategy, r.n_shots): r for r in result.reports}
    ambig = by_cell[("ambig_gold", 2)]
    retr = by_cell[("retr", 2)]
    assert ambig.gold_in_ambig_overall == 1.0  # guaranteed by construction
    assert ambig.mean["gold_share_selected"] > retr.mean["gold_share_selected"]
    # every ambig_gold demo carries a gold label inside the ambiguous pair
    rows = [
        json.loads(line)
        for line in (result.out_dir / "selections" / "ambig_gold_2.jsonl").read_text().splitlines()
    ]
    zero_test = ZeroShotTable.load(result.out_dir / "zero_test.jsonl")
    for row in rows:
        if row["stage"] == "gold":
            pair = zero_test.ambiguous(row["id"]).pair
            assert all(g in pair for g in row["demo_golds"])


def test_rerun_is_byte_identical(confusable_world):
    root, dataset, dataset_dir, emb_path = confusable_world
    config_a = load_config(confusable_config(root, dataset_dir, emb_path, out="rerun_a", name="ca.toml"))
    config_b = load_config(confusable_config(root, dataset_dir, emb_path, out="rerun_b", name="cb.toml"))
    result_a = run_experiment(config_a)
    result_b = run_experiment(config_b)
    files_a = run_files(result_a.out_dir)
    files_b = run_files(result_b.out_dir)
    assert files_a.keys() == files_b.keys()
    for rel in files_a:
        assert files_a[rel] == files_b[rel], f"{rel} differs between reruns"


def test_warm_cache_run_matches_cold(confusable_world, tmp_path):
    root, dataset, dataset_dir, emb_path = confusable_world
    cache_path = str(tmp_path / "shared_cache.jsonl")
    cold_cfg = load_config(
        confusable_config(root, dataset_dir, emb_path, out="cold_run", name="cc.toml", cache=cache_path)
    )
    cold = run_experiment(cold_cfg)
    warm_cfg = load_config(
        confusable_config(root, dataset_dir, emb_path, out="warm_run", name="cw.toml", cache=cache_path)
    )
    warm = run_experiment(warm_cfg)
    assert [r.to_dict() for r in cold.reports] == [r.to_dict() for r in warm.reports]
    warm_manifest = json.loads((warm.out_dir / MANIFEST_FILE).read_text())
    assert warm_manifest["cache_stats"]["misses"] == 0


def test_zero_strategy_is_seed_invariant(finished_run):
    _config, result = finished_run
    zero_report = next(r for r in result.reports if r.strategy == "zero")
    dicts = [m.to_dict() for m in zero_report.per_seed]
    for d in dicts:
        d.pop("seed")
    assert dicts[0] == dicts[1]


def test_replay_matches_and_regenerates(finished_run, tmp_path):
    config, result = finished_run
    copy_dir = tmp_path / "replayable"
    shutil.copytree(config.out_dir, copy_dir)
    replayed = replay(copy_dir)
    assert [r.to_dict() for r in replayed] == [r.to_dict() for r in result.reports]
    # delete only aggregate files; replay regenerates them identically
    original_report = (copy_dir / REPORT_JSON).read_bytes()
    original_csv = (copy_dir / REPORT_CSV).read_bytes()
    (copy_dir / REPORT_JSON).unlink()
    (copy_dir / REPORT_CSV).unlink()
    shutil.rmtree(copy_dir / "confusion")
    replay(copy_dir)
    assert (copy_dir / REPORT_JSON).read_bytes() == original_report
    assert (copy_dir / REPORT_CSV).read_bytes() == original_csv


def test_replay_detects_tampering(finished_run, tmp_path):
    config, _result = finished_run
    tampered = tmp_path / "tampered"
    shutil.copytree(config.out_dir, tampered)
    victim = tampered / RECORDS_DIR / "retr_2.jsonl"
    rows = victim.read_text().splitlines()
    row = json.loads(rows[0])
    row["correct"] = not row["correct"]
    rows[0] = json.dumps(row, sort_keys=True)
    victim.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataError, match="checksum mismatch"):
        replay(tampered)


def test_replay_requires_record_files(finished_run, tmp_path):
    config, _result = finished_run
    broken = tmp_path / "broken"
    shutil.copytree(config.out_dir, broken)
    (broken / RECORDS_DIR / "zero.jsonl").unlink()
    with pytest.raises(DataError, match="missing run file"):
        replay(broken)


def test_inspect_prints_prompt_scores_and_trace(finished_run):
    config, result = finished_run
    example_id = json.loads((result.out_dir / "selections" / "retr_2.jsonl").read_text().splitlines()[0])["id"]
    text = inspect_example(config.out_dir, example_id)
    assert f"example {example_id}" in text
    assert "ambiguous set:" in text
    assert "Thus given the following input:" in text
    assert "selection stage:" in text
    assert "HASH MISMATCH" not in text
    with pytest.raises(DataError, match="not found"):
        inspect_example(config.out_dir, "no-such-example")


def test_separable_world_is_perfect(tmp_path):
    dataset = build_separable_dataset(n_labels=3, n_train=30, n_test=12)
    dataset_dir, emb_path = write_world(tmp_path, dataset, 32)
    config_path = write_config(
        tmp_path,
        dataset=str(dataset_dir),
        embeddings=str(emb_path),
        out=str(tmp_path / "run"),
        backend="synthetic",
        synthetic_dim=32,
        synthetic_alpha=0.0,
        synthetic_sigma=0.0,
        synthetic_weights_seed=5,
        strategies=["zero", "static_n", "retr", "ambig_gold", "ambig_gold_mis", "ambig_gold_mis_pred"],
        shots=[2],
        seeds=[0, 1, 2],
    )
    result = run_experiment(load_config(config_path))
    for report in result.reports:
        assert report.mean["f1_macro"] == 1.0, report.strategy
        assert report.mean["accuracy"] == 1.0


def test_entropy_ordering_policy(confusable_world):
    root, dataset, dataset_dir, emb_path = confusable_world
    config = load_config(
        confusable_config(
            root,
            dataset_dir,
            emb_path,
            out="entropy_run",
            name="ce.toml",
            order="entropy",
            strategies=["retr", "ambig_gold_mis"],
            seeds=[0, 1],
        )
    )
    result = run_experiment(config)
    for report in result.reports:
        seed_dicts = [m.to_dict() for m in report.per_seed]
        for d in seed_dicts:
            d.pop("seed")
        assert seed_dicts[0] == seed_dicts[1]  # entropy ordering has no randomness
    # demo order in the records is ascending zero-shot entropy
    train_table = ZeroShotTable.load(result.out_dir / ZERO_TRAIN_FILE)
    rows = [
        json.loads(line)
        for line in (result.out_dir / RECORDS_DIR / "retr_2.jsonl").read_text().splitlines()
    ]
    checked = 0
    for row in rows:
        if len(row["demo_ids"]) < 2:
            continue
        values = [entropy_bits(normalize(train_table.record(d).scores)) for d in row["demo_ids"]]
        assert values == sorted(values)
        checked += 1
    assert checked > 0


def test_error_recording_and_fail_fast(confusable_world, monkeypatch):
    root, dataset, dataset_dir, emb_path = confusable_world
    poison_text = dataset.test[3].text

    class PoisonedBackend:
        def __init__(self, inner):
            self.inner = inner
            self.identifier = inner.identifier + "-poisoned"

        def score(self, prompt, label_names):
            if parse_prompt(prompt).test_text == poison_text:
                raise BackendError("injected failure")
            return self.inner.score(prompt, label_names)

    import iclselect.runner as runner_mod

    real_make = make_backend
    monkeypatch.setattr(runner_mod, "make_backend", lambda cfg, space: PoisonedBackend(real_make(cfg, space)))

    config = load_config(
        confusable_config(
            root, dataset_dir, emb_path, out="poisoned_run", name="cp.toml", strategies=["zero", "retr"], seeds=[0]
        )
    )
    result = run_experiment(config)
    manifest = json.loads((result.out_dir / MANIFEST_FILE).read_text())
    assert any(e["example"] == dataset.test[3].id for e in manifest["errors"])
    zero_report = next(r for r in result.reports if r.strategy == "zero")
    assert zero_report.per_seed[0].confusion is not None

    fail_config = load_config(
        confusable_config(
            root,
            dataset_dir,
            emb_path,
            out="failfast_run",
            name="cf.toml",
            strategies=["zero"],
            seeds=[0],
            fail_fast=True,
        )
    )
    with pytest.raises(BackendError, match=dataset.test[3].id):
        run_experiment(fail_config)


def test_resumes_from_cache_without_backend_calls(confusable_world, tmp_path, monkeypatch):
    root, dataset, dataset_dir, emb_path = confusable_world
    calls = {"n": 0}

    class CountingWrapper:
        def __init__(self, inner):
            self.inner = inner
            self.identifier = inner.identifier

        def score(self, prompt, label_names):
            calls["n"] += 1
            return self.inner.score(prompt, label_names)

    import iclselect.runner as runner_mod

    real_make = make_backend
    monkeypatch.setattr(runner_mod, "make_backend", lambda cfg, space: CountingWrapper(real_make(cfg, space)))

    cache_path = str(tmp_path / "resume_cache.jsonl")
    config1 = load_config(
        confusable_config(
            root, dataset_dir, emb_path, out="resume_a", name="cr1.toml", cache=cache_path, strategies=["zero", "retr"], seeds=[0]
        )
    )
    run_experiment(config1)
    assert calls["n"] > 0
    first_calls = calls["n"]
    config2 = load_config(
        confusable_config(
            root, dataset_dir, emb_path, out="resume_b", name="cr2.toml", cache=cache_path, strategies=["zero", "retr"], seeds=[0]
        )
    )
    run_experiment(config2)
    assert calls["n"] == first_calls  # fully served from the warm cache


def test_config_validation_and_overrides(tmp_path):
    config_path = write_config(
        tmp_path,
        dataset="ds",
        embeddings="v.emb",
        out="run",
        strategies=["zero"],
    )
    config = load_config(config_path)
    assert config.seeds == (0, 1, 2)
    overridden = apply_overrides(config, strategies=["retr"], shots=[8], seeds=[5], budget=100, order="entropy")
    assert overridden.strategies == ("retr",)
    assert overridden.n_shots == (8,)
    assert overridden.candidate_budget == 100
    assert overridden.order_policy == "entropy"

    with pytest.raises(ConfigError, match="unknown config keys"):
        load_config(write_config(tmp_path, name="bad1.toml", dataset="d", embeddings="e", out="o", strategies=["zero"], bogus=1))
    with pytest.raises(ConfigError, match="missing required key"):
        load_config(write_config(tmp_path, name="bad2.toml", dataset="d", embeddings="e", out="o"))
    with pytest.raises(ConfigError, match="unknown strategy"):
        load_config(write_config(tmp_path, name="bad3.toml", dataset="d", embeddings="e", out="o", strategies=["nope"]))
    with pytest.raises(ConfigError, match="seed"):
        load_config(write_config(tmp_path, name="bad4.toml", dataset="d", embeddings="e", out="o", strategies=["zero"], seeds=[]))
    with pytest.raises(ConfigError, match="does not exist"):
        run_experiment(config)  # dataset dir was never created


def test_workers_produce_identical_reports(confusable_world):
    root, dataset, dataset_dir, emb_path = confusable_world
    serial = run_experiment(
        load_config(
            confusable_config(
                root, dataset_dir, emb_path, out="serial_run", name="cs.toml", strategies=["zero", "ambig_gold"], seeds=[0]
            )
        )
    )
    threaded = run_experiment(
        load_config(
            confusable_config(
                root, dataset_dir, emb_path, out="threaded_run", name="ct.toml", strategies=["zero", "ambig_gold"], seeds=[0], workers=4
            )
        )
    )
    assert [r.to_dict() for r in serial.reports] == [r.to_dict() for r in threaded.reports]
