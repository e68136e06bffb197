import json
from collections import Counter

import pytest

from iclselect.corpus import (
    LabelSpace,
    label_frequencies,
    load_dataset,
    majority_label,
    save_dataset,
)
from iclselect.errors import DataError

from conftest import make_dataset


def write_dataset_dir(tmp_path, manifest: dict, splits: dict[str, list[dict]]):
    (tmp_path / "manifest").write_text(json.dumps(manifest), encoding="utf-8")
    for split, rows in splits.items():
        lines = [json.dumps(row) for row in rows]
        (tmp_path / f"{split}.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return tmp_path


BASE_MANIFEST = {
    "name": "tiny",
    "labels": ["Pos", "Neg"],
    "task_definition": "Say if the text is positive or negative.",
    "splits": {"train": 3},
}


def test_load_three_line_train_split(tmp_path):
    rows = [
        {"id": "a", "text": "great", "label": "Pos"},
        {"id": "b", "text": "awful", "label": "Neg"},
        {"id": "c", "text": "fine", "label": "Pos"},
    ]
    dataset = load_dataset(write_dataset_dir(tmp_path, BASE_MANIFEST, {"train": rows}))
    assert dataset.label_space.size == 2
    assert len(dataset.train) == 3
    assert dataset.train[0].gold.name == "Pos"


def test_unknown_label_rejected(tmp_path):
    rows = [{"id": "a", "text": "meh", "label": "Joy"}]
    manifest = dict(BASE_MANIFEST, splits={"train": 1})
    with pytest.raises(DataError, match="unknown label"):
        load_dataset(write_dataset_dir(tmp_path, manifest, {"train": rows}))


def test_declared_split_sizes_must_match(tmp_path):
    # Mirrors a realistically sized split table (8544/1101/2210).
    sizes = {"train": 8544, "dev": 1101, "test": 2210}
    manifest = {
        "name": "sst-shape",
        "labels": ["VNeg", "Neg", "Neu", "Pos", "VPos"],
        "task_definition": "Classify movie review sentiment.",
        "splits": sizes,
    }
    splits = {
        split: [{"id": f"{split}{i}", "text": f"text {i}", "label": "Neu"} for i in range(count)]
        for split, count in sizes.items()
    }
    dataset = load_dataset(write_dataset_dir(tmp_path, manifest, splits))
    assert {s: len(v) for s, v in dataset.splits.items()} == sizes

    bad = dict(manifest, splits=dict(sizes, train=8543))
    (tmp_path / "manifest").write_text(json.dumps(bad), encoding="utf-8")
    with pytest.raises(DataError, match="declares 8543"):
        load_dataset(tmp_path)


def test_missing_split_file(tmp_path):
    manifest = dict(BASE_MANIFEST, splits={"train": 1, "dev": 1})
    rows = [{"id": "a", "text": "x", "label": "Pos"}]
    write_dataset_dir(tmp_path, manifest, {"train": rows})
    with pytest.raises(DataError, match="missing split file"):
        load_dataset(tmp_path)


def test_duplicate_id_rejected(tmp_path):
    rows = [
        {"id": "a", "text": "x", "label": "Pos"},
        {"id": "a", "text": "y", "label": "Neg"},
    ]
    manifest = dict(BASE_MANIFEST, splits={"train": 2})
    with pytest.raises(DataError, match="duplicate example id"):
        load_dataset(write_dataset_dir(tmp_path, manifest, {"train": rows}))


def test_empty_text_rejected(tmp_path):
    rows = [{"id": "a", "text": "", "label": "Pos"}]
    manifest = dict(BASE_MANIFEST, splits={"train": 1})
    with pytest.raises(DataError, match="empty text"):
        load_dataset(write_dataset_dir(tmp_path, manifest, {"train": rows}))


def test_multi_label_record_rejected(tmp_path):
    rows = [{"id": "a", "text": "x", "label": ["Pos", "Neg"]}]
    manifest = dict(BASE_MANIFEST, splits={"train": 1})
    with pytest.raises(DataError, match="single name"):
        load_dataset(write_dataset_dir(tmp_path, manifest, {"train": rows}))


def test_label_space_validation():
    with pytest.raises(DataError):
        LabelSpace.from_names(["OnlyOne"])
    with pytest.raises(DataError):
        LabelSpace.from_names(["Dup", "Dup"])


def test_roundtrip_preserves_record_contents(tmp_path):
    dataset = make_dataset(n_labels=3, n_train=7, n_test=2)
    save_dataset(dataset, tmp_path / "ds")
    reloaded = load_dataset(tmp_path / "ds")
    assert reloaded == dataset
    # The written records carry exactly the three interface fields.
    first = json.loads((tmp_path / "ds" / "train.jsonl").read_text().splitlines()[0])
    assert set(first) == {"id", "text", "label"}


def test_loading_preserves_file_order(tmp_path):
    rows = [{"id": f"r{i}", "text": f"t{i}", "label": "Pos" if i % 2 else "Neg"} for i in range(20)]
    manifest = dict(BASE_MANIFEST, splits={"train": 20})
    dataset = load_dataset(write_dataset_dir(tmp_path, manifest, {"train": rows}))
    assert [ex.id for ex in dataset.train] == [row["id"] for row in rows]


def test_label_frequencies_counts_and_majority():
    dataset = make_dataset(n_labels=2, n_train=3)  # golds cycle L0, L1, L0
    counts = label_frequencies(dataset.train, dataset.label_space)
    assert counts == [2, 1]
    assert majority_label(counts) == 0


def test_majority_tie_breaks_to_lowest_id():
    assert majority_label([5, 5, 1]) == 0
    assert majority_label([1, 5, 5]) == 1


def test_label_frequencies_empty_split_errors():
    dataset = make_dataset()
    with pytest.raises(DataError):
        label_frequencies([], dataset.label_space)


def test_label_frequencies_matches_tally_oracle(rng):
    space = LabelSpace.from_names([f"C{i}" for i in range(5)])
    golds = rng.integers(0, 5, size=1000)
    dataset_examples = [
        type("E", (), {"gold": space.labels[g]})() for g in golds
    ]
    counts = label_frequencies(dataset_examples, space)
    tally = Counter(int(g) for g in golds)
    assert counts == [tally.get(i, 0) for i in range(5)]
    assert sum(counts) == 1000
