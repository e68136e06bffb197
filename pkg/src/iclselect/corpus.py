"""Labeled datasets, label spaces, and task definitions.

A dataset lives in a directory containing a JSON ``manifest`` file plus one
UTF-8 JSONL record file per split::

    manifest        {"name": ..., "labels": [...], "task_definition": ...,
                     "splits": {"train": 3398, "dev": 486, "test": 970}}
    train.jsonl     {"id": "...", "text": "...", "label": "<label name>"}
    dev.jsonl / test.jsonl   same record shape

Label ids are the 0-based positions in the manifest's ``labels`` list; that
order is canonical everywhere (argmax tie-breaks, confusion-matrix axes).
Datasets are immutable after load and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from iclselect.errors import DataError

MANIFEST_NAME = "manifest"


@dataclass(frozen=True)
class Label:
    """One output label: a stable integer id and a display name."""

    id: int
    name: str


@dataclass(frozen=True)
class LabelSpace:
    """The ordered set of output labels for a task."""

    labels: tuple[Label, ...]
    _by_name: dict[str, Label] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.labels) < 2:
            raise DataError(f"label space needs at least 2 labels, got {len(self.labels)}")
        for pos, label in enumerate(self.labels):
            if label.id != pos:
                raise DataError(f"label ids must be 0..N-1 in order; found id {label.id} at position {pos}")
            if not label.name:
                raise DataError("label names must be non-empty")
        names = [label.name for label in self.labels]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate label names: {names}")
        object.__setattr__(self, "_by_name", {label.name: label for label in self.labels})

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "LabelSpace":
        return cls(tuple(Label(i, name) for i, name in enumerate(names)))

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(label.name for label in self.labels)

    def by_name(self, name: str) -> Label:
        try:
            return self._by_name[name]
        except KeyError:
            raise DataError(f"unknown label name {name!r}; expected one of {list(self.names)}") from None

    def fingerprint(self) -> str:
        """Stable digest of the ordered label names, used in cache keys."""
        import hashlib

        joined = "\x1f".join(self.names).encode("utf-8")
        return hashlib.blake2b(joined, digest_size=8).hexdigest()


@dataclass(frozen=True)
class LabeledExample:
    """One (text, gold label) record with a split-unique id."""

    id: str
    text: str
    gold: Label


@dataclass(frozen=True)
class Dataset:
    name: str
    label_space: LabelSpace
    splits: dict[str, tuple[LabeledExample, ...]]
    task_definition: str

    @property
    def train(self) -> tuple[LabeledExample, ...]:
        return self.splits.get("train", ())

    @property
    def dev(self) -> tuple[LabeledExample, ...]:
        return self.splits.get("dev", ())

    @property
    def test(self) -> tuple[LabeledExample, ...]:
        return self.splits.get("test", ())

    def all_ids(self) -> set[str]:
        return {ex.id for split in self.splits.values() for ex in split}

    def example(self, split: str, example_id: str) -> LabeledExample:
        for ex in self.splits[split]:
            if ex.id == example_id:
                return ex
        raise DataError(f"example {example_id!r} not found in split {split!r}")


def _read_split(path: Path, split: str, space: LabelSpace) -> tuple[LabeledExample, ...]:
    if not path.is_file():
        raise DataError(f"missing split file {path}")
    examples: list[LabeledExample] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "text", "label"):
                if key not in record:
                    raise DataError(f"{path}:{lineno}: record missing field {key!r}")
            if not isinstance(record["label"], str):
                # Multi-label source records are rejected outright; converting
                # them is a preprocessing concern, not the loader's.
                raise DataError(f"{path}:{lineno}: label must be a single name, got {record['label']!r}")
            ex_id = str(record["id"])
            if ex_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate example id {ex_id!r} in split {split!r}")
            seen.add(ex_id)
            text = record["text"]
            if not isinstance(text, str) or not text:
                raise DataError(f"{path}:{lineno}: empty text for example {ex_id!r}")
            examples.append(LabeledExample(id=ex_id, text=text, gold=space.by_name(record["label"])))
    return tuple(examples)


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate a dataset directory.

    Raises DataError on a missing manifest or split file, duplicate ids,
    unknown label names, empty texts, or split sizes that disagree with the
    manifest.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(f"missing manifest file {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON: {exc}") from exc
    for key in ("name", "labels", "task_definition", "splits"):
        if key not in manifest:
            raise DataError(f"{manifest_path}: manifest missing field {key!r}")
    space = LabelSpace.from_names(manifest["labels"])
    task_definition = manifest["task_definition"]
    if not isinstance(task_definition, str) or not task_definition:
        raise DataError(f"{manifest_path}: task_definition must be non-empty text")

    splits: dict[str, tuple[LabeledExample, ...]] = {}
    for split, declared in manifest["splits"].items():
        examples = _read_split(root / f"{split}.jsonl", split, space)
        if len(examples) != int(declared):
            raise DataError(
                f"split {split!r} declares {declared} examples in the manifest but {len(examples)} were loaded"
            )
        splits[split] = examples
    return Dataset(
        name=str(manifest["name"]),
        label_space=space,
        splits=splits,
        task_definition=task_definition,
    )


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset directory in the load_dataset format."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": dataset.name,
        "labels": list(dataset.label_space.names),
        "task_definition": dataset.task_definition,
        "splits": {split: len(examples) for split, examples in dataset.splits.items()},
    }
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for split, examples in dataset.splits.items():
        with (root / f"{split}.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
            for ex in examples:
                fh.write(json.dumps({"id": ex.id, "text": ex.text, "label": ex.gold.name}, ensure_ascii=False))
                fh.write("\n")


def label_frequencies(split: Iterable[LabeledExample], space: LabelSpace) -> list[int]:
    """Gold-label counts for a split, indexed by label id."""
    counts = [0] * space.size
    total = 0
    for ex in split:
        counts[ex.gold.id] += 1
        total += 1
    if total == 0:
        raise DataError("cannot compute label frequencies of an empty split")
    return counts


def majority_label(counts: Sequence[int]) -> int:
    """Id of the most frequent label; ties break toward the lowest id."""
    best = 0
    for i in range(1, len(counts)):
        if counts[i] > counts[best]:
            best = i
    return best
