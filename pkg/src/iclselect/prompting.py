"""Prompt construction and demonstration ordering.

Prompt bytes feed the score cache key, so scaffolds are verbatim constants,
newlines are LF, and no trailing newline is emitted. Canonical layouts:

zero-shot::

    {defn}\n\nThus given the following input:\ninput: {test}\nanswer:

few-shot::

    {defn}\n\nSome examples are:\n
    then per demo:  input: {x}\nanswer: {y}\n\n
    then:           Thus given the following input:\ninput: {test}\nanswer:

All functions here are pure.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from iclselect.corpus import LabeledExample
from iclselect.errors import DataError

FEWSHOT_HEADER = "Some examples are:\n"
FINAL_SCAFFOLD = "Thus given the following input:\ninput: "
ANSWER_SUFFIX = "\nanswer:"

ORDER_AS_SELECTED = "as_selected"
ORDER_SHUFFLED = "shuffled"
ORDER_ENTROPY_ASCENDING = "entropy_ascending"


@dataclass(frozen=True)
class PromptTemplate:
    """A task definition bound to either the zero-shot or few-shot scaffold."""

    task_definition: str
    zero_shot: bool = False

    def __post_init__(self):
        if not self.task_definition:
            raise DataError("task definition must be non-empty")

    def render(self, test_text: str, demos: "DemonstrationSet | None" = None) -> str:
        if self.zero_shot:
            if demos is not None and len(demos):
                raise DataError("zero-shot template cannot take demonstrations")
            return build_zero_shot(self.task_definition, test_text)
        if demos is None:
            raise DataError("few-shot template needs a demonstration set")
        return build_few_shot(self.task_definition, demos, test_text)


@dataclass(frozen=True)
class Demonstration:
    """One selected demonstration plus its selection provenance."""

    example: LabeledExample
    provenance: str
    rank: int  # 1-based position in the retrieval ranking; 0 for static demos


@dataclass(frozen=True)
class DemonstrationSet:
    test_example_id: str
    demos: tuple[Demonstration, ...]
    order_policy: str = ORDER_AS_SELECTED
    seed: int | None = None

    def __post_init__(self):
        ids = [demo.example.id for demo in self.demos]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate demonstration ids for test example {self.test_example_id!r}: {ids}")

    def __len__(self) -> int:
        return len(self.demos)

    @property
    def demo_ids(self) -> tuple[str, ...]:
        return tuple(demo.example.id for demo in self.demos)


def build_zero_shot(defn: str, test_text: str) -> str:
    if not defn or not test_text:
        raise DataError("task definition and test text must be non-empty")
    return f"{defn}\n\n{FINAL_SCAFFOLD}{test_text}{ANSWER_SUFFIX}"


def build_few_shot(defn: str, demos: DemonstrationSet, test_text: str) -> str:
    if not demos.demos:
        raise DataError("few-shot prompt needs at least one demonstration; use build_zero_shot instead")
    if not defn or not test_text:
        raise DataError("task definition and test text must be non-empty")
    parts = [defn, "\n\n", FEWSHOT_HEADER]
    for demo in demos.demos:
        parts.append(f"input: {demo.example.text}\nanswer: {demo.example.gold.name}\n\n")
    parts.append(f"{FINAL_SCAFFOLD}{test_text}{ANSWER_SUFFIX}")
    return "".join(parts)


@dataclass(frozen=True)
class ParsedPrompt:
    """Structural inverse of the builders, for backends that introspect prompts."""

    task_definition: str
    demos: tuple[tuple[str, str], ...]  # (text, label name) pairs
    test_text: str


def parse_prompt(prompt: str) -> ParsedPrompt:
    """Split a prompt built by this module back into its parts.

    Assumes demonstration texts contain no blank lines, which holds for all
    prompts this package generates from single-line fixture texts.
    """
    marker = f"\n\n{FINAL_SCAFFOLD}"
    head, sep, tail = prompt.rpartition(marker)
    if not sep or not tail.endswith(ANSWER_SUFFIX):
        raise DataError("prompt does not follow the canonical scaffold")
    test_text = tail[: -len(ANSWER_SUFFIX)]
    defn, sep, demo_blob = head.partition(f"\n\n{FEWSHOT_HEADER}")
    if not sep:
        return ParsedPrompt(task_definition=head, demos=(), test_text=test_text)
    demos = []
    for entry in demo_blob.split("\n\n"):
        if not entry.startswith("input: "):
            raise DataError(f"malformed demonstration block: {entry!r}")
        body = entry[len("input: ") :]
        text, sep, label = body.rpartition("\nanswer: ")
        if not sep:
            raise DataError(f"malformed demonstration block: {entry!r}")
        demos.append((text, label))
    return ParsedPrompt(task_definition=defn, demos=tuple(demos), test_text=test_text)


def order_demos(
    demos: DemonstrationSet,
    policy: str,
    seed: int | None = None,
    entropies: Mapping[str, float] | None = None,
) -> DemonstrationSet:
    """Reorder a demonstration set under a declared policy.

    ``shuffled`` applies a seeded Fisher-Yates permutation; ``entropy_ascending``
    sorts by the given per-demo entropy, ties broken by retrieval rank.
    """
    if policy == ORDER_SHUFFLED:
        if seed is None:
            raise DataError("shuffled ordering requires a seed")
        ordered = list(demos.demos)
        random.Random(seed).shuffle(ordered)
        return replace(demos, demos=tuple(ordered), order_policy=ORDER_SHUFFLED, seed=seed)
    if policy == ORDER_ENTROPY_ASCENDING:
        if entropies is None:
            raise DataError("entropy_ascending ordering requires per-demo entropies")
        missing = [d.example.id for d in demos.demos if d.example.id not in entropies]
        if missing:
            raise DataError(f"missing entropies for demonstrations: {missing}")
        ordered = sorted(demos.demos, key=lambda d: (entropies[d.example.id], d.rank))
        return replace(demos, demos=tuple(ordered), order_policy=ORDER_ENTROPY_ASCENDING, seed=None)
    raise DataError(f"unknown ordering policy {policy!r}")


def demo_set_from_examples(
    test_example_id: str,
    examples: Sequence[LabeledExample],
    provenance: str,
    ranks: Sequence[int] | None = None,
) -> DemonstrationSet:
    """Convenience constructor used by selection strategies."""
    if ranks is None:
        ranks = [0] * len(examples)
    demos = tuple(
        Demonstration(example=ex, provenance=provenance, rank=rank) for ex, rank in zip(examples, ranks)
    )
    return DemonstrationSet(test_example_id=test_example_id, demos=demos)
