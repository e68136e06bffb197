import numpy as np
import pytest

from iclselect.corpus import Dataset, LabeledExample, LabelSpace
from iclselect.prompting import parse_prompt


def make_space(n: int) -> LabelSpace:
    return LabelSpace.from_names([f"L{i}" for i in range(n)])


def make_dataset(n_labels=3, n_train=12, n_test=4, name="toy", defn="Classify the input.") -> Dataset:
    space = make_space(n_labels)
    train = tuple(
        LabeledExample(id=f"tr{i:04d}", text=f"train text {i}", gold=space.labels[i % n_labels])
        for i in range(n_train)
    )
    test = tuple(
        LabeledExample(id=f"te{i:04d}", text=f"test text {i}", gold=space.labels[i % n_labels])
        for i in range(n_test)
    )
    return Dataset(name=name, label_space=space, splits={"train": train, "test": test}, task_definition=defn)


class OracleBackend:
    """Test backend scoring by a fixed test-text -> scores mapping."""

    def __init__(self, by_text: dict[str, list[float]], identifier: str = "oracle"):
        self.by_text = dict(by_text)
        self.identifier = identifier
        self.calls = 0

    def score(self, prompt: str, label_names) -> list[float]:
        self.calls += 1
        parsed = parse_prompt(prompt)
        return list(self.by_text[parsed.test_text])


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240801))
