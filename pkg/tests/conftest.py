import numpy as np
import pytest

from acrodis.core_types import ExpansionDictionary, Sample
from acrodis.pair_builder import build_vocab
from acrodis.synthetic import make_toy_corpus


@pytest.fixture
def svm_dictionary():
    return ExpansionDictionary(
        entries={"SVM": ("support vector machine", "state vector machine")}
    )


@pytest.fixture
def svm_sample():
    return Sample(
        id="svm-1",
        tokens=("we", "train", "an", "SVM", "on", "this", "data"),
        acronym_index=3,
        gold_expansion="support vector machine",
    )


@pytest.fixture(scope="session")
def tiny_corpus():
    """Small separable corpus shared by model-level tests."""
    samples, dictionary = make_toy_corpus(
        n_acronyms=3, expansions_range=(2, 3), n_samples=48, seed=5,
        sentence_tokens=(6, 9),
    )
    tokenizer = build_vocab(samples, dictionary)
    return samples, dictionary, tokenizer
