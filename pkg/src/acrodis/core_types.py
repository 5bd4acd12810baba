"""Shared data model for the disambiguation pipeline.

All types here are immutable after construction and safe to share across
threads.  Behavior is limited to construction-time validation and a few
convenience accessors; file I/O lives in :mod:`acrodis.data_ingest`.

Expansion strings are compared case-insensitively after whitespace
normalization (see :func:`normalize_expansion`); the original surface forms
are preserved everywhere for display.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional


def normalize_expansion(text: str) -> str:
    """Canonical form used whenever two expansion strings are compared."""
    return " ".join(text.split()).lower()


@dataclass(frozen=True)
class Sample:
    """One dataset record: a tokenized sentence with one marked acronym.

    Attributes:
        id: Unique record identifier.
        tokens: Surface tokens of the sentence (pre-tokenized data).
        acronym_index: Position of the ambiguous acronym in ``tokens``.
        gold_expansion: Correct expansion, or ``None`` for unlabeled data.
    """

    id: str
    tokens: tuple[str, ...]
    acronym_index: int
    gold_expansion: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def acronym(self) -> str:
        return self.tokens[self.acronym_index]

    @property
    def sentence(self) -> str:
        return " ".join(self.tokens)


class DictionaryError(ValueError):
    """Raised for malformed expansion dictionaries."""


@dataclass(frozen=True)
class ExpansionDictionary:
    """Mapping from acronym to its ordered candidate expansions.

    Candidate order is the order of first appearance in the source and is
    the tie-break authority everywhere downstream, so it must be stable.
    """

    entries: dict[str, tuple[str, ...]]

    def __post_init__(self):
        frozen = {}
        for acronym, expansions in self.entries.items():
            expansions = tuple(expansions)
            if not expansions:
                raise DictionaryError(f"acronym {acronym!r} has an empty expansion list")
            seen = set()
            for exp in expansions:
                norm = normalize_expansion(exp)
                if norm in seen:
                    raise DictionaryError(f"acronym {acronym!r} lists expansion {exp!r} more than once")
                seen.add(norm)
            frozen[acronym] = expansions
        object.__setattr__(self, "entries", frozen)

    def __contains__(self, acronym: str) -> bool:
        return acronym in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def acronyms(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def candidates(self, acronym: str) -> tuple[str, ...]:
        return self.entries[acronym]

    def contains_expansion(self, acronym: str, expansion: str) -> bool:
        """Membership under the normalized comparison rule."""
        if acronym not in self.entries:
            return False
        norm = normalize_expansion(expansion)
        return any(normalize_expansion(e) == norm for e in self.entries[acronym])


@dataclass(frozen=True)
class PairInstance:
    """One binary classification row: a (candidate expansion, sentence) pair.

    ``input_tokens`` is the rendered two-segment surface sequence (see
    :mod:`acrodis.pair_builder` for the layout); ``acronym_span`` indexes the
    wrapper-marker tokens around the acronym inside it.  ``label`` is 1 when
    the candidate equals the sample's gold expansion, 0 when it does not, and
    ``None`` when the sample is unlabeled.
    """

    sample_id: str
    expansion: str
    input_tokens: tuple[str, ...]
    acronym_span: tuple[int, int]
    label: Optional[int]

    def __post_init__(self):
        object.__setattr__(self, "input_tokens", tuple(self.input_tokens))
        object.__setattr__(self, "acronym_span", tuple(self.acronym_span))
        start, end = self.acronym_span
        if not 0 <= start < end < len(self.input_tokens):
            raise ValueError(f"acronym span {self.acronym_span} out of range for instance {self.sample_id!r}")


@dataclass(frozen=True)
class ScoredPrediction:
    """Candidate scores for one sample and the selected expansion.

    ``scores`` is keyed by the dictionary's candidate strings in dictionary
    order; ``selected`` is the argmax with ties broken by that order.
    """

    sample_id: str
    scores: dict[str, float]
    selected: str

    @classmethod
    def from_scores(cls, sample_id: str, scores: dict[str, float]) -> "ScoredPrediction":
        """Select the argmax candidate, first-in-order winning ties.

        ``scores`` must already be in dictionary candidate order.
        """
        if not scores:
            raise ValueError(f"no candidate scores for sample {sample_id!r}")
        selected, best = None, -math.inf
        for expansion, score in scores.items():
            if score > best:
                selected, best = expansion, score
        return cls(sample_id=sample_id, scores=dict(scores), selected=selected)


@dataclass(frozen=True)
class TrainConfig:
    """Every training hyperparameter, with seeds, in one place.

    Defaults are the published fine-tuning settings; from-scratch desk runs
    typically raise the learning rates.  ``negatives_per_batch`` defaults to
    ``batch_size`` (1:1 balance) when not given.  ``adversarial_epsilon`` is
    the perturbation magnitude used when adversarial training is switched on
    by the caller; it does not enable the strategy by itself.
    """

    batch_size: int = 32
    epochs: int = 15
    lr_encoder: float = 1.0e-5
    lr_head: float = 5.0e-4
    lr_decay_factor: float = 0.1
    lr_min: float = 5.0e-7
    negatives_per_batch: Optional[int] = None
    adversarial_epsilon: float = 1.0
    pseudo_threshold: float = 0.95
    mask_rate: float = 0.15
    dropout_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.negatives_per_batch is None:
            object.__setattr__(self, "negatives_per_batch", self.batch_size)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.negatives_per_batch < 0:
            raise ValueError("negatives_per_batch must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError("lr_decay_factor must be in (0, 1)")
        if self.lr_min > self.lr_encoder or self.lr_min > self.lr_head:
            raise ValueError("lr_min must not exceed the initial learning rates")
        if self.adversarial_epsilon < 0:
            raise ValueError("adversarial_epsilon must be >= 0")
        if not 0 < self.pseudo_threshold < 1:
            raise ValueError("pseudo_threshold must be in (0, 1)")
        if not 0 <= self.mask_rate <= 1:
            raise ValueError("mask_rate must be in [0, 1]")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


class ClassMetrics(NamedTuple):
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    """Macro precision/recall/F1 over expansion classes, plus per-class detail.

    ``f1`` is the unweighted mean of per-class F1 scores.  Because another
    common convention takes the harmonic mean of macro precision and macro
    recall instead, :meth:`pr_harmonic_f1` exposes that value too and both are
    written to training logs.  ``micro_accuracy`` is the fraction of samples
    whose selected expansion is correct.
    """

    precision: float
    recall: float
    f1: float
    micro_accuracy: float
    per_expansion: dict[str, ClassMetrics] = field(default_factory=dict)

    def pr_harmonic_f1(self) -> float:
        if self.precision + self.recall == 0:
            return 0.0
        return 2 * self.precision * self.recall / (self.precision + self.recall)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "f1_pr_harmonic": self.pr_harmonic_f1(),
            "micro_accuracy": self.micro_accuracy,
            "per_expansion": {
                name: {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
                for name, m in self.per_expansion.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        per = {
            name: ClassMetrics(m["precision"], m["recall"], m["f1"], m["support"])
            for name, m in data.get("per_expansion", {}).items()
        }
        return cls(
            precision=data["precision"],
            recall=data["recall"],
            f1=data["f1"],
            micro_accuracy=data["micro_accuracy"],
            per_expansion=per,
        )


def validate_sample(sample: Sample, dictionary: ExpansionDictionary) -> list[str]:
    """Check every Sample invariant against ``dictionary``.

    Returns a list of human-readable violation descriptions; empty means the
    sample is valid.  Nothing is raised so that callers can collect
    violations across a whole file.
    """
    violations = []
    if not sample.tokens:
        violations.append(f"sample {sample.id!r}: token list is empty")
    elif any(not t for t in sample.tokens):
        violations.append(f"sample {sample.id!r}: contains an empty token string")
    if not 0 <= sample.acronym_index < len(sample.tokens):
        violations.append(
            f"sample {sample.id!r}: acronym index {sample.acronym_index} out of range "
            f"for {len(sample.tokens)} tokens"
        )
        return violations
    if sample.gold_expansion is not None:
        acronym = sample.acronym
        if acronym not in dictionary:
            violations.append(f"sample {sample.id!r}: acronym {acronym!r} not in dictionary")
        elif not dictionary.contains_expansion(acronym, sample.gold_expansion):
            violations.append(
                f"sample {sample.id!r}: gold expansion {sample.gold_expansion!r} "
                f"not among the dictionary candidates for {acronym!r}"
            )
    return violations
