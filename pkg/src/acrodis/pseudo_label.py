"""Semi-supervised round: confident predictions become training labels.

Unlabeled samples whose best candidate scores strictly above the confidence
threshold are adopted with the argmax expansion as their label, merged with
the real training set at equal weight, and a new classifier is trained from
scratch (from the pretrained encoder when one is supplied, never
warm-started from the previous classifier).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from acrodis.core_types import ExpansionDictionary, Sample, TrainConfig
from acrodis.eval_report import predict_all
from acrodis.model import DeskEncoder, DeskEncoderConfig, PairClassifier
from acrodis.pair_builder import Tokenizer
from acrodis.train_engine import TrainingStrategies, TrainState, train


@dataclass(frozen=True)
class PseudoSample:
    """An unlabeled sample plus the confident label a model assigned to it."""

    sample: Sample
    assigned_expansion: str
    confidence: float
    source_round: int

    def __post_init__(self):
        if self.sample.gold_expansion is not None:
            raise ValueError(f"sample {self.sample.id!r} already carries a gold expansion")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must be in (0, 1), got {self.confidence}")

    def to_labeled(self) -> Sample:
        return Sample(
            id=self.sample.id,
            tokens=self.sample.tokens,
            acronym_index=self.sample.acronym_index,
            gold_expansion=self.assigned_expansion,
        )


def harvest(model: PairClassifier, unlabeled: list[Sample], dictionary: ExpansionDictionary,
            threshold: float, source_round: int = 1) -> list[PseudoSample]:
    """Pseudo-label every unlabeled sample whose best score beats ``threshold``.

    The comparison is strict, so a best score exactly at the threshold is
    not harvested.  Re-running on the same model and data reproduces the
    same set; an empty harvest is a valid outcome.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    harvested = []
    for sample, prediction in zip(unlabeled, predict_all(unlabeled, model, dictionary)):
        best = prediction.scores[prediction.selected]
        if best > threshold:
            bare = Sample(id=sample.id, tokens=sample.tokens,
                          acronym_index=sample.acronym_index, gold_expansion=None)
            harvested.append(
                PseudoSample(
                    sample=bare,
                    assigned_expansion=prediction.selected,
                    confidence=best,
                    source_round=source_round,
                )
            )
    return harvested


def merge_and_retrain(
    train_samples: list[Sample],
    pseudo: list[PseudoSample],
    dev_samples: list[Sample],
    dictionary: ExpansionDictionary,
    tokenizer: Tokenizer,
    cfg: TrainConfig,
    strategies: Optional[TrainingStrategies] = None,
    *,
    encoder_cfg: Optional[DeskEncoderConfig] = None,
    initial_encoder: Optional[DeskEncoder] = None,
    log_path=None,
) -> tuple[PairClassifier, TrainState]:
    """Train a fresh model on real plus pseudo-labeled samples.

    Pseudo samples carry the same weight as real ones and must not reuse
    real sample ids.  Initialization matches a plain training run exactly
    (same seed, same optional pretrained encoder), so an empty ``pseudo``
    list reproduces plain training bit for bit.
    """
    train_ids = {s.id for s in train_samples}
    collisions = [p.sample.id for p in pseudo if p.sample.id in train_ids]
    if collisions:
        raise ValueError(f"pseudo sample ids collide with training ids: {collisions[:5]}")
    merged = list(train_samples) + [p.to_labeled() for p in pseudo]
    return train(
        merged,
        dev_samples,
        dictionary,
        tokenizer,
        cfg,
        strategies,
        encoder_cfg=encoder_cfg,
        initial_encoder=initial_encoder,
        log_path=log_path,
    )


def save_pseudo_dataset(pseudo: list[PseudoSample], path) -> None:
    """Persist in the dataset schema plus confidence and round fields."""
    records = [
        {
            "id": p.sample.id,
            "tokens": list(p.sample.tokens),
            "acronym": p.sample.acronym_index,
            "expansion": p.assigned_expansion,
            "confidence": p.confidence,
            "round": p.source_round,
        }
        for p in pseudo
    ]
    Path(path).write_text(json.dumps(records, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def load_pseudo_dataset(path) -> list[PseudoSample]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        PseudoSample(
            sample=Sample(id=r["id"], tokens=tuple(r["tokens"]), acronym_index=r["acronym"]),
            assigned_expansion=r["expansion"],
            confidence=r["confidence"],
            source_round=r["round"],
        )
        for r in data
    ]
