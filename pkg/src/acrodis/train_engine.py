"""Training loop and strategies for the binary pair classifier.

Batch construction puts a fixed number of positives in each batch and tops
it up with negatives drawn without replacement from a per-epoch shuffled
pool; the pool reshuffles and recycles when it runs dry, so batches always
meet their negative quota, every positive is seen exactly once per epoch and
no negative repeats before the whole pool has cycled.  Switching the
strategy off iterates all pair instances the classic way.

Adversarial training perturbs the token embedding table by
``epsilon * g / ||g||`` (``g`` the accumulated loss gradient of the table),
accumulates gradients at the perturbed point with the identical dropout
path, restores the table from a snapshot, and averages the clean and
perturbed contributions.  The averaging keeps the epsilon -> 0 limit equal
to plain training.

Learning rates decay multiplicatively on dev macro-F1 plateaus, separately
clamped to a floor, with encoder and head parameters in different groups.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from acrodis.core_types import ExpansionDictionary, MetricsReport, PairInstance, Sample, TrainConfig
from acrodis.model import Adam, DeskEncoder, DeskEncoderConfig, PairClassifier, new_model
from acrodis.pair_builder import Tokenizer, build_pairs
from acrodis.util import STREAM_BATCHES, STREAM_DROPOUT, stream_rng

logger = logging.getLogger(__name__)

LOSS_CLAMP = 1e-7


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainingStrategies:
    """Which optional training strategies a run uses."""

    dynamic_negatives: bool = True
    adversarial: bool = False


@dataclass(frozen=True)
class BatchPlan:
    """One planned batch: positives plus the negatives sampled for them."""

    positives: tuple[PairInstance, ...]
    negatives: tuple[PairInstance, ...]
    epoch: int
    step: int

    def __post_init__(self):
        object.__setattr__(self, "positives", tuple(self.positives))
        object.__setattr__(self, "negatives", tuple(self.negatives))
        if any(p.label != 1 for p in self.positives):
            raise ValueError("positives must all carry label 1")
        if any(n.label != 0 for n in self.negatives):
            raise ValueError("negatives must all carry label 0")

    @property
    def rows(self) -> tuple[PairInstance, ...]:
        return self.positives + self.negatives


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_metrics: MetricsReport
    lr_encoder: float
    lr_head: float

    def log_line(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "dev_precision": self.dev_metrics.precision,
            "dev_recall": self.dev_metrics.recall,
            "dev_f1": self.dev_metrics.f1,
            "dev_f1_pr_harmonic": self.dev_metrics.pr_harmonic_f1(),
            "lr_encoder": self.lr_encoder,
            "lr_head": self.lr_head,
        }


@dataclass(frozen=True)
class TrainState:
    """Schedule state: current group learning rates and the best dev score."""

    lr_encoder_current: float
    lr_head_current: float
    best_dev_f1: float = -math.inf
    epoch_history: tuple[EpochRecord, ...] = field(default_factory=tuple)

    @classmethod
    def initial(cls, cfg: TrainConfig) -> "TrainState":
        return cls(lr_encoder_current=cfg.lr_encoder, lr_head_current=cfg.lr_head)


def plan_batches(pairs, cfg: TrainConfig, epoch_seed: int) -> list[BatchPlan]:
    """Plan one epoch of dynamically balanced batches.

    Positives are shuffled and partitioned into batches of ``cfg.batch_size``
    (the final batch may be smaller).  Each batch draws
    ``cfg.negatives_per_batch`` negatives from a shuffled pool consumed
    without replacement; the pool reshuffles and recycles once exhausted, so
    within an epoch a negative repeats at most
    ``ceil(total draws / pool size)`` times.  An empty pool yields
    positive-only batches.
    """
    positives = [p for p in pairs if p.label == 1]
    negatives = [p for p in pairs if p.label == 0]
    if not positives:
        raise ValueError("cannot plan batches without positive instances")
    rng = stream_rng(cfg.seed, STREAM_BATCHES, epoch_seed)
    pos_order = rng.permutation(len(positives))
    neg_order = list(rng.permutation(len(negatives)))

    plans = []
    cursor = 0
    for step, lo in enumerate(range(0, len(positives), cfg.batch_size)):
        batch_pos = [positives[i] for i in pos_order[lo : lo + cfg.batch_size]]
        batch_neg = []
        if negatives:
            for _ in range(cfg.negatives_per_batch):
                if cursor == len(neg_order):
                    neg_order = list(rng.permutation(len(negatives)))
                    cursor = 0
                batch_neg.append(negatives[neg_order[cursor]])
                cursor += 1
        plans.append(BatchPlan(positives=batch_pos, negatives=batch_neg, epoch=epoch_seed, step=step))
    return plans


def _plain_batches(pairs, cfg: TrainConfig, epoch_seed: int) -> list[list[PairInstance]]:
    """Classic epoch: every pair instance once, shuffled, in fixed-size batches."""
    rng = stream_rng(cfg.seed, STREAM_BATCHES, epoch_seed)
    order = rng.permutation(len(pairs))
    return [[pairs[i] for i in order[lo : lo + cfg.batch_size]] for lo in range(0, len(pairs), cfg.batch_size)]


def binary_loss(scores, labels) -> float:
    """Mean binary cross-entropy with scores clamped 1e-7 from the boundary."""
    loss, _ = binary_loss_and_grad(scores, labels)
    return loss


def binary_loss_and_grad(scores, labels) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the scores themselves."""
    loss, clamped, labels = _clamped_bce(scores, labels)
    grad = (clamped - labels) / (clamped * (1.0 - clamped)) / labels.size
    return loss, grad


def binary_loss_and_logit_grad(scores, labels) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the pre-sigmoid outputs.

    For scores produced by a sigmoid the logit-space gradient is
    ``(score - label) / n``: bounded, and nonzero even when float64
    saturation rounds a score to exactly 0 or 1 (where the score-space
    gradient through the flat clamp would stall training for good).  The
    training loop uses this path.
    """
    loss, clamped, labels = _clamped_bce(scores, labels)
    return loss, (clamped - labels) / labels.size


def _clamped_bce(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise ValueError(f"scores and labels differ in shape: {scores.shape} vs {labels.shape}")
    if scores.size == 0:
        raise ValueError("cannot compute a loss over zero scores")
    clamped = np.clip(scores, LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    loss = float(-np.mean(labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped)))
    return loss, clamped, labels


_zero_grad_logged = False


def adversarial_step(model: PairClassifier, formatted, labels, epsilon: float,
                     dropout_masks=None) -> float:
    """Accumulate gradients at an L2-bounded perturbation of the embedding table.

    Requires the clean backward pass to have already run so the table's
    gradient holds this batch's direction.  The perturter adds
    ``epsilon * g / ||g||`` to the table, runs forward/backward with the
    identical dropout path, then restores the table from a snapshot, so the
    table is bit-for-bit unchanged and only gradients accumulate.  A
    zero-gradient table skips the step (logged once per process).
    """
    global _zero_grad_logged
    if epsilon <= 0:
        raise ValueError("adversarial_step requires epsilon > 0; disable the strategy instead")
    table = model.encoder.token_embedding
    gnorm = float(np.linalg.norm(table.grad))
    if gnorm == 0.0:
        if not _zero_grad_logged:
            logger.warning("embedding gradient is zero; skipping adversarial perturbation")
            _zero_grad_logged = True
        return 0.0
    snapshot = table.value.copy()
    table.value += (epsilon / gnorm) * table.grad
    try:
        scores, _ = model.forward_batch(formatted, training=True, dropout_masks=dropout_masks)
        loss, dlogits = binary_loss_and_logit_grad(scores, labels)
        model.backward_from_logits(dlogits)
    finally:
        table.value[...] = snapshot
    return loss


def lr_schedule_update(state: TrainState, dev_f1: float, cfg: TrainConfig) -> TrainState:
    """Decay-on-plateau: strict improvement keeps the rates, otherwise both
    group rates shrink by ``cfg.lr_decay_factor``, clamped at ``cfg.lr_min``."""
    if not 0.0 <= dev_f1 <= 1.0:
        raise ValueError(f"dev F1 must be in [0, 1], got {dev_f1}")
    if dev_f1 > state.best_dev_f1:
        return dataclasses.replace(state, best_dev_f1=dev_f1)
    return dataclasses.replace(
        state,
        lr_encoder_current=max(cfg.lr_min, state.lr_encoder_current * cfg.lr_decay_factor),
        lr_head_current=max(cfg.lr_min, state.lr_head_current * cfg.lr_decay_factor),
    )


def _zero_metrics() -> MetricsReport:
    return MetricsReport(precision=0.0, recall=0.0, f1=0.0, micro_accuracy=0.0, per_expansion={})


def train(
    train_samples: list[Sample],
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
    """Train a classifier and return the checkpoint with the best dev macro F1.

    The encoder starts from ``initial_encoder`` (copied, e.g. the output of
    task-adaptive pretraining) or fresh from the seed; the head always starts
    fresh.  One epoch runs batch planning -> forward -> loss -> backward
    (-> adversarial accumulation) -> per-group optimizer update, then scores
    the dev set and applies the plateau schedule.  Identical inputs, config
    and seed reproduce identical parameters.
    """
    from acrodis.eval_report import evaluate, predict_all

    strategies = strategies or TrainingStrategies()
    unlabeled = [s.id for s in train_samples if s.gold_expansion is None]
    if unlabeled:
        raise ValueError(f"training samples must be labeled; missing gold for: {unlabeled[:5]}")

    pairs: list[PairInstance] = []
    for sample in train_samples:
        pairs.extend(build_pairs(sample, dictionary))

    if initial_encoder is not None:
        model = new_model(initial_encoder.cfg, tokenizer, cfg.dropout_rate, seed=cfg.seed)
        model.encoder.set_state(initial_encoder.get_state())
    else:
        model = new_model(encoder_cfg or DeskEncoderConfig(), tokenizer, cfg.dropout_rate, seed=cfg.seed)

    formatted = {
        (p.sample_id, p.expansion): f
        for p, f in zip(pairs, (model.format_instances(pairs) if pairs else []))
    }

    optimizer = Adam({
        "encoder": (model.encoder.parameters(), cfg.lr_encoder),
        "head": (model.head.parameters(), cfg.lr_head),
    })

    state = TrainState.initial(cfg)
    best_state = model.get_state()
    log_handle = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    try:
        for epoch in range(cfg.epochs):
            dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT, epoch)
            if strategies.dynamic_negatives:
                batches = [list(plan.rows) for plan in plan_batches(pairs, cfg, epoch_seed=epoch)]
            else:
                batches = _plain_batches(pairs, cfg, epoch_seed=epoch)

            loss_sum, row_count = 0.0, 0
            for rows in batches:
                optimizer.zero_grad()
                batch_formatted = [formatted[(p.sample_id, p.expansion)] for p in rows]
                labels = np.array([p.label for p in rows], dtype=np.float64)
                scores, masks = model.forward_batch(batch_formatted, training=True, rng=dropout_rng)
                loss, dlogits = binary_loss_and_logit_grad(scores, labels)
                if not math.isfinite(loss):
                    raise DivergenceError(f"non-finite training loss at epoch {epoch}")
                model.backward_from_logits(dlogits)
                if strategies.adversarial and cfg.adversarial_epsilon > 0:
                    adv_loss = adversarial_step(model, batch_formatted, labels,
                                                cfg.adversarial_epsilon, dropout_masks=masks)
                    if not math.isfinite(adv_loss):
                        raise DivergenceError(f"non-finite adversarial loss at epoch {epoch}")
                    for p in model.parameters():
                        p.grad *= 0.5
                optimizer.step()
                loss_sum += loss * len(rows)
                row_count += len(rows)

            if dev_samples:
                metrics = evaluate(dev_samples, predict_all(dev_samples, model, dictionary))
            else:
                metrics = _zero_metrics()
            record = EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / max(row_count, 1),
                dev_metrics=metrics,
                lr_encoder=state.lr_encoder_current,
                lr_head=state.lr_head_current,
            )
            if metrics.f1 > state.best_dev_f1:
                best_state = model.get_state()
            state = lr_schedule_update(state, metrics.f1, cfg)
            state = dataclasses.replace(state, epoch_history=state.epoch_history + (record,))
            optimizer.set_lr("encoder", state.lr_encoder_current)
            optimizer.set_lr("head", state.lr_head_current)
            if log_handle is not None:
                log_handle.write(json.dumps(record.log_line()) + "\n")
                log_handle.flush()
    finally:
        if log_handle is not None:
            log_handle.close()

    model.set_state(best_state)
    return model, state
