"""Task-adaptive pretraining: masked-token prediction on the task corpus.

Before classification training, the encoder can continue training as a
masked language model on the very sequences the classifier will see: every
(candidate expansion, sentence) pair rendered in the two-segment input
format, labels ignored.  That way positional and segment embeddings meet
their downstream distribution.

The masking recipe is the standard one: 15% of non-special positions are
selected per sequence, of which 80% become the mask token, 10% a random
regular token and 10% stay unchanged; the model predicts the original token
at every selected position.  The output projection is tied to the input
embedding table (plus a per-token bias), keeping desk-scale parameter count
low.  Prediction loss is computed only at selected positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from acrodis.core_types import ExpansionDictionary, Sample, TrainConfig
from acrodis.model import Adam, DeskEncoder, Parameter
from acrodis.pair_builder import FormattedInput, Tokenizer, build_pairs, formatted_from_instance
from acrodis.train_engine import DivergenceError
from acrodis.util import STREAM_BATCHES, STREAM_MASKING, stream_rng

MASK_ACTION = "mask"
RANDOM_ACTION = "random"
KEEP_ACTION = "keep"
_ACTION_PROBS = {MASK_ACTION: 0.8, RANDOM_ACTION: 0.1, KEEP_ACTION: 0.1}


@dataclass(frozen=True)
class MaskingPlan:
    """Positions selected for prediction and the corruption applied to each."""

    positions: tuple[int, ...]
    replacements: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(self.positions))
        object.__setattr__(self, "replacements", tuple(self.replacements))
        if len(self.positions) != len(self.replacements):
            raise ValueError("positions and replacements must align")
        bad = set(self.replacements) - set(_ACTION_PROBS)
        if bad:
            raise ValueError(f"unknown replacement actions: {sorted(bad)}")


def make_masking_plan(token_ids, tokenizer: Tokenizer, mask_rate: float, seed: int) -> MaskingPlan:
    """Select ``round(mask_rate * maskable)`` positions, at least one.

    Special tokens (markers, separators, mask, padding) are never selected;
    a sequence of only special tokens yields an empty plan.  Actions follow
    the 80/10/10 mask/random/keep split.
    """
    maskable = [i for i, tid in enumerate(token_ids) if not tokenizer.is_special(tid)]
    if not maskable:
        return MaskingPlan(positions=(), replacements=())
    count = max(1, int(round(mask_rate * len(maskable))))
    count = min(count, len(maskable))
    rng = np.random.default_rng(seed)
    positions = np.sort(rng.choice(len(maskable), size=count, replace=False))
    actions = rng.choice(
        list(_ACTION_PROBS), size=count, p=list(_ACTION_PROBS.values())
    )
    return MaskingPlan(
        positions=tuple(int(maskable[i]) for i in positions),
        replacements=tuple(str(a) for a in actions),
    )


def apply_masking_plan(token_ids, plan: MaskingPlan, tokenizer: Tokenizer,
                       rng: np.random.Generator) -> list[int]:
    """Corrupted copy of ``token_ids`` per the plan; ``rng`` draws random tokens."""
    corrupted = list(token_ids)
    regular = tokenizer.regular_ids()
    for pos, action in zip(plan.positions, plan.replacements):
        if action == MASK_ACTION:
            corrupted[pos] = tokenizer.mask_id
        elif action == RANDOM_ACTION:
            corrupted[pos] = int(regular[rng.integers(0, len(regular))])
    return corrupted


def _mlm_corpus(samples, dictionary, tokenizer, max_len) -> list[FormattedInput]:
    corpus = []
    for sample in samples:
        bare = Sample(id=sample.id, tokens=sample.tokens,
                      acronym_index=sample.acronym_index, gold_expansion=None)
        for inst in build_pairs(bare, dictionary):
            corpus.append(formatted_from_instance(inst, tokenizer, max_len))
    return corpus


def tapt_train(
    samples: list[Sample],
    dictionary: ExpansionDictionary,
    encoder: DeskEncoder,
    tokenizer: Tokenizer,
    epochs: int,
    cfg: TrainConfig,
) -> tuple[DeskEncoder, list[dict]]:
    """Continue training ``encoder`` as a masked language model, in place.

    Returns the encoder and one history entry per epoch with the mean
    prediction loss and masked-position accuracy.  Zero epochs leave the
    encoder untouched.  The classification head is not involved at all; the
    only auxiliary parameter (the tied projection's output bias) is
    discarded afterwards.
    """
    corpus = _mlm_corpus(samples, dictionary, tokenizer, encoder.cfg.max_positions)
    if not corpus:
        raise ValueError("no sequences to pretrain on")
    table = encoder.token_embedding
    bias = Parameter("mlm_bias", np.zeros(tokenizer.vocab_size))
    optimizer = Adam({
        "encoder": (encoder.parameters(), cfg.lr_encoder),
        "mlm": ([bias], cfg.lr_head),
    })

    history = []
    for epoch in range(epochs):
        order_rng = stream_rng(cfg.seed, STREAM_BATCHES, epoch)
        mask_rng = stream_rng(cfg.seed, STREAM_MASKING, epoch)
        plan_seeds = mask_rng.integers(0, 2**63 - 1, size=len(corpus))
        order = order_rng.permutation(len(corpus))

        loss_sum, hit_sum, position_count = 0.0, 0, 0
        for lo in range(0, len(corpus), cfg.batch_size):
            batch_idx = order[lo : lo + cfg.batch_size]
            batch = [corpus[i] for i in batch_idx]
            plans = [
                make_masking_plan(f.token_ids, tokenizer, cfg.mask_rate, int(plan_seeds[i]))
                for i, f in zip(batch_idx, batch)
            ]
            targets, rows, cols = [], [], []
            T = max(len(f.token_ids) for f in batch)
            ids = np.full((len(batch), T), tokenizer.pad_id, dtype=np.int64)
            segs = np.zeros((len(batch), T), dtype=np.int64)
            mask = np.zeros((len(batch), T), dtype=np.float64)
            for b, (f, plan) in enumerate(zip(batch, plans)):
                corrupted = apply_masking_plan(f.token_ids, plan, tokenizer, mask_rng)
                n = len(corrupted)
                ids[b, :n] = corrupted
                segs[b, :n] = f.segment_ids
                mask[b, :n] = 1.0
                for pos in plan.positions:
                    rows.append(b)
                    cols.append(pos)
                    targets.append(f.token_ids[pos])
            if not targets:
                continue

            optimizer.zero_grad()
            hidden = encoder.forward(ids, segs, mask)
            selected = hidden[rows, cols]
            logits = selected @ table.value.T + bias.value
            shifted = logits - logits.max(axis=1, keepdims=True)
            log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            m = len(targets)
            target_idx = np.asarray(targets)
            loss = float(-log_probs[np.arange(m), target_idx].mean())
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite masked-token loss at epoch {epoch}")

            probs = np.exp(log_probs)
            dlogits = probs
            dlogits[np.arange(m), target_idx] -= 1.0
            dlogits /= m
            table.grad += dlogits.T @ selected
            bias.grad += dlogits.sum(axis=0)
            dselected = dlogits @ table.value
            dhidden = np.zeros_like(hidden)
            np.add.at(dhidden, (rows, cols), dselected)
            encoder.backward(dhidden)
            optimizer.step()

            loss_sum += loss * m
            hit_sum += int((logits.argmax(axis=1) == target_idx).sum())
            position_count += m

        history.append({
            "epoch": epoch,
            "mlm_loss": loss_sum / max(position_count, 1),
            "masked_accuracy": hit_sum / max(position_count, 1),
        })
    return encoder, history
