"""The scoring network: encoder, span+CLS extraction, and the binary head.

The contextual encoder is swappable: anything implementing the
:class:`Encoder` surface (an ``embed`` table lookup, an ``encode`` pass
returning one hidden vector per position, a matching ``backward``, and a
parameter list) can replace :class:`DeskEncoder`.  The bundled desk encoder
is a small self-attention stack with learned positional and segment
embeddings — big enough to learn toy corpora in seconds, small enough to
stay on one CPU core.

Scoring a pair reads exactly three rows of the contextual matrix: the
sequence-start position, and the two marker positions wrapping the acronym.
The binary head maps their combination through
dropout -> affine -> ReLU -> dropout -> affine -> sigmoid to a match score
in (0, 1).

Encoder parameters and head parameters form separate optimizer groups
because they train at different learning rates.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from acrodis.core_types import PairInstance
from acrodis.nn import (
    Adam,
    INIT_STD,
    LayerNorm,
    Linear,
    MultiHeadSelfAttention,
    Parameter,
    dropout_backward,
    dropout_forward,
    sigmoid,
)
from acrodis.pair_builder import FormattedInput, Tokenizer, formatted_from_instance
from acrodis.util import STREAM_INIT, stream_rng


class Encoder(Protocol):
    """What the pipeline needs from a contextual encoder."""

    hidden_dim: int
    token_embedding: Parameter

    def embed(self, token_ids: np.ndarray) -> np.ndarray: ...

    def encode(self, embeddings: np.ndarray, segment_ids: np.ndarray, key_mask: np.ndarray) -> np.ndarray: ...

    def backward(self, d_hidden: np.ndarray) -> np.ndarray: ...

    def parameters(self) -> list[Parameter]: ...


@dataclass(frozen=True)
class DeskEncoderConfig:
    layers: int = 2
    hidden_dim: int = 128
    attention_heads: int = 4
    feedforward_dim: int = 256
    max_positions: int = 128

    def __post_init__(self):
        if self.hidden_dim % self.attention_heads:
            raise ValueError("hidden_dim must be divisible by attention_heads")
        if min(self.layers, self.hidden_dim, self.attention_heads, self.feedforward_dim, self.max_positions) < 1:
            raise ValueError("all encoder dimensions must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DeskEncoderConfig":
        return cls(**data)


class _EncoderLayer:
    """Pre-norm block: x + attn(LN(x)), then x + ffn(LN(x)).

    The untouched residual path keeps gradients flowing from the readout
    straight to the embeddings, which makes small from-scratch models start
    learning immediately instead of after a long plateau.
    """

    def __init__(self, rng, cfg: DeskEncoderConfig, name: str):
        d = cfg.hidden_dim
        self.attn = MultiHeadSelfAttention(rng, d, cfg.attention_heads, f"{name}.attn")
        self.ln1 = LayerNorm(d, f"{name}.ln1")
        self.ffn1 = Linear(rng, d, cfg.feedforward_dim, f"{name}.ffn1")
        self.ffn2 = Linear(rng, cfg.feedforward_dim, d, f"{name}.ffn2")
        self.ln2 = LayerNorm(d, f"{name}.ln2")
        self._relu_mask = None

    @property
    def params(self) -> list[Parameter]:
        return self.attn.params + self.ln1.params + self.ffn1.params + self.ffn2.params + self.ln2.params

    def forward(self, x: np.ndarray, key_mask: np.ndarray) -> np.ndarray:
        x = x + self.attn.forward(self.ln1.forward(x), key_mask)
        z = self.ffn1.forward(self.ln2.forward(x))
        self._relu_mask = z > 0
        return x + self.ffn2.forward(z * self._relu_mask)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dz = self.ffn2.backward(dy) * self._relu_mask
        dx = dy + self.ln2.backward(self.ffn1.backward(dz))
        dattn = self.attn.backward(dx)
        return dx + self.ln1.backward(dattn)


class DeskEncoder:
    """Small trainable self-attention encoder over token ids.

    ``embed`` and ``encode`` are split so callers can reach the raw token
    embedding table — the embedding perturbation used by adversarial training
    targets the table itself, not the looked-up rows.
    """

    def __init__(self, cfg: DeskEncoderConfig, vocab_size: int, seed: int = 0,
                 rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.hidden_dim = cfg.hidden_dim
        rng = rng if rng is not None else stream_rng(seed, STREAM_INIT, 0)
        d = cfg.hidden_dim
        self.token_embedding = Parameter("token_emb", rng.normal(0.0, INIT_STD, size=(vocab_size, d)))
        self.position_embedding = Parameter("pos_emb", rng.normal(0.0, INIT_STD, size=(cfg.max_positions, d)))
        self.segment_embedding = Parameter("seg_emb", rng.normal(0.0, INIT_STD, size=(2, d)))
        self.emb_ln = LayerNorm(d, "emb_ln")
        self.layers = [_EncoderLayer(rng, cfg, f"layer{i}") for i in range(cfg.layers)]
        self.final_ln = LayerNorm(d, "final_ln")
        self._cache = None

    def parameters(self) -> list[Parameter]:
        params = [self.token_embedding, self.position_embedding, self.segment_embedding]
        params += self.emb_ln.params
        for layer in self.layers:
            params += layer.params
        params += self.final_ln.params
        return params

    def embed(self, token_ids: np.ndarray) -> np.ndarray:
        return self.token_embedding.value[token_ids]

    def encode(self, embeddings: np.ndarray, segment_ids: np.ndarray, key_mask: np.ndarray,
               token_ids: Optional[np.ndarray] = None) -> np.ndarray:
        """Contextualize looked-up embeddings; one output row per position.

        ``token_ids`` enables gradient scatter into the embedding table on
        ``backward``; omit it when the embeddings did not come from the table.
        """
        B, T, _ = embeddings.shape
        if T > self.cfg.max_positions:
            raise ValueError(f"sequence length {T} exceeds max_positions {self.cfg.max_positions}")
        h = embeddings + self.position_embedding.value[:T] + self.segment_embedding.value[segment_ids]
        h = self.emb_ln.forward(h)
        for layer in self.layers:
            h = layer.forward(h, key_mask)
        h = self.final_ln.forward(h)
        self._cache = (token_ids, segment_ids, T)
        return h

    def forward(self, token_ids: np.ndarray, segment_ids: np.ndarray, key_mask: np.ndarray) -> np.ndarray:
        return self.encode(self.embed(token_ids), segment_ids, key_mask, token_ids=token_ids)

    def backward(self, d_hidden: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the embedding-output gradient."""
        token_ids, segment_ids, T = self._cache
        d_hidden = self.final_ln.backward(d_hidden)
        for layer in reversed(self.layers):
            d_hidden = layer.backward(d_hidden)
        d_emb = self.emb_ln.backward(d_hidden)
        self.position_embedding.grad[:T] += d_emb.sum(axis=0)
        np.add.at(self.segment_embedding.grad, segment_ids, d_emb)
        if token_ids is not None:
            np.add.at(self.token_embedding.grad, token_ids, d_emb)
        return d_emb

    def get_state(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            value = state[p.name]
            if value.shape != p.value.shape:
                raise ValueError(f"shape mismatch for {p.name}: {value.shape} vs {p.value.shape}")
            p.value[...] = value
            p.grad[...] = 0.0

    def clone(self) -> "DeskEncoder":
        other = DeskEncoder(self.cfg, self.vocab_size)
        other.set_state(self.get_state())
        return other


class BinaryHead:
    """dropout -> affine -> ReLU -> dropout -> affine -> sigmoid on 2d reps."""

    def __init__(self, hidden_dim: int, dropout_rate: float = 0.1, seed: int = 0,
                 rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else stream_rng(seed, STREAM_INIT, 1)
        self.hidden_dim = hidden_dim
        self.dropout_rate = float(dropout_rate)
        self.lin1 = Linear(rng, 2 * hidden_dim, hidden_dim, "head.lin1")
        self.lin2 = Linear(rng, hidden_dim, 1, "head.lin2")
        self._cache = None

    def parameters(self) -> list[Parameter]:
        return self.lin1.params + self.lin2.params

    def forward(self, rep: np.ndarray, training: bool = False,
                rng: Optional[np.random.Generator] = None,
                dropout_masks: Optional[tuple] = None) -> tuple[np.ndarray, tuple]:
        """Scores in (0, 1) for a (B, 2d) batch of representations.

        Dropout applies only when ``training``; pass ``dropout_masks`` from a
        previous call to replay the identical stochastic path.
        """
        if not np.all(np.isfinite(rep)):
            raise ValueError("non-finite representation passed to the binary head")
        rate = self.dropout_rate if training else 0.0
        m1, m2 = dropout_masks if dropout_masks is not None else (None, None)
        d1, m1 = dropout_forward(rep, rate, rng, m1)
        z1 = self.lin1.forward(d1)
        relu_mask = z1 > 0
        d2, m2 = dropout_forward(z1 * relu_mask, rate, rng, m2)
        z2 = self.lin2.forward(d2)[..., 0]
        scores = sigmoid(z2)
        self._cache = (rate, m1, m2, relu_mask, scores)
        return scores, (m1, m2)

    def backward(self, dscores: np.ndarray) -> np.ndarray:
        _, _, _, _, scores = self._cache
        return self.backward_from_logits(dscores * scores * (1.0 - scores))

    def backward_from_logits(self, dlogits: np.ndarray) -> np.ndarray:
        """Backward entry for gradients w.r.t. the pre-sigmoid output.

        Losses that pair with a sigmoid should inject their gradient here:
        in float64 the score saturates to exactly 0 or 1 for large logits,
        which kills score-space gradients, while the logit-space gradient of
        the cross-entropy stays finite and training can recover.
        """
        rate, m1, m2, relu_mask, _ = self._cache
        dz2 = np.asarray(dlogits)[..., None]
        dd2 = self.lin2.backward(dz2)
        dz1 = dropout_backward(dd2, rate, m2) * relu_mask
        dd1 = self.lin1.backward(dz1)
        return dropout_backward(dd1, rate, m1)

    def get_state(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.value[...] = state[p.name]
            p.grad[...] = 0.0


def extract_representation(contextual: np.ndarray, cls_position: int,
                           acronym_span: tuple[int, int]) -> np.ndarray:
    """concat(CLS row, mean of the marker rows) for a single (T, d) matrix."""
    start, end = acronym_span
    T = contextual.shape[0]
    if not (0 <= cls_position < T and 0 <= start < T and 0 <= end < T):
        raise IndexError(f"cls {cls_position} or span {acronym_span} out of range for {T} rows")
    span_mean = (contextual[start] + contextual[end]) / 2.0
    return np.concatenate([contextual[cls_position], span_mean])


def head_forward(rep: np.ndarray, head: BinaryHead, training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> float:
    """Score a single representation vector through the head."""
    scores, _ = head.forward(np.asarray(rep, dtype=np.float64)[None, :], training=training, rng=rng)
    return float(scores[0])


class PairClassifier:
    """Encoder + extraction + head over formatted pair inputs.

    Owns the tokenizer so that a raw :class:`PairInstance` can be scored
    directly; the maximum input length is the encoder's position budget.
    Training code drives ``forward_batch``/``backward`` and the parameter
    groups; inference goes through :func:`acrodis.eval_report.predict`.
    """

    def __init__(self, encoder: DeskEncoder, head: BinaryHead, tokenizer: Tokenizer):
        if head.hidden_dim != encoder.hidden_dim:
            raise ValueError("head width must match encoder hidden dim")
        self.encoder = encoder
        self.head = head
        self.tokenizer = tokenizer
        self.max_len = encoder.cfg.max_positions
        self._cache = None

    # -- batching ---------------------------------------------------------

    def format_instances(self, instances: list[PairInstance]) -> list[FormattedInput]:
        return [formatted_from_instance(inst, self.tokenizer, self.max_len) for inst in instances]

    def batch_arrays(self, formatted: list[FormattedInput]):
        B = len(formatted)
        T = max(len(f.token_ids) for f in formatted)
        ids = np.full((B, T), self.tokenizer.pad_id, dtype=np.int64)
        segs = np.zeros((B, T), dtype=np.int64)
        mask = np.zeros((B, T), dtype=np.float64)
        spans = np.zeros((B, 2), dtype=np.int64)
        cls = np.zeros(B, dtype=np.int64)
        for b, f in enumerate(formatted):
            n = len(f.token_ids)
            ids[b, :n] = f.token_ids
            segs[b, :n] = f.segment_ids
            mask[b, :n] = 1.0
            spans[b] = f.acronym_span
            cls[b] = f.cls_position
        return ids, segs, mask, spans, cls

    # -- forward / backward ------------------------------------------------

    def forward_batch(self, formatted: list[FormattedInput], training: bool = False,
                      rng: Optional[np.random.Generator] = None,
                      dropout_masks: Optional[tuple] = None) -> tuple[np.ndarray, tuple]:
        """Scores for a batch; returns (scores, dropout_masks) for replay."""
        ids, segs, mask, spans, cls = self.batch_arrays(formatted)
        hidden = self.encoder.forward(ids, segs, mask)
        rows = np.arange(len(formatted))
        span_mean = (hidden[rows, spans[:, 0]] + hidden[rows, spans[:, 1]]) / 2.0
        rep = np.concatenate([hidden[rows, cls], span_mean], axis=1)
        scores, masks = self.head.forward(rep, training=training, rng=rng, dropout_masks=dropout_masks)
        self._cache = (hidden.shape, spans, cls)
        return scores, masks

    def backward(self, dscores: np.ndarray) -> None:
        """Accumulate gradients for the batch scored by the last forward."""
        self._backward_common(self.head.backward(dscores))

    def backward_from_logits(self, dlogits: np.ndarray) -> None:
        """Like ``backward`` but for gradients w.r.t. the pre-sigmoid output."""
        self._backward_common(self.head.backward_from_logits(dlogits))

    def _backward_common(self, drep: np.ndarray) -> None:
        hidden_shape, spans, cls = self._cache
        d = self.encoder.hidden_dim
        dhidden = np.zeros(hidden_shape)
        rows = np.arange(len(cls))
        np.add.at(dhidden, (rows, cls), drep[:, :d])
        np.add.at(dhidden, (rows, spans[:, 0]), drep[:, d:] / 2.0)
        np.add.at(dhidden, (rows, spans[:, 1]), drep[:, d:] / 2.0)
        self.encoder.backward(dhidden)

    def score_instances(self, instances: list[PairInstance], training: bool = False,
                        rng: Optional[np.random.Generator] = None) -> np.ndarray:
        scores, _ = self.forward_batch(self.format_instances(instances), training=training, rng=rng)
        return scores

    # -- parameters and state ----------------------------------------------

    def parameter_groups(self) -> dict[str, list[Parameter]]:
        return {"encoder": self.encoder.parameters(), "head": self.head.parameters()}

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.head.parameters()

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def get_state(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        self.encoder.set_state({k: v for k, v in state.items() if not k.startswith("head.")})
        self.head.set_state({k: v for k, v in state.items() if k.startswith("head.")})


def score_pair(instance: PairInstance, model: PairClassifier, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> float:
    """Match score in (0, 1) for one (expansion, sentence) pair."""
    return float(model.score_instances([instance], training=training, rng=rng)[0])


def new_model(encoder_cfg: DeskEncoderConfig, tokenizer: Tokenizer, dropout_rate: float,
              seed: int) -> PairClassifier:
    """Freshly initialized classifier; encoder and head draw separate streams."""
    encoder = DeskEncoder(encoder_cfg, tokenizer.vocab_size, seed=seed)
    head = BinaryHead(encoder_cfg.hidden_dim, dropout_rate=dropout_rate, seed=seed)
    return PairClassifier(encoder, head, tokenizer)


# -- checkpoint container ----------------------------------------------------

_CHECKPOINT_FORMAT = "acrodis-checkpoint-v1"


def _write_npz(path, meta: dict, params: dict[str, np.ndarray]) -> None:
    arrays = {f"param:{name}": value for name, value in params.items()}
    arrays["meta"] = np.array(json.dumps(meta))
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)


def _read_npz(path):
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise
    meta = json.loads(str(data["meta"]))
    if meta.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an acrodis checkpoint")
    params = {key[len("param:"):]: data[key] for key in data.files if key.startswith("param:")}
    return meta, params


def save_checkpoint(path, model: PairClassifier, provenance: Optional[dict] = None) -> None:
    """Self-describing container: config, tokenizer, tensors, provenance."""
    meta = {
        "format": _CHECKPOINT_FORMAT,
        "encoder_only": False,
        "encoder_config": model.encoder.cfg.to_dict(),
        "dropout_rate": model.head.dropout_rate,
        "tokenizer": model.tokenizer.to_dict(),
        "provenance": dict(provenance or {}),
    }
    _write_npz(path, meta, model.get_state())


def load_checkpoint(path) -> tuple[PairClassifier, dict]:
    meta, params = _read_npz(path)
    if meta["encoder_only"]:
        raise ValueError(f"{path}: encoder-only checkpoint; load it as a pretrained encoder")
    tokenizer = Tokenizer.from_dict(meta["tokenizer"])
    cfg = DeskEncoderConfig.from_dict(meta["encoder_config"])
    model = new_model(cfg, tokenizer, meta["dropout_rate"], seed=0)
    model.set_state(params)
    return model, meta["provenance"]


def save_encoder_checkpoint(path, encoder: DeskEncoder, tokenizer: Tokenizer,
                            provenance: Optional[dict] = None) -> None:
    meta = {
        "format": _CHECKPOINT_FORMAT,
        "encoder_only": True,
        "encoder_config": encoder.cfg.to_dict(),
        "tokenizer": tokenizer.to_dict(),
        "provenance": dict(provenance or {}),
    }
    _write_npz(path, meta, encoder.get_state())


def load_encoder_checkpoint(path) -> tuple[DeskEncoder, Tokenizer, dict]:
    meta, params = _read_npz(path)
    tokenizer = Tokenizer.from_dict(meta["tokenizer"])
    cfg = DeskEncoderConfig.from_dict(meta["encoder_config"])
    encoder = DeskEncoder(cfg, tokenizer.vocab_size, seed=0)
    encoder.set_state(params)
    return encoder, tokenizer, meta["provenance"]


__all__ = [
    "Adam",
    "BinaryHead",
    "DeskEncoder",
    "DeskEncoderConfig",
    "Encoder",
    "PairClassifier",
    "extract_representation",
    "head_forward",
    "load_checkpoint",
    "load_encoder_checkpoint",
    "new_model",
    "save_checkpoint",
    "save_encoder_checkpoint",
    "score_pair",
]
