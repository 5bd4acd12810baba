"""Binary pair construction and the two-segment input format.

A sample with acronym ``A`` and candidate expansion ``E`` is rendered as

    [CLS] E-tokens [SEP] sentence-prefix <start> A <end> sentence-suffix [SEP]

with segment 0 covering everything through the first separator and segment 1
the rest.  The ``<start>``/``<end>`` markers wrap the acronym so it draws
attention regardless of sentence length.  When a rendered sequence exceeds
the maximum length, sentence tokens farthest from the acronym are dropped
first; the acronym, its markers, and the expansion segment are never dropped.

The tokenizer is a plain whitespace-token vocabulary built from the corpus
(the data ships pre-tokenized, and expansion phrases split on whitespace);
out-of-vocabulary tokens map to ``[UNK]`` rather than erroring because dev
and test vocabulary differs from train.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from acrodis.core_types import ExpansionDictionary, PairInstance, Sample, normalize_expansion

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MASK_TOKEN = "[MASK]"
ACRO_START_TOKEN = "<start>"
ACRO_END_TOKEN = "<end>"

SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN, ACRO_START_TOKEN, ACRO_END_TOKEN)


class MissingAcronymError(KeyError):
    """Raised when a sample's acronym has no dictionary entry."""


class Tokenizer:
    """Immutable token-string <-> id table with fixed special tokens.

    Special tokens occupy ids 0..6 in the order of ``SPECIAL_TOKENS``;
    regular tokens follow ordered by (frequency desc, token asc), which makes
    vocabulary construction deterministic regardless of sample order.
    """

    def __init__(self, token_to_id: dict[str, int]):
        for tok in SPECIAL_TOKENS:
            if tok not in token_to_id:
                raise ValueError(f"special token {tok!r} missing from vocabulary")
        ids = sorted(token_to_id.values())
        if ids != list(range(len(ids))):
            raise ValueError("token ids must be exactly 0..vocab_size-1")
        self._token_to_id = dict(token_to_id)
        self._id_to_token = {i: t for t, i in token_to_id.items()}
        self.pad_id = token_to_id[PAD_TOKEN]
        self.unk_id = token_to_id[UNK_TOKEN]
        self.cls_id = token_to_id[CLS_TOKEN]
        self.sep_id = token_to_id[SEP_TOKEN]
        self.mask_id = token_to_id[MASK_TOKEN]
        self.acro_start_id = token_to_id[ACRO_START_TOKEN]
        self.acro_end_id = token_to_id[ACRO_END_TOKEN]
        self.special_ids = frozenset(token_to_id[t] for t in SPECIAL_TOKENS)
        if len(self.special_ids) != len(SPECIAL_TOKENS):
            raise ValueError("special tokens must have distinct ids")

    @property
    def vocab_size(self) -> int:
        return len(self._token_to_id)

    def token_id(self, token: str) -> int:
        return self._token_to_id.get(token, self.unk_id)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self._token_to_id.get(t, self.unk_id) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    def is_special(self, token_id: int) -> bool:
        return token_id in self.special_ids

    def regular_ids(self) -> list[int]:
        """All non-special ids, ascending (used for random-token masking)."""
        return [i for i in range(self.vocab_size) if i not in self.special_ids]

    def to_dict(self) -> dict:
        return {"tokens": self._token_to_id, "special_tokens": list(SPECIAL_TOKENS)}

    @classmethod
    def from_dict(cls, data: dict) -> "Tokenizer":
        return cls(data["tokens"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Tokenizer":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def __eq__(self, other) -> bool:
        return isinstance(other, Tokenizer) and self._token_to_id == other._token_to_id


def build_vocab(samples, dictionary: ExpansionDictionary, min_count: int = 1) -> Tokenizer:
    """Build the token table from sample tokens plus all dictionary expansions.

    Each dictionary expansion contributes its whitespace tokens once, so that
    candidate phrases stay encodable even when rare in the sentences.  Tokens
    below ``min_count`` are dropped and encode to ``[UNK]``.
    """
    if not samples:
        raise ValueError("cannot build a vocabulary from zero samples")
    counts = Counter()
    for sample in samples:
        counts.update(sample.tokens)
    for acronym in dictionary.acronyms():
        for expansion in dictionary.candidates(acronym):
            counts.update(expansion.split())
    kept = [t for t, c in counts.items() if c >= min_count and t not in SPECIAL_TOKENS]
    kept.sort(key=lambda t: (-counts[t], t))
    token_to_id = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for tok in kept:
        token_to_id[tok] = len(token_to_id)
    return Tokenizer(token_to_id)


def render_pair_tokens(expansion: str, sample: Sample) -> tuple[list[str], tuple[int, int]]:
    """Surface form of the two-segment pair input and the marker span."""
    expansion_tokens = expansion.split()
    if not expansion_tokens:
        raise ValueError(f"empty expansion for sample {sample.id!r}")
    i = sample.acronym_index
    tokens = [CLS_TOKEN, *expansion_tokens, SEP_TOKEN]
    start = len(tokens) + i
    tokens.extend(sample.tokens[:i])
    tokens.append(ACRO_START_TOKEN)
    tokens.append(sample.tokens[i])
    tokens.append(ACRO_END_TOKEN)
    tokens.extend(sample.tokens[i + 1 :])
    tokens.append(SEP_TOKEN)
    return tokens, (start, start + 2)


def build_pairs(sample: Sample, dictionary: ExpansionDictionary) -> list[PairInstance]:
    """One PairInstance per dictionary candidate, in dictionary order.

    Labels are 0/1 against the gold expansion, or ``None`` throughout when
    the sample is unlabeled.
    """
    acronym = sample.acronym
    if acronym not in dictionary:
        raise MissingAcronymError(f"acronym {acronym!r} (sample {sample.id!r}) not in dictionary")
    gold = None if sample.gold_expansion is None else normalize_expansion(sample.gold_expansion)
    instances = []
    for expansion in dictionary.candidates(acronym):
        tokens, span = render_pair_tokens(expansion, sample)
        label = None if gold is None else int(normalize_expansion(expansion) == gold)
        instances.append(
            PairInstance(
                sample_id=sample.id,
                expansion=expansion,
                input_tokens=tokens,
                acronym_span=span,
                label=label,
            )
        )
    return instances


@dataclass(frozen=True)
class FormattedInput:
    """Encoder-ready pair input: ids, segment ids, and key positions."""

    token_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    acronym_span: tuple[int, int]
    cls_position: int = 0


def _truncate_rendered(
    tokens: list[str], span: tuple[int, int], max_len: int
) -> tuple[list[str], tuple[int, int]]:
    """Drop sentence tokens farthest from the acronym until ``max_len`` fits.

    Only plain sentence tokens are droppable; the expansion segment, the
    separators, the markers, and the acronym itself always survive.  Ties in
    distance drop the later (right-hand) token, keeping preceding context.
    """
    overflow = len(tokens) - max_len
    if overflow <= 0:
        return tokens, span
    start, end = span
    first_sep = tokens.index(SEP_TOKEN)
    acro_pos = start + 1
    removable = [p for p in range(first_sep + 1, len(tokens) - 1) if p not in (start, acro_pos, end)]
    if overflow > len(removable):
        raise ValueError(f"input of length {len(tokens)} cannot be truncated to {max_len}")
    removable.sort(key=lambda p: (-abs(p - acro_pos), -p))
    dropped = set(removable[:overflow])
    kept = [t for p, t in enumerate(tokens) if p not in dropped]
    new_start = start - sum(1 for p in dropped if p < start)
    return kept, (new_start, new_start + 2)


def format_input(
    expansion: str,
    sample: Sample,
    tokenizer: Tokenizer,
    max_len: int = 128,
) -> FormattedInput:
    """Render, truncate, and encode one (expansion, sentence) pair."""
    tokens, span = render_pair_tokens(expansion, sample)
    return encode_rendered(tokens, span, tokenizer, max_len)


def encode_rendered(
    tokens: list[str],
    span: tuple[int, int],
    tokenizer: Tokenizer,
    max_len: int = 128,
) -> FormattedInput:
    """Encode an already-rendered surface sequence (used for PairInstances)."""
    tokens, span = _truncate_rendered(list(tokens), tuple(span), max_len)
    ids = tokenizer.encode(tokens)
    first_sep = tokens.index(SEP_TOKEN)
    segment_ids = [0 if p <= first_sep else 1 for p in range(len(tokens))]
    return FormattedInput(
        token_ids=tuple(ids),
        segment_ids=tuple(segment_ids),
        acronym_span=span,
        cls_position=0,
    )


def formatted_from_instance(
    instance: PairInstance, tokenizer: Tokenizer, max_len: int = 128
) -> FormattedInput:
    return encode_rendered(list(instance.input_tokens), instance.acronym_span, tokenizer, max_len)
