"""Synthetic disambiguation corpora with controllable difficulty.

Each acronym gets a handful of two-word expansions; every sample plants the
acronym plus a cue token that identifies the gold expansion among filler
words.  With ``cue_noise`` 0 the corpus is perfectly separable; raising it
swaps a fraction of cues for a competitor's cue, creating irreducible error.
Useful for overfit smoke tests, strategy comparisons, and demos — no real
data required.
"""

from __future__ import annotations

import numpy as np

from acrodis.core_types import ExpansionDictionary, Sample

_ADJECTIVES = (
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta",
    "eta", "theta", "iota", "kappa", "lambda", "sigma",
)
_NOUNS = (
    "kernel", "matrix", "subnet", "process", "circuit", "lattice",
    "protocol", "gradient", "cluster", "tensor", "channel", "routine",
)


def make_toy_corpus(
    n_acronyms: int = 5,
    expansions_range: tuple[int, int] = (2, 3),
    n_samples: int = 200,
    seed: int = 0,
    *,
    cue_noise: float = 0.0,
    sentence_tokens: tuple[int, int] = (8, 12),
    filler_vocab: int = 30,
    id_prefix: str = "s",
) -> tuple[list[Sample], ExpansionDictionary]:
    """Build ``n_samples`` labeled samples over ``n_acronyms`` acronyms.

    Acronym surfaces are doubled letters (AA, BB, ...); candidate counts per
    acronym are drawn uniformly from ``expansions_range``.  Samples cycle
    through the acronyms so classes stay balanced.
    """
    if n_acronyms > 26:
        raise ValueError("at most 26 synthetic acronyms are supported")
    rng = np.random.default_rng(seed)
    lo_exp, hi_exp = expansions_range
    if not 1 <= lo_exp <= hi_exp:
        raise ValueError(f"bad expansions_range {expansions_range}")
    if hi_exp * n_acronyms > len(_ADJECTIVES) * len(_NOUNS):
        raise ValueError("not enough phrase material for that many expansions")

    acronyms = [chr(65 + i) * 2 for i in range(n_acronyms)]
    entries = {}
    cues = {}
    phrase_index = 0
    for i, acronym in enumerate(acronyms):
        k = int(rng.integers(lo_exp, hi_exp + 1))
        phrases = []
        for j in range(k):
            # (a, a + b) indexing keeps pairs unique while varying both words
            a = phrase_index % len(_ADJECTIVES)
            b = phrase_index // len(_ADJECTIVES)
            phrases.append(f"{_ADJECTIVES[a]} {_NOUNS[(a + b) % len(_NOUNS)]}")
            phrase_index += 1
        entries[acronym] = tuple(phrases)
        cues[acronym] = [f"cue_{i}_{j}" for j in range(k)]
    dictionary = ExpansionDictionary(entries=entries)

    fillers = [f"w{i:02d}" for i in range(filler_vocab)]
    lo_len, hi_len = sentence_tokens
    if lo_len < 2:
        raise ValueError("sentences need at least two tokens")

    samples = []
    for n in range(n_samples):
        acronym = acronyms[n % n_acronyms]
        candidates = dictionary.candidates(acronym)
        k = len(candidates)
        gold_j = int(rng.integers(k))
        length = int(rng.integers(lo_len, hi_len + 1))
        tokens = [fillers[int(rng.integers(filler_vocab))] for _ in range(length)]
        acro_pos, cue_pos = (int(p) for p in rng.choice(length, size=2, replace=False))
        cue_j = gold_j
        if k > 1 and cue_noise > 0 and rng.random() < cue_noise:
            cue_j = int((gold_j + 1 + rng.integers(k - 1)) % k)
        tokens[acro_pos] = acronym
        tokens[cue_pos] = cues[acronym][cue_j]
        samples.append(
            Sample(
                id=f"{id_prefix}{n:05d}",
                tokens=tuple(tokens),
                acronym_index=acro_pos,
                gold_expansion=candidates[gold_j],
            )
        )
    return samples, dictionary


def strip_labels(samples) -> tuple[list[Sample], dict[str, str]]:
    """Unlabeled copies plus the hidden truth, for pseudo-labeling studies."""
    truth = {}
    unlabeled = []
    for s in samples:
        truth[s.id] = s.gold_expansion
        unlabeled.append(
            Sample(id=s.id, tokens=s.tokens, acronym_index=s.acronym_index, gold_expansion=None)
        )
    return unlabeled, truth
