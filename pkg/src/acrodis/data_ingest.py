"""Dataset and dictionary files, corpus statistics, and train/dev splitting.

File formats follow the released SciAD layout so the public dataset loads
unmodified:

* dataset — UTF-8 JSON array of ``{"id": str, "tokens": [str],
  "acronym": int, "expansion": str?}`` (``expansion`` absent or null for
  unlabeled records);
* dictionary — UTF-8 JSON object ``{acronym: [expansion, ...]}`` with
  expansion order preserved.

Loading validates structural invariants and rejects bad records by id;
checks that need both a sample and the dictionary live in
:func:`acrodis.core_types.validate_sample`.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from acrodis.core_types import ExpansionDictionary, Sample, normalize_expansion
from acrodis.util import STREAM_SPLIT, stream_rng


class DataParseError(ValueError):
    """Raised when a data file is not valid JSON or has the wrong shape."""


class DataValidationError(ValueError):
    """Raised when records are well-formed JSON but violate invariants."""


def _read_json(path) -> object:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise DataParseError(f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}") from err


def load_dataset(path) -> list[Sample]:
    """Load samples from a JSON array, in file order.

    Raises :class:`DataParseError` for malformed JSON and
    :class:`DataValidationError` naming the offending record ids when
    structural invariants fail.
    """
    data = _read_json(path)
    if not isinstance(data, list):
        raise DataParseError(f"{path}: expected a JSON array of records")
    samples = []
    problems = []
    for i, record in enumerate(data):
        if not isinstance(record, dict):
            problems.append(f"record #{i}: not a JSON object")
            continue
        try:
            sid = str(record["id"])
            tokens = record["tokens"]
            index = record["acronym"]
        except KeyError as err:
            problems.append(f"record #{i}: missing field {err.args[0]!r}")
            continue
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            problems.append(f"record {record.get('id', i)!r}: tokens must be a list of strings")
            continue
        if not isinstance(index, int) or isinstance(index, bool):
            problems.append(f"record {record.get('id', i)!r}: acronym index must be an integer")
            continue
        gold = record.get("expansion")
        if not tokens:
            problems.append(f"record {sid!r}: token list is empty")
            continue
        if any(t == "" for t in tokens):
            problems.append(f"record {sid!r}: contains an empty token string")
            continue
        if not 0 <= index < len(tokens):
            problems.append(f"record {sid!r}: acronym index {index} out of range for {len(tokens)} tokens")
            continue
        samples.append(Sample(id=sid, tokens=tuple(tokens), acronym_index=index, gold_expansion=gold))
    if problems:
        raise DataValidationError(f"{path}: rejected {len(problems)} record(s): " + "; ".join(problems))
    return samples


def save_dataset(samples, path) -> None:
    """Write samples back out in the load format (round-trip safe)."""
    records = []
    for s in samples:
        record = {"id": s.id, "tokens": list(s.tokens), "acronym": s.acronym_index}
        if s.gold_expansion is not None:
            record["expansion"] = s.gold_expansion
        records.append(record)
    Path(path).write_text(json.dumps(records, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def load_dictionary(path) -> ExpansionDictionary:
    """Load an acronym -> expansions dictionary, preserving expansion order."""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise DataParseError(f"{path}: expected a JSON object mapping acronym to expansion list")
    entries = {}
    for acronym, expansions in data.items():
        if not isinstance(expansions, list) or not all(isinstance(e, str) for e in expansions):
            raise DataValidationError(f"{path}: entry {acronym!r} must map to a list of strings")
        if not expansions:
            raise DataValidationError(f"{path}: entry {acronym!r} has an empty expansion list")
        seen = set()
        for exp in expansions:
            norm = normalize_expansion(exp)
            if norm in seen:
                raise DataValidationError(f"{path}: entry {acronym!r} lists expansion {exp!r} more than once")
            seen.add(norm)
        entries[acronym] = tuple(expansions)
    return ExpansionDictionary(entries=entries)


def save_dictionary(dictionary: ExpansionDictionary, path) -> None:
    data = {acronym: list(exps) for acronym, exps in dictionary.entries.items()}
    Path(path).write_text(json.dumps(data, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class CorpusStats:
    """Histogram-style corpus statistics.

    ``acronyms_per_sentence`` counts distinct sentences (exact token-sequence
    equality; the data has no sentence ids) by how many acronym records they
    carry.  ``expansions_per_acronym`` counts the acronyms occurring in the
    samples by their dictionary candidate count.
    """

    acronyms_per_sentence: dict[int, int]
    expansions_per_acronym: dict[int, int]
    total_samples: int
    distinct_sentences: int
    distinct_acronyms: int
    distinct_expansions: int

    def to_dict(self) -> dict:
        return {
            "acronyms_per_sentence": {str(k): v for k, v in sorted(self.acronyms_per_sentence.items())},
            "expansions_per_acronym": {str(k): v for k, v in sorted(self.expansions_per_acronym.items())},
            "total_samples": self.total_samples,
            "distinct_sentences": self.distinct_sentences,
            "distinct_acronyms": self.distinct_acronyms,
            "distinct_expansions": self.distinct_expansions,
        }


def compute_stats(samples, dictionary: ExpansionDictionary) -> CorpusStats:
    """Corpus statistics over validated samples.

    Totals reconcile by construction: the sentence histogram sums to the
    number of distinct sentences and weights back to ``total_samples``; the
    expansion histogram sums to ``distinct_acronyms``.
    """
    per_sentence = Counter()
    for s in samples:
        per_sentence[s.tokens] += 1
    acronyms_per_sentence = Counter(per_sentence.values())

    observed_acronyms = {s.acronym for s in samples}
    expansions_per_acronym = Counter()
    candidate_expansions = set()
    for acronym in observed_acronyms:
        if acronym in dictionary:
            entry = dictionary.candidates(acronym)
            expansions_per_acronym[len(entry)] += 1
            candidate_expansions.update(normalize_expansion(e) for e in entry)
        else:
            expansions_per_acronym[0] += 1

    return CorpusStats(
        acronyms_per_sentence=dict(acronyms_per_sentence),
        expansions_per_acronym=dict(expansions_per_acronym),
        total_samples=len(samples),
        distinct_sentences=len(per_sentence),
        distinct_acronyms=len(observed_acronyms),
        distinct_expansions=len(candidate_expansions),
    )


def split(samples, dev_fraction: float, seed: int) -> tuple[list[Sample], list[Sample]]:
    """Deterministic train/dev split, stratified on acronyms.

    The dev set receives ``floor(dev_fraction * n)`` samples drawn from a
    seeded shuffle, except that a sample is skipped (kept in train) whenever
    taking it would leave its acronym with no training occurrences while the
    acronym has two or more samples overall.  Train and dev preserve the
    input order of the samples they keep.
    """
    if not 0 < dev_fraction < 1:
        raise ValueError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    n = len(samples)
    quota = int(dev_fraction * n)
    group_sizes = Counter(s.acronym for s in samples)
    remaining_in_train = dict(group_sizes)

    rng = stream_rng(seed, STREAM_SPLIT)
    order = rng.permutation(n)
    dev_indices = set()
    for idx in order:
        if len(dev_indices) >= quota:
            break
        acronym = samples[idx].acronym
        if group_sizes[acronym] >= 2 and remaining_in_train[acronym] <= 1:
            continue
        dev_indices.add(int(idx))
        remaining_in_train[acronym] -= 1

    train = [s for i, s in enumerate(samples) if i not in dev_indices]
    dev = [s for i, s in enumerate(samples) if i in dev_indices]
    return train, dev
