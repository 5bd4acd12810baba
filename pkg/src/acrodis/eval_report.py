"""Inference over candidate sets, macro metrics, baselines, error reports.

Macro averaging runs over the union of expansion classes seen in gold labels
or predictions; a class that is predicted but never gold contributes recall
0.  The report's ``f1`` is the unweighted mean of per-class F1 (the harmonic
mean of macro precision and macro recall is exposed alongside it, since both
conventions exist in the wild).  Micro accuracy is included for comparison
with accuracy-style scoreboards.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from acrodis.core_types import (
    ClassMetrics,
    ExpansionDictionary,
    MetricsReport,
    Sample,
    ScoredPrediction,
    normalize_expansion,
)
from acrodis.model import PairClassifier
from acrodis.pair_builder import build_pairs
from acrodis.util import STREAM_REPORT, stream_rng

SIMILAR_EXPANSION_DISTANCE = 0.2
INFERENCE_BATCH_ROWS = 256


class UnknownAcronymError(KeyError):
    """Raised when a sample's acronym has no dictionary candidates."""


def predict(sample: Sample, model: PairClassifier, dictionary: ExpansionDictionary) -> ScoredPrediction:
    """Score every dictionary candidate and select the argmax.

    Ties go to the earlier candidate in dictionary order; dropout is off.
    """
    return predict_all([sample], model, dictionary)[0]


def predict_all(samples, model: PairClassifier, dictionary: ExpansionDictionary,
                batch_rows: int = INFERENCE_BATCH_ROWS) -> list[ScoredPrediction]:
    """Batched inference across samples; one ScoredPrediction per input sample."""
    instances = []
    owners = []
    for idx, sample in enumerate(samples):
        if sample.acronym not in dictionary:
            raise UnknownAcronymError(
                f"acronym {sample.acronym!r} (sample {sample.id!r}) not in dictionary"
            )
        unlabeled = Sample(id=sample.id, tokens=sample.tokens,
                           acronym_index=sample.acronym_index, gold_expansion=None)
        for inst in build_pairs(unlabeled, dictionary):
            instances.append(inst)
            owners.append(idx)

    scores = np.empty(len(instances))
    for lo in range(0, len(instances), batch_rows):
        chunk = instances[lo : lo + batch_rows]
        scores[lo : lo + len(chunk)] = model.score_instances(chunk, training=False)

    per_sample: dict[int, dict[str, float]] = defaultdict(dict)
    for inst, owner, score in zip(instances, owners, scores):
        per_sample[owner][inst.expansion] = float(score)
    return [
        ScoredPrediction.from_scores(sample.id, per_sample[idx])
        for idx, sample in enumerate(samples)
    ]


def evaluate(samples, predictions) -> MetricsReport:
    """Macro precision/recall/F1 over expansion classes, plus micro accuracy.

    Every sample must be labeled and covered by a prediction; per-class
    counts come from the multi-class confusion between gold and selected
    expansions.
    """
    by_id = {p.sample_id: p for p in predictions}
    tp: Counter = Counter()
    fp: Counter = Counter()
    fn: Counter = Counter()
    display: dict[str, str] = {}
    correct = 0
    total = 0
    for sample in samples:
        if sample.gold_expansion is None:
            raise ValueError(f"sample {sample.id!r} is unlabeled; evaluation needs gold expansions")
        if sample.id not in by_id:
            raise ValueError(f"missing prediction for sample {sample.id!r}")
        gold = normalize_expansion(sample.gold_expansion)
        chosen = normalize_expansion(by_id[sample.id].selected)
        display.setdefault(gold, sample.gold_expansion)
        display.setdefault(chosen, by_id[sample.id].selected)
        total += 1
        if gold == chosen:
            tp[gold] += 1
            correct += 1
        else:
            fn[gold] += 1
            fp[chosen] += 1

    classes = sorted(set(tp) | set(fp) | set(fn))
    per_expansion = {}
    for cls in classes:
        predicted = tp[cls] + fp[cls]
        gold_count = tp[cls] + fn[cls]
        precision = tp[cls] / predicted if predicted else 0.0
        recall = tp[cls] / gold_count if gold_count else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_expansion[display[cls]] = ClassMetrics(precision, recall, f1, gold_count)

    k = len(per_expansion)
    return MetricsReport(
        precision=sum(m.precision for m in per_expansion.values()) / k if k else 0.0,
        recall=sum(m.recall for m in per_expansion.values()) / k if k else 0.0,
        f1=sum(m.f1 for m in per_expansion.values()) / k if k else 0.0,
        micro_accuracy=correct / total if total else 0.0,
        per_expansion=per_expansion,
    )


def mf_predictions(train_samples, eval_samples, dictionary: ExpansionDictionary) -> list[ScoredPrediction]:
    """Most-frequent-expansion predictions with dictionary-order tie-breaks.

    Candidate scores are training-frequency fractions, so an acronym unseen
    in training scores all zero and falls back to the first dictionary
    candidate.
    """
    counts: dict[str, Counter] = defaultdict(Counter)
    for sample in train_samples:
        if sample.gold_expansion is not None:
            counts[sample.acronym][normalize_expansion(sample.gold_expansion)] += 1

    predictions = []
    for sample in eval_samples:
        if sample.acronym not in dictionary:
            raise UnknownAcronymError(
                f"acronym {sample.acronym!r} (sample {sample.id!r}) not in dictionary"
            )
        seen = counts.get(sample.acronym, Counter())
        total = sum(seen.values())
        scores = {
            cand: (seen[normalize_expansion(cand)] / total if total else 0.0)
            for cand in dictionary.candidates(sample.acronym)
        }
        predictions.append(ScoredPrediction.from_scores(sample.id, scores))
    return predictions


def mf_baseline(train_samples, eval_samples, dictionary: ExpansionDictionary) -> MetricsReport:
    """Score the most-frequent-training-expansion rule on ``eval_samples``."""
    if not train_samples:
        raise ValueError("the most-frequent baseline needs a non-empty training set")
    return evaluate(eval_samples, mf_predictions(train_samples, eval_samples, dictionary))


def levenshtein(a: str, b: str) -> int:
    """Character edit distance (insert / delete / substitute, unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    """Edit distance scaled by the summed string lengths (0 for two empties).

    Length-sum scaling keeps singular/plural variants of multiword phrases
    under the similar-expansion threshold, which max-length scaling misses.
    """
    a = normalize_expansion(a)
    b = normalize_expansion(b)
    denom = len(a) + len(b)
    return levenshtein(a, b) / denom if denom else 0.0


@dataclass(frozen=True)
class ErrorRecord:
    """One misclassified sample with enough context to categorize it."""

    sample_id: str
    sentence: str
    acronym: str
    gold_expansion: str
    predicted_expansion: str
    scores: dict[str, float]
    category: str

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "sentence": self.sentence,
            "acronym": self.acronym,
            "gold_expansion": self.gold_expansion,
            "predicted_expansion": self.predicted_expansion,
            "scores": self.scores,
            "category": self.category,
        }


def error_report(samples, predictions, sample_size: int, seed: int) -> list[ErrorRecord]:
    """Uniform sample of misclassified cases, auto-tagging near-identical pairs.

    Gold/prediction pairs within :data:`SIMILAR_EXPANSION_DISTANCE` normalized
    edit distance are tagged ``similar-expansions`` (singular/plural and other
    surface variants); everything else stays ``unassigned`` for manual triage.
    Record order follows the input sample order and reruns are identical
    under the same seed.
    """
    by_id = {p.sample_id: p for p in predictions}
    records = []
    for sample in samples:
        if sample.gold_expansion is None or sample.id not in by_id:
            continue
        prediction = by_id[sample.id]
        if normalize_expansion(prediction.selected) == normalize_expansion(sample.gold_expansion):
            continue
        distance = normalized_edit_distance(sample.gold_expansion, prediction.selected)
        records.append(
            ErrorRecord(
                sample_id=sample.id,
                sentence=sample.sentence,
                acronym=sample.acronym,
                gold_expansion=sample.gold_expansion,
                predicted_expansion=prediction.selected,
                scores=dict(prediction.scores),
                category="similar-expansions" if distance < SIMILAR_EXPANSION_DISTANCE else "unassigned",
            )
        )
    if len(records) > sample_size:
        rng = stream_rng(seed, STREAM_REPORT)
        keep = sorted(rng.choice(len(records), size=sample_size, replace=False))
        records = [records[i] for i in keep]
    return records


def render_error_report(records) -> str:
    """Human-readable rendering of an error report."""
    if not records:
        return "No misclassified samples.\n"
    lines = [f"{len(records)} misclassified sample(s)", ""]
    for r in records:
        lines.append(f"sample {r.sample_id}  [{r.category}]")
        lines.append(f"  sentence:  {r.sentence}")
        lines.append(f"  acronym:   {r.acronym}")
        lines.append(f"  gold:      {r.gold_expansion}")
        lines.append(f"  predicted: {r.predicted_expansion}")
        ranked = sorted(r.scores.items(), key=lambda kv: -kv[1])
        lines.append("  scores:    " + ", ".join(f"{e}={s:.4f}" for e, s in ranked))
        lines.append("")
    return "\n".join(lines)


# -- file formats -------------------------------------------------------------


def save_predictions(predictions, path) -> None:
    data = [{"id": p.sample_id, "selected": p.selected, "scores": p.scores} for p in predictions]
    Path(path).write_text(json.dumps(data, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def load_predictions(path) -> list[ScoredPrediction]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        ScoredPrediction(sample_id=r["id"], scores=dict(r["scores"]), selected=r["selected"])
        for r in data
    ]


def save_metrics(report: MetricsReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def save_error_report(records, json_path, text_path: Optional[str] = None) -> None:
    Path(json_path).write_text(
        json.dumps([r.to_dict() for r in records], ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
    if text_path is not None:
        Path(text_path).write_text(render_error_report(records), encoding="utf-8")
