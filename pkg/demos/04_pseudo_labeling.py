"""Confidence harvesting for pseudo-labels.

Trains a model, scores an unlabeled pool, and shows how the confidence
threshold trades harvest size against label quality (we can check quality
here because the synthetic generator knows the hidden truth).
"""

import numpy as np

from acrodis.core_types import TrainConfig, normalize_expansion
from acrodis.data_ingest import split
from acrodis.eval_report import predict_all
from acrodis.pair_builder import build_vocab
from acrodis.pseudo_label import harvest
from acrodis.synthetic import make_toy_corpus, strip_labels
from acrodis.train_engine import TrainingStrategies, train

corpus, dictionary = make_toy_corpus(
    n_acronyms=5, expansions_range=(2, 3), n_samples=600, seed=11,
    cue_noise=0.05, sentence_tokens=(6, 10),
)
labeled, rest = corpus[:400], corpus[400:]
unlabeled, truth = strip_labels(rest)
train_samples, dev_samples = split(labeled, dev_fraction=0.15, seed=0)
tokenizer = build_vocab(train_samples, dictionary)

cfg = TrainConfig(batch_size=32, epochs=20, lr_encoder=2e-3, lr_head=2e-3,
                  lr_decay_factor=0.5, lr_min=5e-4, seed=0)
model, _ = train(train_samples, dev_samples, dictionary, tokenizer, cfg,
                 TrainingStrategies())

best_scores = np.array([
    p.scores[p.selected] for p in predict_all(unlabeled, model, dictionary)
])
print(f"unlabeled pool: {len(unlabeled)} samples")
print(f"best-candidate scores: min {best_scores.min():.3f}, "
      f"median {np.median(best_scores):.3f}, max {best_scores.max():.3f}\n")

print("threshold  harvested  correct")
for threshold in (0.5, 0.8, 0.9, 0.95, 0.99):
    picked = harvest(model, unlabeled, dictionary, threshold=threshold)
    right = sum(
        normalize_expansion(p.assigned_expansion) == normalize_expansion(truth[p.sample.id])
        for p in picked
    )
    share = f"{right}/{len(picked)}" if picked else "-"
    print(f"{threshold:>9}  {len(picked):>9}  {share:>7}")
