"""Cumulative strategy ablation on one synthetic corpus.

Reproduces the classic ablation table shape: start from plain training and
stack dynamic negative sampling, task-adaptive pretraining, adversarial
perturbation, and one pseudo-labeling round, reporting held-out metrics per
row.  Desk-scale numbers move around with seeds; directions, not magnitudes,
are the point.
"""

from acrodis.core_types import TrainConfig
from acrodis.data_ingest import split
from acrodis.eval_report import evaluate, predict_all
from acrodis.model import DeskEncoder, DeskEncoderConfig
from acrodis.pair_builder import build_vocab
from acrodis.pseudo_label import harvest, merge_and_retrain
from acrodis.synthetic import make_toy_corpus, strip_labels
from acrodis.tapt_pretrain import tapt_train
from acrodis.train_engine import TrainingStrategies, train

corpus, dictionary = make_toy_corpus(
    n_acronyms=6, expansions_range=(3, 4), n_samples=700, seed=23,
    cue_noise=0.08, sentence_tokens=(5, 8),
)
labeled, rest = corpus[:500], corpus[500:]
unlabeled, _ = strip_labels(rest)
train_samples, dev_samples = split(labeled, dev_fraction=0.2, seed=1)
tokenizer = build_vocab(train_samples, dictionary)

encoder_cfg = DeskEncoderConfig(layers=2, hidden_dim=48, attention_heads=4,
                                feedforward_dim=96, max_positions=64)
cfg = TrainConfig(batch_size=32, epochs=16, lr_encoder=2e-3, lr_head=2e-3,
                  lr_decay_factor=0.5, lr_min=2e-3, adversarial_epsilon=0.1, seed=0)


def dev_f1(model):
    return evaluate(dev_samples, predict_all(dev_samples, model, dictionary)).f1


rows = []

model, _ = train(train_samples, dev_samples, dictionary, tokenizer, cfg,
                 TrainingStrategies(dynamic_negatives=False), encoder_cfg=encoder_cfg)
rows.append(("plain training", dev_f1(model)))

model, _ = train(train_samples, dev_samples, dictionary, tokenizer, cfg,
                 TrainingStrategies(dynamic_negatives=True), encoder_cfg=encoder_cfg)
rows.append(("+ dynamic negative sampling", dev_f1(model)))

pretrained = DeskEncoder(encoder_cfg, tokenizer.vocab_size, seed=cfg.seed)
tapt_train(train_samples + unlabeled, dictionary, pretrained, tokenizer, epochs=20, cfg=cfg)
model, _ = train(train_samples, dev_samples, dictionary, tokenizer, cfg,
                 TrainingStrategies(dynamic_negatives=True), initial_encoder=pretrained)
rows.append(("+ task-adaptive pretraining", dev_f1(model)))

strategies = TrainingStrategies(dynamic_negatives=True, adversarial=True)
model, _ = train(train_samples, dev_samples, dictionary, tokenizer, cfg,
                 strategies, initial_encoder=pretrained)
rows.append(("+ adversarial training", dev_f1(model)))

pseudo = harvest(model, unlabeled, dictionary, threshold=cfg.pseudo_threshold)
print(f"(pseudo round harvested {len(pseudo)} of {len(unlabeled)} unlabeled samples)")
model, _ = merge_and_retrain(train_samples, pseudo, dev_samples, dictionary, tokenizer,
                             cfg, strategies, initial_encoder=pretrained)
rows.append(("+ pseudo-labeling", dev_f1(model)))

width = max(len(name) for name, _ in rows)
print(f"\n{'configuration':<{width}}  dev macro F1")
for name, f1 in rows:
    print(f"{name:<{width}}  {f1:.4f}")
