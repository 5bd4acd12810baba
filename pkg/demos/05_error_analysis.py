"""Error analysis on a deliberately under-trained model.

Stops training early so errors remain, samples misclassified dev cases, and
prints the rendered report.  Near-identical gold/predicted phrases (for
example singular/plural variants) are tagged automatically.
"""

from acrodis.core_types import ExpansionDictionary, Sample, TrainConfig
from acrodis.data_ingest import split
from acrodis.eval_report import error_report, evaluate, predict_all, render_error_report
from acrodis.pair_builder import build_vocab
from acrodis.synthetic import make_toy_corpus
from acrodis.train_engine import TrainingStrategies, train

samples, dictionary = make_toy_corpus(
    n_acronyms=5, expansions_range=(2, 3), n_samples=300, seed=9, cue_noise=0.1
)
# Append a pair differing only by plural form so the similar-expansion tag fires.
plural_dict = dict(dictionary.entries)
plural_dict["PP"] = ("sum capacity", "sum capacities")
dictionary = ExpansionDictionary(entries=plural_dict)
samples = samples + [
    Sample(id=f"pp{i}", tokens=("the", "PP", "is", "decreasing", f"w{i:02d}"),
           acronym_index=1, gold_expansion="sum capacities")
    for i in range(10)
]

train_samples, dev_samples = split(samples, dev_fraction=0.25, seed=2)
tokenizer = build_vocab(train_samples, dictionary)
cfg = TrainConfig(batch_size=32, epochs=3, lr_encoder=1e-3, lr_head=1e-3,
                  lr_decay_factor=0.5, lr_min=5e-4, seed=0)
model, _ = train(train_samples, dev_samples, dictionary, tokenizer, cfg,
                 TrainingStrategies())

predictions = predict_all(dev_samples, model, dictionary)
report = evaluate(dev_samples, predictions)
print(f"dev macro F1 after 3 epochs: {report.f1:.4f} "
      f"(accuracy {report.micro_accuracy:.4f})\n")

records = error_report(dev_samples, predictions, sample_size=8, seed=0)
print(render_error_report(records))
categories = {}
for record in records:
    categories[record.category] = categories.get(record.category, 0) + 1
print(f"categories: {categories}")
