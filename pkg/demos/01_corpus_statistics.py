"""Corpus statistics on a synthetic disambiguation dataset.

Builds a toy corpus, saves it in the on-disk JSON formats, and renders the
two standard histograms: how many acronym records share one sentence, and
how many candidate expansions each acronym carries.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from acrodis.data_ingest import compute_stats, save_dataset, save_dictionary
from acrodis.synthetic import make_toy_corpus

out = Path(__file__).parent / "output" / "01_stats"
out.mkdir(parents=True, exist_ok=True)

# A corpus with 8 acronyms carrying 2-5 candidates each.
samples, dictionary = make_toy_corpus(
    n_acronyms=8, expansions_range=(2, 5), n_samples=400, seed=0
)
save_dataset(samples, out / "corpus.json")
save_dictionary(dictionary, out / "dictionary.json")

stats = compute_stats(samples, dictionary)
print(f"samples:             {stats.total_samples}")
print(f"distinct sentences:  {stats.distinct_sentences}")
print(f"distinct acronyms:   {stats.distinct_acronyms}")
print(f"distinct expansions: {stats.distinct_expansions}")
print(f"acronyms / sentence: {stats.acronyms_per_sentence}")
print(f"expansions / acronym: {stats.expansions_per_acronym}")

fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, histogram, title in [
    (axes[0], stats.acronyms_per_sentence, "acronyms per sentence"),
    (axes[1], stats.expansions_per_acronym, "expansions per acronym"),
]:
    keys = sorted(histogram)
    ax.bar([str(k) for k in keys], [histogram[k] for k in keys], color="#4878a8")
    ax.set_title(f"Number of {title}")
    ax.set_ylabel("count")
fig.tight_layout()
fig.savefig(out / "histograms.png", dpi=120)
print(f"\nwrote {out}/histograms.png")
