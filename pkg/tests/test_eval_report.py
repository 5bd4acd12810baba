import numpy as np
import pytest

from acrodis.core_types import ExpansionDictionary, Sample, ScoredPrediction
from acrodis.eval_report import (
    UnknownAcronymError,
    error_report,
    evaluate,
    levenshtein,
    load_predictions,
    mf_baseline,
    mf_predictions,
    normalized_edit_distance,
    predict,
    predict_all,
    render_error_report,
    save_predictions,
)
from acrodis.model import DeskEncoderConfig, new_model
from acrodis.synthetic import make_toy_corpus


class ScriptedModel:
    def __init__(self, table):
        self.table = table

    def score_instances(self, instances, training=False, rng=None):
        return np.array([self.table[(p.sample_id, p.expansion)] for p in instances])


def labeled(sid, gold):
    return Sample(id=sid, tokens=("SVM", "w"), acronym_index=0, gold_expansion=gold)


class TestPredict:
    def _dictionary(self):
        return ExpansionDictionary(
            entries={"SVM": ("support vector machine", "state vector machine")}
        )

    def test_highest_score_wins(self, svm_sample):
        model = ScriptedModel({
            ("svm-1", "support vector machine"): 0.8,
            ("svm-1", "state vector machine"): 0.3,
        })
        pred = predict(svm_sample, model, self._dictionary())
        assert pred.selected == "support vector machine"
        assert set(pred.scores) == set(self._dictionary().candidates("SVM"))

    def test_exact_tie_goes_to_dictionary_order(self, svm_sample):
        model = ScriptedModel({
            ("svm-1", "support vector machine"): 0.5,
            ("svm-1", "state vector machine"): 0.5,
        })
        assert predict(svm_sample, model, self._dictionary()).selected == "support vector machine"

    def test_single_candidate_always_selected(self):
        d = ExpansionDictionary(entries={"AA": ("only one",)})
        sample = Sample(id="s", tokens=("AA",), acronym_index=0)
        model = ScriptedModel({("s", "only one"): 0.001})
        assert predict(sample, model, d).selected == "only one"

    def test_unknown_acronym_named(self):
        sample = Sample(id="s", tokens=("WAT",), acronym_index=0)
        with pytest.raises(UnknownAcronymError, match="WAT"):
            predict(sample, ScriptedModel({}), ExpansionDictionary(entries={}))

    def test_batched_inference_matches_per_sample(self, tiny_corpus):
        samples, dictionary, tok = tiny_corpus
        cfg = DeskEncoderConfig(layers=1, hidden_dim=16, attention_heads=2,
                                feedforward_dim=24, max_positions=64)
        model = new_model(cfg, tok, dropout_rate=0.0, seed=0)
        batched = predict_all(samples[:8], model, dictionary, batch_rows=5)
        for sample, pred in zip(samples[:8], batched):
            assert predict(sample, model, dictionary).selected == pred.selected


class TestEvaluate:
    def test_all_correct_is_perfect(self):
        samples = [labeled("a", "x"), labeled("b", "y")]
        preds = [ScoredPrediction("a", {"x": 0.9}, "x"), ScoredPrediction("b", {"y": 0.9}, "y")]
        report = evaluate(samples, preds)
        assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)
        assert report.micro_accuracy == 1.0

    def test_hand_computed_confusion(self):
        """gold (A, A, B) vs predicted (A, B, B): macro P = R = 0.75, F1 = 2/3."""
        samples = [labeled("1", "A"), labeled("2", "A"), labeled("3", "B")]
        preds = [
            ScoredPrediction("1", {"A": 0.9, "B": 0.1}, "A"),
            ScoredPrediction("2", {"A": 0.2, "B": 0.8}, "B"),
            ScoredPrediction("3", {"A": 0.1, "B": 0.9}, "B"),
        ]
        report = evaluate(samples, preds)
        assert report.precision == pytest.approx(0.75, abs=1e-9)
        assert report.recall == pytest.approx(0.75, abs=1e-9)
        assert report.f1 == pytest.approx(2 / 3, abs=1e-9)
        assert report.micro_accuracy == pytest.approx(2 / 3, abs=1e-9)

    def test_class_predicted_but_never_gold_counts_zero_recall(self):
        samples = [labeled("1", "A")]
        preds = [ScoredPrediction("1", {"A": 0.4, "C": 0.6}, "C")]
        report = evaluate(samples, preds)
        assert set(report.per_expansion) == {"A", "C"}
        assert report.per_expansion["C"].recall == 0.0
        assert report.per_expansion["C"].support == 0
        assert report.f1 == 0.0

    def test_permutation_invariance(self):
        samples = [labeled(str(i), "AB"[i % 2]) for i in range(10)]
        preds = [ScoredPrediction(str(i), {"A": 0.5, "B": 0.4}, "A") for i in range(10)]
        forward = evaluate(samples, preds)
        backward = evaluate(samples[::-1], preds[::-1])
        assert forward == backward

    def test_missing_prediction_rejected(self):
        with pytest.raises(ValueError, match="missing prediction"):
            evaluate([labeled("1", "A")], [])

    def test_unlabeled_sample_rejected(self):
        bare = Sample(id="1", tokens=("SVM",), acronym_index=0)
        with pytest.raises(ValueError, match="unlabeled"):
            evaluate([bare], [ScoredPrediction("1", {"A": 0.5}, "A")])

    def test_macro_f1_is_one_only_when_every_class_perfect(self):
        rng = np.random.default_rng(1)
        classes = ["A", "B", "C"]
        for _ in range(50):
            golds = [classes[int(rng.integers(3))] for _ in range(12)]
            flips = rng.random(12) < 0.3
            chosen = [classes[int(rng.integers(3))] if f else g for g, f in zip(golds, flips)]
            samples = [labeled(str(i), g) for i, g in enumerate(golds)]
            preds = [ScoredPrediction(str(i), {c: 0.5 for c in classes}, s)
                     for i, s in enumerate(chosen)]
            report = evaluate(samples, preds)
            assert report.f1 <= 1.0 + 1e-12
            if all(g == s for g, s in zip(golds, chosen)):
                assert report.f1 == pytest.approx(1.0)
            elif report.f1 == pytest.approx(1.0):
                pytest.fail("macro F1 reached 1.0 with at least one error")


class TestMfBaseline:
    def _dictionary(self):
        return ExpansionDictionary(entries={"SVM": ("X", "Y"), "GAN": ("g one", "g two")})

    def test_majority_vote(self):
        train = [labeled("1", "X"), labeled("2", "X"), labeled("3", "X"), labeled("4", "Y")]
        evald = [labeled("e1", "Y"), labeled("e2", "X")]
        preds = mf_predictions(train, evald, self._dictionary())
        assert [p.selected for p in preds] == ["X", "X"]

    def test_unseen_acronym_falls_back_to_first_candidate(self):
        train = [labeled("1", "X")]
        sample = Sample(id="g", tokens=("GAN",), acronym_index=0, gold_expansion="g two")
        preds = mf_predictions(train, [sample], self._dictionary())
        assert preds[0].selected == "g one"

    def test_count_tie_goes_to_dictionary_order(self):
        train = [labeled("1", "Y"), labeled("2", "X")]
        preds = mf_predictions(train, [labeled("e", "Y")], self._dictionary())
        assert preds[0].selected == "X"

    def test_hand_computed_toy_report(self):
        """3x alpha + 1x beta in train; eval 2 alpha + 2 beta -> per-class by hand.

        MF predicts alpha everywhere: alpha P=0.5 R=1, beta P=0 R=0, so
        macro P=0.25, macro R=0.5, macro F1=(2/3)/2=1/3, accuracy 0.5.
        """
        d = ExpansionDictionary(entries={"AA": ("alpha", "beta")})
        mk = lambda sid, gold: Sample(id=sid, tokens=("AA",), acronym_index=0, gold_expansion=gold)
        train = [mk("t1", "alpha"), mk("t2", "alpha"), mk("t3", "alpha"), mk("t4", "beta")]
        evald = [mk("e1", "alpha"), mk("e2", "alpha"), mk("e3", "beta"), mk("e4", "beta")]
        report = mf_baseline(train, evald, d)
        assert report.precision == pytest.approx(0.25)
        assert report.recall == pytest.approx(0.5)
        assert report.f1 == pytest.approx(1 / 3)
        assert report.micro_accuracy == pytest.approx(0.5)

    def test_dominated_by_perfect_predictions(self):
        samples, dictionary = make_toy_corpus(n_acronyms=4, n_samples=60, seed=6)
        train, evald = samples[:40], samples[40:]
        mf = mf_baseline(train, evald, dictionary)
        perfect = evaluate(evald, [
            ScoredPrediction(s.id, {s.gold_expansion: 1.0}, s.gold_expansion) for s in evald
        ])
        assert mf.f1 <= perfect.f1

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            mf_baseline([], [labeled("e", "X")], self._dictionary())


class TestEditDistance:
    def test_levenshtein_basics(self):
        assert levenshtein("", "") == 0
        assert levenshtein("abc", "") == 3
        assert levenshtein("kitten", "sitting") == 3
        assert levenshtein("same", "same") == 0

    def test_singular_plural_is_similar(self):
        assert normalized_edit_distance("sum capacities", "sum capacity") < 0.2

    def test_unrelated_phrases_are_not_similar(self):
        assert normalized_edit_distance("machine learning", "model logic") >= 0.2


class TestErrorReport:
    def _setup(self, n_errors, n_total):
        d = {"A": 0.4, "B": 0.6}
        samples, preds = [], []
        for i in range(n_total):
            gold = "A"
            chosen = "B" if i < n_errors else "A"
            samples.append(labeled(str(i), gold))
            preds.append(ScoredPrediction(str(i), dict(d), chosen))
        return samples, preds

    def test_zero_errors_empty_report(self):
        samples, preds = self._setup(0, 5)
        assert error_report(samples, preds, sample_size=10, seed=0) == []

    def test_singular_plural_tagged_similar(self):
        samples = [labeled("1", "sum capacities")]
        preds = [ScoredPrediction("1", {"sum capacities": 0.4, "sum capacity": 0.6},
                                  "sum capacity")]
        records = error_report(samples, preds, sample_size=10, seed=0)
        assert records[0].category == "similar-expansions"

    def test_distant_pair_left_unassigned(self):
        samples = [labeled("1", "machine learning")]
        preds = [ScoredPrediction("1", {"machine learning": 0.4, "model logic": 0.6},
                                  "model logic")]
        assert error_report(samples, preds, 10, 0)[0].category == "unassigned"

    def test_sampling_is_deterministic_and_sized(self):
        samples, preds = self._setup(250, 300)
        first = error_report(samples, preds, sample_size=100, seed=9)
        second = error_report(samples, preds, sample_size=100, seed=9)
        assert len(first) == 100
        assert first == second
        other = error_report(samples, preds, sample_size=100, seed=10)
        assert other != first

    def test_fewer_errors_than_sample_size_keeps_all(self):
        samples, preds = self._setup(7, 20)
        assert len(error_report(samples, preds, sample_size=100, seed=0)) == 7

    def test_rendering_mentions_gold_and_prediction(self):
        samples, preds = self._setup(1, 2)
        text = render_error_report(error_report(samples, preds, 10, 0))
        assert "gold" in text and "predicted" in text
        assert render_error_report([]) == "No misclassified samples.\n"


class TestPredictionFiles:
    def test_round_trip(self, tmp_path):
        preds = [
            ScoredPrediction("a", {"x": 0.75, "y": 0.25}, "x"),
            ScoredPrediction("b", {"x": 0.5, "y": 0.5}, "x"),
        ]
        path = tmp_path / "preds.json"
        save_predictions(preds, path)
        assert load_predictions(path) == preds
