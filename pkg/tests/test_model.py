import numpy as np
import pytest

from acrodis.model import (
    BinaryHead,
    DeskEncoder,
    DeskEncoderConfig,
    extract_representation,
    head_forward,
    load_checkpoint,
    load_encoder_checkpoint,
    new_model,
    save_checkpoint,
    save_encoder_checkpoint,
    score_pair,
)
from acrodis.pair_builder import build_pairs
from acrodis.synthetic import make_toy_corpus
from acrodis.train_engine import binary_loss_and_grad

SMALL = DeskEncoderConfig(layers=2, hidden_dim=16, attention_heads=2,
                          feedforward_dim=24, max_positions=64)


def small_model(tiny_corpus, dropout=0.0, seed=0):
    _, _, tok = tiny_corpus
    return new_model(SMALL, tok, dropout_rate=dropout, seed=seed)


def labeled_pairs(tiny_corpus, count):
    samples, dictionary, _ = tiny_corpus
    pairs = [p for s in samples for p in build_pairs(s, dictionary)]
    return pairs[:count]


class TestExtractRepresentation:
    def test_definition(self):
        rng = np.random.default_rng(0)
        ctx = rng.normal(size=(7, 4))
        rep = extract_representation(ctx, 0, (2, 5))
        assert np.allclose(rep[:4], ctx[0])
        assert np.allclose(rep[4:], (ctx[2] + ctx[5]) / 2)

    def test_equal_rows_give_that_row(self):
        ctx = np.tile(np.arange(4.0), (6, 1))
        ctx[3] = [1.0, 2.0, 3.0, 4.0]
        ctx[5] = [1.0, 2.0, 3.0, 4.0]
        rep = extract_representation(ctx, 0, (3, 5))
        assert np.allclose(rep[4:], [1.0, 2.0, 3.0, 4.0])

    def test_two_dim_arithmetic(self):
        ctx = np.zeros((4, 2))
        ctx[0] = [1.0, 0.0]
        ctx[1] = [2.0, 2.0]
        ctx[3] = [4.0, 6.0]
        assert np.allclose(extract_representation(ctx, 0, (1, 3)), [1.0, 0.0, 3.0, 4.0])

    def test_span_out_of_range(self):
        with pytest.raises(IndexError):
            extract_representation(np.zeros((3, 2)), 0, (1, 3))

    def test_linearity(self):
        """Extraction is linear in the contextual matrix."""
        rng = np.random.default_rng(4)
        for _ in range(30):
            a = rng.normal(size=(9, 5))
            b = rng.normal(size=(9, 5))
            alpha, beta = rng.normal(size=2)
            lhs = extract_representation(alpha * a + beta * b, 0, (2, 6))
            rhs = alpha * extract_representation(a, 0, (2, 6)) + beta * extract_representation(b, 0, (2, 6))
            assert np.allclose(lhs, rhs)

    def test_reads_only_three_rows(self):
        """Rows outside cls and the span can change freely."""
        rng = np.random.default_rng(5)
        ctx = rng.normal(size=(10, 3))
        rep = extract_representation(ctx, 0, (4, 7))
        noisy = ctx.copy()
        for row in (1, 2, 3, 5, 6, 8, 9):
            noisy[row] = rng.normal(size=3)
        assert np.array_equal(extract_representation(noisy, 0, (4, 7)), rep)


class TestBinaryHead:
    def test_zero_weights_give_half(self):
        head = BinaryHead(hidden_dim=8, dropout_rate=0.0, seed=0)
        for p in head.parameters():
            p.value[...] = 0.0
        assert head_forward(np.ones(16), head) == pytest.approx(0.5)

    def test_inference_is_deterministic(self):
        head = BinaryHead(hidden_dim=8, dropout_rate=0.5, seed=1)
        rep = np.random.default_rng(2).normal(size=16)
        assert head_forward(rep, head) == head_forward(rep, head)

    def test_score_in_open_interval(self):
        head = BinaryHead(hidden_dim=8, dropout_rate=0.0, seed=3)
        rng = np.random.default_rng(3)
        for _ in range(50):
            s = head_forward(rng.normal(size=16), head)
            assert 0.0 < s < 1.0

    def test_non_finite_input_rejected(self):
        head = BinaryHead(hidden_dim=4, dropout_rate=0.0, seed=0)
        bad = np.full(8, np.nan)
        with pytest.raises(ValueError):
            head_forward(bad, head)

    def test_gradient_matches_finite_differences(self):
        """Analytic d(score)/d(layer2 weights) vs central differences at 5 points."""
        rng = np.random.default_rng(7)
        for point in range(5):
            head = BinaryHead(hidden_dim=6, dropout_rate=0.0, seed=point)
            rep = rng.normal(size=(1, 12))
            for p in head.parameters():
                p.zero_grad()
            scores, _ = head.forward(rep)
            head.backward(np.ones(1))
            W = head.lin2.W
            flat = W.value.reshape(-1)
            gflat = W.grad.reshape(-1)
            for i in rng.choice(flat.size, size=3, replace=False):
                h = 1e-6
                orig = flat[i]
                flat[i] = orig + h
                up, _ = head.forward(rep)
                flat[i] = orig - h
                down, _ = head.forward(rep)
                flat[i] = orig
                fd = (up[0] - down[0]) / (2 * h)
                assert gflat[i] == pytest.approx(fd, rel=1e-4, abs=1e-10)


class TestScorePair:
    def test_scores_in_open_interval(self, tiny_corpus):
        model = small_model(tiny_corpus)
        for pair in labeled_pairs(tiny_corpus, 10):
            assert 0.0 < score_pair(pair, model) < 1.0

    def test_identical_instances_identical_scores(self, tiny_corpus):
        model = small_model(tiny_corpus)
        pair = labeled_pairs(tiny_corpus, 1)[0]
        assert score_pair(pair, model) == score_pair(pair, model)

    def test_random_model_mean_score_near_half(self):
        """Mean over 1,000 instances of a freshly initialized model."""
        samples, dictionary = make_toy_corpus(n_acronyms=5, n_samples=420, seed=17)
        from acrodis.pair_builder import build_vocab

        tok = build_vocab(samples, dictionary)
        model = new_model(SMALL, tok, dropout_rate=0.0, seed=17)
        pairs = [p for s in samples for p in build_pairs(s, dictionary)][:1000]
        assert len(pairs) == 1000
        scores = model.score_instances(pairs)
        assert 0.4 <= float(scores.mean()) <= 0.6

    def test_single_instance_matches_batch(self, tiny_corpus):
        model = small_model(tiny_corpus)
        pairs = labeled_pairs(tiny_corpus, 6)
        batch = model.score_instances(pairs)
        singles = [score_pair(p, model) for p in pairs]
        # same-length batches share padding, so scores agree to fp noise
        assert np.allclose(batch, singles, atol=1e-12)


class TestGradients:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_full_loss_gradients_match_finite_differences(self, tiny_corpus, seed):
        """Every parameter group, 4-instance batch, central differences, 1e-3 relative."""
        model = small_model(tiny_corpus, seed=seed)
        pairs = labeled_pairs(tiny_corpus, 4)
        labels = np.array([p.label for p in pairs], dtype=np.float64)
        formatted = model.format_instances(pairs)

        def loss_value():
            scores, _ = model.forward_batch(formatted, training=False)
            return binary_loss_and_grad(scores, labels)

        for p in model.parameters():
            p.zero_grad()
        _, dscores = loss_value()
        model.backward(dscores)

        rng = np.random.default_rng(100 + seed)
        for group_name, group in model.parameter_groups().items():
            assert group, group_name
            for p in group:
                flat = p.value.reshape(-1)
                gflat = p.grad.reshape(-1)
                for i in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                    # h below the typical distance of ReLU preactivations from
                    # zero, so central differences stay on one linear piece
                    h = 1e-6 * max(1.0, abs(flat[i]))
                    orig = flat[i]
                    flat[i] = orig + h
                    up, _ = loss_value()
                    flat[i] = orig - h
                    down, _ = loss_value()
                    flat[i] = orig
                    fd = (up - down) / (2 * h)
                    rel = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-6)
                    assert rel < 1e-3, f"{group_name}:{p.name}[{i}] rel={rel}"


class TestDeskEncoder:
    def test_heads_must_divide_hidden_dim(self):
        with pytest.raises(ValueError):
            DeskEncoderConfig(hidden_dim=10, attention_heads=4)

    def test_defaults(self):
        cfg = DeskEncoderConfig()
        assert (cfg.layers, cfg.hidden_dim, cfg.attention_heads) == (2, 128, 4)
        assert (cfg.feedforward_dim, cfg.max_positions) == (256, 128)

    def test_sequence_longer_than_positions_rejected(self, tiny_corpus):
        _, _, tok = tiny_corpus
        enc = DeskEncoder(DeskEncoderConfig(layers=1, hidden_dim=8, attention_heads=2,
                                            feedforward_dim=8, max_positions=4),
                          tok.vocab_size)
        ids = np.zeros((1, 6), dtype=np.int64)
        with pytest.raises(ValueError):
            enc.forward(ids, np.zeros_like(ids), np.ones((1, 6)))

    def test_one_output_row_per_token(self, tiny_corpus):
        _, _, tok = tiny_corpus
        enc = DeskEncoder(SMALL, tok.vocab_size, seed=0)
        ids = np.array([[tok.cls_id, 8, 9, tok.sep_id]])
        out = enc.forward(ids, np.zeros_like(ids), np.ones((1, 4)))
        assert out.shape == (1, 4, SMALL.hidden_dim)
        assert np.all(np.isfinite(out))

    def test_padding_does_not_change_real_rows(self, tiny_corpus):
        """Masked keys are invisible: appending padding keeps outputs equal."""
        _, _, tok = tiny_corpus
        enc = DeskEncoder(SMALL, tok.vocab_size, seed=0)
        ids = np.array([[tok.cls_id, 8, 9, 10, tok.sep_id]])
        segs = np.zeros_like(ids)
        out = enc.forward(ids, segs, np.ones((1, 5)))
        padded_ids = np.concatenate([ids, np.full((1, 3), tok.pad_id, dtype=np.int64)], axis=1)
        padded_segs = np.zeros_like(padded_ids)
        mask = np.concatenate([np.ones((1, 5)), np.zeros((1, 3))], axis=1)
        out_padded = enc.forward(padded_ids, padded_segs, mask)
        assert np.allclose(out, out_padded[:, :5, :], atol=1e-12)

    def test_clone_is_equal_but_independent(self, tiny_corpus):
        _, _, tok = tiny_corpus
        enc = DeskEncoder(SMALL, tok.vocab_size, seed=3)
        copy = enc.clone()
        assert all(np.array_equal(a.value, b.value)
                   for a, b in zip(enc.parameters(), copy.parameters()))
        copy.token_embedding.value += 1.0
        assert not np.array_equal(enc.token_embedding.value, copy.token_embedding.value)


class TestCheckpoints:
    def test_model_round_trip(self, tmp_path, tiny_corpus):
        model = small_model(tiny_corpus, dropout=0.1, seed=5)
        provenance = {"tapt": True, "adversarial": False, "pseudo_rounds": 2, "seed": 5}
        path = tmp_path / "model.npz"
        save_checkpoint(path, model, provenance)
        loaded, back = load_checkpoint(path)
        assert back == provenance
        assert loaded.tokenizer == model.tokenizer
        assert loaded.encoder.cfg == model.encoder.cfg
        assert loaded.head.dropout_rate == model.head.dropout_rate
        for name, p in model.named_parameters().items():
            assert np.array_equal(loaded.named_parameters()[name].value, p.value), name

    def test_scores_survive_round_trip(self, tmp_path, tiny_corpus):
        model = small_model(tiny_corpus, seed=2)
        pairs = labeled_pairs(tiny_corpus, 8)
        path = tmp_path / "model.npz"
        save_checkpoint(path, model, {})
        loaded, _ = load_checkpoint(path)
        assert np.array_equal(model.score_instances(pairs), loaded.score_instances(pairs))

    def test_encoder_only_round_trip(self, tmp_path, tiny_corpus):
        _, _, tok = tiny_corpus
        enc = DeskEncoder(SMALL, tok.vocab_size, seed=9)
        path = tmp_path / "encoder.npz"
        save_encoder_checkpoint(path, enc, tok, {"tapt": True})
        loaded, tok_back, provenance = load_encoder_checkpoint(path)
        assert provenance == {"tapt": True}
        assert tok_back == tok
        assert all(np.array_equal(a.value, b.value)
                   for a, b in zip(enc.parameters(), loaded.parameters()))

    def test_full_checkpoint_rejected_by_model_loader_when_encoder_only(self, tmp_path, tiny_corpus):
        _, _, tok = tiny_corpus
        enc = DeskEncoder(SMALL, tok.vocab_size, seed=9)
        path = tmp_path / "encoder.npz"
        save_encoder_checkpoint(path, enc, tok, {})
        with pytest.raises(ValueError):
            load_checkpoint(path)
