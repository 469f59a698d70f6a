import numpy as np
import pytest

from denshift.data import NormStats
from denshift.errors import ValidationError
from denshift.losses import ce, dah_softmax
from denshift.nn import (
    OptState,
    backward,
    export_embeddings,
    forward,
    grad_check,
    init_mlp,
    load_checkpoint,
    opt_step,
    save_checkpoint,
)


def zero_params(params):
    for arr in params.flat():
        arr[:] = 0.0
    return params


class TestInit:
    def test_shapes_match_backbone_contract(self):
        p = init_mlp(86, hidden=28, depth=4, n_classes=2, seed=0)
        assert p.backbone[0].W.shape == (86, 28)
        assert len(p.backbone) == 3  # 3 backbone matrices + 1 head matrix per path
        assert p.head_regular.W.shape == (28, 2)
        assert p.head_balanced.W.shape == (28, 2)
        assert p.resid_span == (1, 2)

    def test_seeded_determinism(self):
        a = init_mlp(10, seed=42)
        b = init_mlp(10, seed=42)
        for x, y in zip(a.flat(), b.flat()):
            assert np.array_equal(x, y)

    def test_init_scale_and_zero_biases(self):
        p = init_mlp(100, hidden=28, seed=1)
        assert np.abs(p.backbone[0].W).max() <= 1.0 / np.sqrt(100)
        assert np.array_equal(p.backbone[0].b, np.zeros(28))

    def test_bad_dims(self):
        with pytest.raises(ValidationError):
            init_mlp(0)
        with pytest.raises(ValidationError):
            init_mlp(4, depth=1)


class TestForward:
    def test_zero_weights_give_zero_logits(self):
        p = zero_params(init_mlp(6, seed=0))
        trace = forward(p, np.random.default_rng(0).normal(size=(5, 6)))
        assert np.array_equal(trace.logits_regular, np.zeros((5, 2)))
        assert np.array_equal(trace.logits_balanced, np.zeros((5, 2)))

    def test_hand_computed_single_hidden_layer(self):
        # depth=2: one backbone matrix + one head matrix, no residual block
        p = init_mlp(2, hidden=3, depth=2, n_classes=2, seed=0)
        assert p.resid_span is None
        w0 = np.array([[1.0, 0.0, -1.0], [0.0, 2.0, 1.0]])
        b0 = np.array([0.1, -0.2, 0.0])
        wr = np.array([[1.0, -1.0], [0.5, 0.5], [2.0, 0.0]])
        br = np.array([0.0, 1.0])
        p.backbone[0].W[:] = w0
        p.backbone[0].b[:] = b0
        p.head_regular.W[:] = wr
        p.head_regular.b[:] = br
        x = np.array([[1.0, 2.0]])
        hidden = np.maximum(x @ w0 + b0, 0.0)
        expected = hidden @ wr + br
        trace = forward(p, x)
        assert np.abs(trace.logits_regular - expected).max() < 1e-12

    def test_batch_shapes(self):
        p = init_mlp(7, n_classes=3, seed=0)
        trace = forward(p, np.zeros((128, 7)))
        assert trace.logits_regular.shape == (128, 3)
        assert trace.logits_balanced.shape == (128, 3)

    def test_shape_mismatch(self):
        p = init_mlp(7, seed=0)
        with pytest.raises(ValidationError):
            forward(p, np.zeros((4, 5)))

    def test_residual_block_identity_when_inner_weights_zero(self):
        p = init_mlp(6, hidden=5, depth=4, seed=3)
        for l in p.resid_span:
            p.backbone[l].W[:] = 0.0
            p.backbone[l].b[:] = 0.0
        x = np.random.default_rng(1).normal(size=(9, 6))
        trace = forward(p, x)
        first = np.maximum(x @ p.backbone[0].W + p.backbone[0].b, 0.0)
        assert np.array_equal(trace.hidden, first)

    def test_forward_reproducible(self):
        p = init_mlp(6, seed=5)
        x = np.random.default_rng(2).normal(size=(4, 6))
        a = forward(p, x)
        b = forward(p, x)
        assert np.array_equal(a.logits_regular, b.logits_regular)
        assert np.array_equal(a.logits_balanced, b.logits_balanced)


def model_loss(params, x, y, head="regular", deltas=None):
    trace = forward(params, x)
    logits = trace.logits_regular if head == "regular" else trace.logits_balanced
    if deltas is None:
        loss, d = ce(logits, y)
    else:
        loss, d = dah_softmax(logits, y, deltas)
    kw = {"d_logits_regular": d} if head == "regular" else {"d_logits_balanced": d}
    return loss, backward(params, trace, **kw).flat()


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        p = init_mlp(5, seed=0)
        x = np.random.default_rng(0).normal(size=(3, 5))
        trace = forward(p, x)
        grads = backward(p, trace, np.zeros((3, 2)), np.zeros((3, 2)))
        for g in grads.flat():
            assert np.array_equal(g, np.zeros_like(g))

    def test_masked_head_gets_exact_zero(self):
        p = init_mlp(5, seed=1)
        x = np.random.default_rng(1).normal(size=(6, 5))
        y = np.array([0, 1, 0, 1, 0, 1])
        trace = forward(p, x)
        _, d = ce(trace.logits_balanced, y)
        grads = backward(p, trace, d_logits_balanced=d)
        assert np.array_equal(grads.head_regular.W, np.zeros_like(grads.head_regular.W))
        assert np.array_equal(grads.head_regular.b, np.zeros_like(grads.head_regular.b))
        assert np.abs(grads.head_balanced.W).max() > 0

    def test_backbone_gradient_is_sum_of_heads(self):
        p = init_mlp(5, seed=2)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 5))
        trace = forward(p, x)
        dr = rng.normal(size=(6, 2))
        db = rng.normal(size=(6, 2))
        both = backward(p, trace, dr, db)
        only_r = backward(p, trace, d_logits_regular=dr)
        only_b = backward(p, trace, d_logits_balanced=db)
        for g, gr, gb in zip(both.flat(), only_r.flat(), only_b.flat()):
            assert np.abs(g - (gr + gb)).max() < 1e-12

    def test_gradcheck_through_full_model(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            p = init_mlp(6, hidden=10, depth=4, n_classes=3, seed=seed)
            x = rng.normal(size=(8, 6))
            y = rng.integers(0, 3, size=8)
            deltas = rng.uniform(0.1, 0.6, size=3)

            def fn(arrays, batch, _p=p, _d=deltas):
                return model_loss(_p, batch[0], batch[1], head="balanced", deltas=_d)

            err = grad_check(fn, p.flat(), (x, y), eps=1e-5, n_samples=200, seed=seed)
            assert err < 1e-4

    def test_gradcheck_with_normalized_balanced_head(self):
        for seed in range(3):
            rng = np.random.default_rng(100 + seed)
            p = init_mlp(6, hidden=10, depth=4, n_classes=2, seed=seed, normalize_balanced=True)
            x = rng.normal(size=(8, 6)) + 0.5
            y = rng.integers(0, 2, size=8)

            def fn(arrays, batch, _p=p):
                return model_loss(_p, batch[0], batch[1], head="balanced")

            err = grad_check(fn, p.flat(), (x, y), eps=1e-5, n_samples=200, seed=seed)
            assert err < 1e-4

    def test_linear_model_squared_loss_is_exact(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(4, 1))
        x = rng.normal(size=(10, 4))
        t = rng.normal(size=(10, 1))

        def fn(arrays, batch):
            pred = batch[0] @ arrays[0]
            resid = pred - batch[1]
            return float((resid**2).sum()), [2.0 * batch[0].T @ resid]

        err = grad_check(fn, [w], (x, t), eps=1e-5, n_samples=200, seed=0)
        assert err < 1e-9


class TestOptimizers:
    def test_sgd_step(self):
        p = [np.array([1.0])]
        opt = OptState.for_arrays(p, "sgd", lr=0.1)
        opt_step(p, [np.array([2.0])], opt)
        assert p[0][0] == pytest.approx(0.8)

    def test_adam_first_step_magnitude_is_lr(self):
        for g in (1e-4, 1.0, 1e4):
            p = [np.array([0.0])]
            opt = OptState.for_arrays(p, "adam", lr=0.01)
            opt_step(p, [np.array([g])], opt)
            assert abs(p[0][0]) == pytest.approx(0.01, rel=1e-3)

    def test_zero_gradient_keeps_parameters(self):
        for kind in ("sgd", "adam"):
            p = [np.array([1.5, -2.0])]
            opt = OptState.for_arrays(p, kind, lr=0.1)
            opt_step(p, [np.zeros(2)], opt)
            assert np.array_equal(p[0], np.array([1.5, -2.0]))

    def test_adam_bias_correction_reference(self):
        # two constant-gradient steps, checked against the textbook update rule
        p = [np.array([0.0])]
        opt = OptState.for_arrays(p, "adam", lr=0.1)
        g = np.array([3.0])
        m = v = 0.0
        ref = 0.0
        for t in (1, 2):
            m = 0.9 * m + 0.1 * 3.0
            v = 0.999 * v + 0.001 * 9.0
            ref -= 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
            opt_step(p, [g], opt)
        assert p[0][0] == pytest.approx(ref, abs=1e-15)

    def test_deterministic_trajectory(self):
        histories = []
        for _ in range(2):
            p = init_mlp(5, seed=3)
            arrays = p.flat()
            opt = OptState.for_arrays(arrays, "adam", lr=1e-3)
            rng = np.random.default_rng(0)
            x = rng.normal(size=(8, 5))
            y = rng.integers(0, 2, size=8)
            for _ in range(3):
                _, grads = model_loss(p, x, y)
                opt_step(arrays, grads, opt)
            histories.append([a.copy() for a in arrays])
        for a, b in zip(*histories):
            assert np.array_equal(a, b)


class TestEmbeddingsAndCheckpoints:
    def test_embedding_shape_and_determinism(self, tmp_path):
        p = init_mlp(6, hidden=28, seed=0)
        x = np.random.default_rng(0).normal(size=(100, 6))
        labels = np.random.default_rng(1).integers(0, 2, size=100)
        f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emb = export_embeddings(p, x, labels, f1)
        export_embeddings(p, x, labels, f2)
        assert emb.shape == (100, 28)
        assert f1.read_bytes() == f2.read_bytes()
        assert f1.read_text().splitlines()[0].endswith(",label")

    def test_zero_model_zero_embeddings(self):
        p = zero_params(init_mlp(4, seed=0))
        emb = export_embeddings(p, np.ones((3, 4)), [0, 1, 0])
        assert np.array_equal(emb, np.zeros((3, p.hidden_dim)))

    def test_checkpoint_round_trip_bit_exact(self, tmp_path):
        p = init_mlp(5, seed=9)
        p.trained_heads = ("regular", "balanced")
        stats = NormStats(
            mean=np.arange(5.0), std=np.ones(5) * 2.0,
            impute=np.arange(5.0), constant_mask=np.zeros(5, dtype=bool),
        )
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, p, stats, ("no", "yes"), tuple("abcde"), "outcome",
                        extra={"variant": "full"})
        p2, stats2, meta = load_checkpoint(path)
        x = np.random.default_rng(4).normal(size=(7, 5))
        t1, t2 = forward(p, x), forward(p2, x)
        assert np.array_equal(t1.logits_regular, t2.logits_regular)
        assert np.array_equal(t1.logits_balanced, t2.logits_balanced)
        assert meta["class_names"] == ["no", "yes"]
        assert meta["extra"]["variant"] == "full"
        assert p2.trained_heads == ("regular", "balanced")
        assert np.array_equal(stats2.mean, stats.mean)

    def test_checkpoint_version_guard(self, tmp_path):
        path = tmp_path / "bad.npz"
        import json

        meta = np.frombuffer(json.dumps({"version": "other"}).encode(), dtype=np.uint8)
        np.savez(path, __meta__=meta)
        with pytest.raises(ValidationError):
            load_checkpoint(path)
