import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sentvae.neural import (
    AdamState,
    DenseParams,
    GruParams,
    GRU_FIELDS,
    adam_step,
    apply_zero_mask,
    clip_global_norm,
    dense,
    dropout,
    encode_bidirectional,
    encode_bidirectional_backward,
    encode_bidirectional_forward,
    grad_check,
    gru_backward,
    gru_forward,
    gru_step,
    softmax,
    xavier_bound,
    xavier_init,
)


class TestXavier:
    def test_bound(self):
        rng = np.random.default_rng(0)
        m = xavier_init((300, 700), rng)
        bound = xavier_bound((300, 700))
        assert m.shape == (300, 700)
        assert np.all(np.abs(m) <= bound)

    def test_deterministic(self):
        a = xavier_init((20, 30), np.random.default_rng(11))
        b = xavier_init((20, 30), np.random.default_rng(11))
        assert (a == b).all()

    def test_sample_mean_near_zero(self):
        # mean of N uniform(-b, b) draws has std b/sqrt(3N)
        m = xavier_init((300, 700), np.random.default_rng(1))
        bound = xavier_bound((300, 700))
        n = m.size
        assert abs(m.mean()) < 3 * bound / np.sqrt(3 * n)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            xavier_init((0, 5), np.random.default_rng(0))


def _gru(d_in, d_h, seed=0):
    return GruParams.init(d_in, d_h, np.random.default_rng(seed))


class TestGruStep:
    def test_zero_params_halve_state(self):
        # z = sigmoid(0) = 0.5 and hhat = tanh(0) = 0, so h' = 0.5 * h
        p = GruParams(*(np.zeros_like(getattr(_gru(3, 4), f))
                        for f in GRU_FIELDS))
        x = np.random.default_rng(2).standard_normal(3)
        h = np.random.default_rng(3).standard_normal(4)
        np.testing.assert_allclose(gru_step(x, h, p), 0.5 * h, atol=1e-15)

    def test_zero_fixed_point(self):
        p = _gru(3, 4)
        p.b_z[:] = p.b_r[:] = p.b_h[:] = 0.0
        out = gru_step(np.zeros(3), np.zeros(4), p)
        np.testing.assert_allclose(out, 0.0, atol=1e-15)

    def test_shape_mismatch(self):
        p = _gru(3, 4)
        with pytest.raises(ValueError):
            gru_step(np.zeros(5), np.zeros(4), p)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        p = _gru(3, 4, seed=5)
        x = rng.standard_normal(3)
        h = rng.standard_normal(4)
        w = rng.standard_normal(4)

        def f(params):
            gp = GruParams(*(params[k] for k in GRU_FIELDS))
            h_new, cache = gru_forward(x, h, gp)
            grads = gp.zeros_like()
            gru_backward(w.copy(), cache, gp, grads)
            return float(w @ h_new), {k: getattr(grads, k) for k in GRU_FIELDS}

        params = {k: getattr(p, k) for k in GRU_FIELDS}
        assert grad_check(f, params) < 1e-6

    @settings(deadline=None, max_examples=25)
    @given(st.integers(0, 10 ** 6))
    def test_convex_combination_keeps_unit_box(self, seed):
        rng = np.random.default_rng(seed)
        p = _gru(3, 4, seed=seed)
        x = rng.standard_normal(3) * 2
        h = rng.uniform(-1, 1, size=4) * 0.999
        out = gru_step(x, h, p)
        assert np.all(np.abs(out) < 1.0)


class TestBidirectional:
    def test_single_step(self):
        fwd, bwd = _gru(3, 4, 1), _gru(3, 4, 2)
        x = np.random.default_rng(0).standard_normal((1, 3))
        states = encode_bidirectional(x, None, fwd, bwd)
        np.testing.assert_allclose(states.forward_final,
                                   gru_step(x[0], np.zeros(4), fwd))
        np.testing.assert_allclose(states.backward_final,
                                   gru_step(x[0], np.zeros(4), bwd))

    def test_reversal_symmetry(self):
        # backward states of seq = forward states of reversed seq, flipped
        fwd, bwd = _gru(3, 4, 1), _gru(3, 4, 2)
        x = np.random.default_rng(5).standard_normal((6, 3))
        states = encode_bidirectional(x, None, fwd, bwd)
        swapped = encode_bidirectional(x[::-1].copy(), None, bwd, fwd)
        np.testing.assert_allclose(states.backward, swapped.forward[::-1],
                                   atol=1e-15)
        np.testing.assert_allclose(states.backward_final,
                                   swapped.forward_final, atol=1e-15)

    def test_finals_are_sweep_ends(self):
        fwd, bwd = _gru(3, 4, 1), _gru(3, 4, 2)
        x = np.random.default_rng(6).standard_normal((5, 3))
        states = encode_bidirectional(x, None, fwd, bwd)
        np.testing.assert_array_equal(states.forward_final, states.forward[-1])
        np.testing.assert_array_equal(states.backward_final, states.backward[0])

    def test_zero_mask_equals_explicit_zero_vector(self):
        fwd, bwd = _gru(3, 4, 1), _gru(3, 4, 2)
        x = np.random.default_rng(7).standard_normal((5, 3))
        mask = [False, False, True, False, False]
        masked = encode_bidirectional(x, mask, fwd, bwd)
        explicit = x.copy()
        explicit[2] = 0.0
        direct = encode_bidirectional(explicit, None, fwd, bwd)
        np.testing.assert_array_equal(masked.forward, direct.forward)
        np.testing.assert_array_equal(masked.backward, direct.backward)

    def test_empty_sequence_rejected(self):
        fwd, bwd = _gru(3, 4, 1), _gru(3, 4, 2)
        with pytest.raises(ValueError):
            encode_bidirectional(np.zeros((0, 3)), None, fwd, bwd)

    def test_backward_pass_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        T, d_in, d_h = 4, 3, 4
        x = rng.standard_normal((T, d_in))
        wf = rng.standard_normal((T, d_h))
        wb = rng.standard_normal((T, d_h))
        fwd, bwd = _gru(d_in, d_h, 9), _gru(d_in, d_h, 10)
        names = [f"fwd.{k}" for k in GRU_FIELDS] + [f"bwd.{k}" for k in GRU_FIELDS]

        def f(params):
            pf = GruParams(*(params[f"fwd.{k}"] for k in GRU_FIELDS))
            pb = GruParams(*(params[f"bwd.{k}"] for k in GRU_FIELDS))
            states, caches = encode_bidirectional_forward(x, None, pf, pb)
            loss = float((states.forward * wf).sum() + (states.backward * wb).sum())
            gf, gb = pf.zeros_like(), pb.zeros_like()
            dstates = type(states)(wf.copy(), wb.copy())
            encode_bidirectional_backward(dstates, caches, pf, pb, gf, gb)
            out = {f"fwd.{k}": getattr(gf, k) for k in GRU_FIELDS}
            out.update({f"bwd.{k}": getattr(gb, k) for k in GRU_FIELDS})
            return loss, out

        params = {}
        params.update({f"fwd.{k}": getattr(fwd, k) for k in GRU_FIELDS})
        params.update({f"bwd.{k}": getattr(bwd, k) for k in GRU_FIELDS})
        assert grad_check(f, params) < 1e-6


class TestDense:
    def test_identity(self):
        p = DenseParams(np.eye(4), np.zeros(4))
        x = np.arange(4.0)
        np.testing.assert_array_equal(dense(x, p), x)

    def test_zero_weight_gives_activated_bias(self):
        p = DenseParams(np.zeros((3, 4)), np.array([0.5, -1.0, 2.0]))
        np.testing.assert_allclose(dense(np.ones(4), p, "tanh"),
                                   np.tanh(p.b))

    def test_softmax_normalized(self):
        rng = np.random.default_rng(1)
        logits = rng.standard_normal((10, 7)) * 8
        s = softmax(logits)
        np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
        p = DenseParams(rng.standard_normal((5, 3)), rng.standard_normal(5))
        out = dense(rng.standard_normal(3), p, "softmax")
        assert abs(out.sum() - 1.0) < 1e-12

    def test_unknown_activation(self):
        p = DenseParams(np.eye(2), np.zeros(2))
        with pytest.raises(ValueError):
            dense(np.zeros(2), p, "relu")


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = {"w": np.array([1.0, -2.0, 3.0])}
        g = {"w": np.zeros(3)}
        state = AdamState(lr=0.1)
        adam_step(p, g, state)
        np.testing.assert_array_equal(p["w"], [1.0, -2.0, 3.0])
        assert state.t == 1

    def test_first_step_is_signed_lr(self):
        # at t=1 bias corrections cancel: update = -lr * g / (|g| + eps)
        g = np.array([0.3, -4.0, 1e-3])
        p = {"w": np.zeros(3)}
        state = AdamState(lr=0.01)
        adam_step(p, {"w": g.copy()}, state)
        want = -0.01 * g / (np.abs(g) + state.eps)
        np.testing.assert_allclose(p["w"], want, rtol=1e-12)

    def test_two_steps_match_scalar_oracle(self):
        g = 0.7
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        # independent scalar re-implementation
        theta, m, v = 1.0, 0.0, 0.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        p = {"w": np.array([1.0])}
        state = AdamState(lr=lr)
        for _ in range(2):
            adam_step(p, {"w": np.array([g])}, state)
        np.testing.assert_allclose(p["w"][0], theta, atol=1e-12)

    def test_sign_flip_symmetry(self):
        g = np.random.default_rng(0).standard_normal(5)
        p1 = {"w": np.zeros(5)}
        p2 = {"w": np.zeros(5)}
        adam_step(p1, {"w": g.copy()}, AdamState(lr=0.3))
        adam_step(p2, {"w": -g.copy()}, AdamState(lr=0.3))
        np.testing.assert_allclose(np.abs(p1["w"]), np.abs(p2["w"]), rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step({"w": np.zeros(3)}, {"w": np.zeros(4)}, AdamState(lr=0.1))


def test_clip_global_norm():
    g = {"a": np.array([3.0, 4.0]), "b": np.array([12.0])}
    norm = clip_global_norm(g, 6.5)
    assert norm == pytest.approx(13.0)
    total = np.sqrt(sum(float((x * x).sum()) for x in g.values()))
    assert total == pytest.approx(6.5)
    g2 = {"a": np.array([0.3])}
    clip_global_norm(g2, 1.0)
    np.testing.assert_array_equal(g2["a"], [0.3])


class TestDropout:
    def test_rate_zero(self):
        x = np.arange(5.0)
        out, mask = dropout(x, 0.0, np.random.default_rng(0), training=True)
        np.testing.assert_array_equal(out, x)
        assert mask is None

    def test_inference_identity(self):
        x = np.arange(5.0)
        out, mask = dropout(x, 0.5, np.random.default_rng(0), training=False)
        np.testing.assert_array_equal(out, x)
        assert mask is None

    def test_empirical_rate_and_scaling(self):
        rng = np.random.default_rng(1)
        x = np.ones(100_000)
        out, keep = dropout(x, 0.3, rng, training=True)
        zero_frac = float((out == 0).mean())
        assert abs(zero_frac - 0.3) < 0.01
        np.testing.assert_allclose(out[out != 0], 1.0 / 0.7, rtol=1e-12)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            dropout(np.ones(3), 1.0, np.random.default_rng(0))


class TestGradCheck:
    def test_constant_function(self):
        params = {"w": np.array([1.0, 2.0])}

        def f(p):
            return 3.0, {"w": np.zeros(2)}

        assert grad_check(f, params) < 1e-12

    def test_dense_squared_loss(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal((3, 4))
        b = rng.standard_normal(3)
        x = rng.standard_normal(4)
        y = rng.standard_normal(3)

        def f(p):
            out = p["w"] @ x + p["b"]
            r = out - y
            return float(r @ r), {"w": 2 * np.outer(r, x), "b": 2 * r}

        assert grad_check(f, {"w": w, "b": b}) < 1e-6


def test_apply_zero_mask_validates_shape():
    with pytest.raises(ValueError):
        apply_zero_mask(np.zeros((4, 3)), [True, False])
