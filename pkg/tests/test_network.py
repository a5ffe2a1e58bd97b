import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birads_mc.core import FeatureLayout, Pathology
from birads_mc.errors import DimensionError, NumericInputError, TrainingError, ValidationError
from birads_mc.network import (
    AdamState,
    BayesianClassifier,
    DropoutConfig,
    NetworkParams,
    PredictiveDistribution,
    TrainConfig,
    adam_step,
    backward,
    batch_loss,
    draw_masks,
    forward,
    init_params,
    loss_cross_entropy,
    mc_predict,
    mc_predict_batch,
    softmax,
    train,
)


def random_net(rng, sizes, bound=1.0):
    return NetworkParams(
        tuple(
            (rng.uniform(-bound, bound, (a, b)), rng.uniform(-bound, bound, b))
            for a, b in zip(sizes[:-1], sizes[1:])
        )
    )


def classifier(params, rate=0.5, layout=None):
    layout = layout or FeatureLayout(tuple(f"x{i}" for i in range(params.sizes[0])))
    return BayesianClassifier(params, DropoutConfig(rate), layout, 0, float("nan"), TrainConfig())


def max_rel_error(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def numeric_gradient(params, x, masks, label, rate, h=1e-5):
    """Central differences of the mean cross-entropy, one parameter at a time."""
    out = []
    for li, (W, b) in enumerate(params.layers):
        grads = []
        for arr_idx, arr in enumerate((W, b)):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                vals = []
                for step in (h, -h):
                    layers = [(w.copy(), bb.copy()) for w, bb in params.layers]
                    layers[li][arr_idx][idx] += step
                    vals.append(batch_loss(NetworkParams(tuple(layers)), x, label, masks, rate))
                g[idx] = (vals[0] - vals[1]) / (2 * h)
            grads.append(g)
        out.append(tuple(grads))
    return NetworkParams(tuple(out))


def gradient_check_instances(n=100, seed=2024):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        sizes = (int(rng.integers(2, 6)), int(rng.integers(2, 6)), int(rng.integers(2, 5)), 2)
        params = random_net(rng, sizes)
        batch = int(rng.integers(1, 4))
        x = rng.uniform(-1, 1, (batch, sizes[0]))
        rate = float(rng.choice([0.0, 0.25, 0.5]))
        masks = draw_masks(rng, batch, sizes[1:-1], rate)
        labels = rng.integers(0, 2, batch)
        yield params, x, masks, labels, rate


class TestSoftmax:
    def test_uniform(self):
        d = softmax([0.0, 0.0])
        assert (d.p_benign, d.p_malignant) == (0.5, 0.5)

    def test_log3(self):
        d = softmax([math.log(3), 0.0])
        assert d.p_benign == pytest.approx(0.75, abs=1e-15)
        assert d.p_malignant == pytest.approx(0.25, abs=1e-15)

    def test_large_logits_do_not_overflow(self):
        d = softmax([1000.0, 0.0])
        assert d.p_benign == 1.0 and d.p_malignant == 0.0

    @pytest.mark.parametrize("bad", [[float("nan"), 0.0], [float("inf"), 0.0]])
    def test_non_finite(self, bad):
        with pytest.raises(NumericInputError):
            softmax(bad)

    @given(
        st.integers(-2**20, 2**20), st.integers(-2**20, 2**20), st.integers(-100 * 2**10, 100 * 2**10)
    )
    def test_shift_invariance_exact_on_dyadic_grid(self, a, b, c):
        a, b, c = a / 2**14, b / 2**14, c / 2**10
        assert softmax([a + c, b + c]) == softmax([a, b])

    @given(
        st.floats(-50, 50, allow_nan=False), st.floats(-50, 50, allow_nan=False), st.floats(-100, 100, allow_nan=False)
    )
    def test_shift_invariance_general(self, a, b, c):
        s, t = softmax([a + c, b + c]), softmax([a, b])
        assert s.p_malignant == pytest.approx(t.p_malignant, abs=1e-12)


class TestForward:
    def test_zero_network_gives_zero_logits(self):
        params = init_params((3, 4, 2), np.random.default_rng(0)).zeros_like()
        assert np.array_equal(forward(params, np.ones(3)), np.zeros(2))

    def test_hand_computed_chain(self):
        params = NetworkParams(
            (
                (np.array([[0.5, -1.0], [-0.25, 1.0]]), np.array([0.1, 0.0])),
                (np.array([[2.0, -1.0], [3.0, 3.0]]), np.array([0.3, 0.0])),
            )
        )
        # hidden pre-activations: (0.1, 1.0); unit 1 is positive, both pass ReLU
        np.testing.assert_allclose(forward(params, np.array([1.0, 2.0])), [0.2 + 3.0 + 0.3, -0.1 + 3.0])
        # x=(2, 0): pre-activations (1.1, -2.0); second unit is clipped
        np.testing.assert_allclose(forward(params, np.array([2.0, 0.0])), [2.2 + 0.3, -1.1])

    def test_mask_scaling_is_inverted(self):
        params = NetworkParams(((np.eye(2), np.zeros(2)), (np.eye(2), np.zeros(2))))
        out = forward(params, np.array([1.0, 1.0]), [np.array([1.0, 0.0])], rate=0.5)
        np.testing.assert_allclose(out, [2.0, 0.0])

    def test_all_ones_mask_at_rate_zero_is_identity(self):
        rng = np.random.default_rng(1)
        params = random_net(rng, (4, 5, 3, 2))
        x = rng.uniform(-1, 1, 4)
        assert np.array_equal(forward(params, x, [np.ones(5), np.ones(3)], 0.0), forward(params, x))

    def test_dimension_error_names_layer(self):
        params = init_params((3, 4, 2), np.random.default_rng(0))
        with pytest.raises(DimensionError, match="layer 0"):
            forward(params, np.ones(5))

    def test_params_reject_broken_chain(self):
        with pytest.raises(ValidationError):
            NetworkParams(((np.zeros((3, 4)), np.zeros(4)), (np.zeros((5, 2)), np.zeros(2))))


class TestLoss:
    def test_uniform(self):
        assert loss_cross_entropy(PredictiveDistribution(0.5, 0.5), Pathology.MALIGNANT) == pytest.approx(math.log(2))

    def test_certain_and_right(self):
        assert loss_cross_entropy(PredictiveDistribution(0.0, 1.0), Pathology.MALIGNANT) == 0.0

    def test_three_quarters(self):
        assert loss_cross_entropy(PredictiveDistribution(0.75, 0.25), Pathology.BENIGN) == pytest.approx(0.2876820724517809)

    def test_floor_keeps_loss_finite(self):
        assert loss_cross_entropy(PredictiveDistribution(1.0, 0.0), Pathology.MALIGNANT) == pytest.approx(-math.log(1e-12))


class TestBackward:
    def test_zero_gradient_at_one_hot_fit(self):
        params = NetworkParams(((np.zeros((2, 3)), np.zeros(3)), (np.zeros((3, 2)), np.array([800.0, 0.0]))))
        grads = backward(params, np.array([0.3, -0.2]), None, Pathology.BENIGN)
        assert all(not a.any() for a in grads.arrays())

    def test_output_bias_is_softmax_minus_one_hot(self):
        rng = np.random.default_rng(5)
        params = random_net(rng, (3, 4, 2))
        x = rng.uniform(-1, 1, 3)
        p = softmax(forward(params, x))
        grads = backward(params, x, None, Pathology.MALIGNANT)
        np.testing.assert_allclose(grads.layers[-1][1], [p.p_benign, p.p_malignant - 1.0], atol=1e-15)

    def test_matches_finite_differences(self):
        worst = max(
            max_rel_error(np.concatenate([a.ravel() for a in backward(p, x, m, y, r).arrays()]),
                          np.concatenate([a.ravel() for a in numeric_gradient(p, x, m, y, r).arrays()]))
            for p, x, m, y, r in gradient_check_instances(25, seed=99)
        )
        assert worst < 1e-4

    def test_dropped_unit_gets_no_gradient(self):
        rng = np.random.default_rng(3)
        params = random_net(rng, (3, 4, 2))
        grads = backward(params, rng.uniform(-1, 1, 3), [np.array([1.0, 0.0, 1.0, 1.0])], Pathology.BENIGN, 0.5)
        assert not grads.layers[1][0][1].any()


def scalar_adam(w, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return w


class TestAdam:
    def one_weight(self, w):
        return NetworkParams(((np.array([[w]]), np.zeros(1)), (np.zeros((1, 2)), np.zeros(2))))

    def grads(self, g):
        return NetworkParams(((np.array([[g]]), np.zeros(1)), (np.zeros((1, 2)), np.zeros(2))))

    def test_first_step_example(self):
        params = self.one_weight(3.0)
        state, new = adam_step(AdamState.initial(params), params, self.grads(6.0), TrainConfig())
        assert new.layers[0][0][0, 0] == pytest.approx(2.999, abs=1e-9)
        assert state.t == 1

    def test_zero_gradient_leaves_params(self):
        params = self.one_weight(3.0)
        state, new = adam_step(AdamState.initial(params), params, self.grads(0.0), TrainConfig())
        assert new.equals(params) and state.t == 1

    @pytest.mark.parametrize("g", [1e-3, 0.7, 3.0, -250.0])
    def test_first_step_magnitude_is_lr(self, g):
        params = self.one_weight(0.0)
        _, new = adam_step(AdamState.initial(params), params, self.grads(g), TrainConfig())
        step = abs(new.layers[0][0][0, 0])
        assert 1e-3 * (1 - 1e-4) <= step <= 1e-3

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(8)
        seq = rng.normal(size=20)
        params, state = self.one_weight(0.4), None
        state = AdamState.initial(params)
        for g in seq:
            state, params = adam_step(state, params, self.grads(g), TrainConfig())
        assert params.layers[0][0][0, 0] == pytest.approx(scalar_adam(0.4, seq), abs=1e-15)
        assert state.t == 20

    def test_shape_mismatch(self):
        params = self.one_weight(0.0)
        other = init_params((2, 3, 2), np.random.default_rng(0))
        with pytest.raises(DimensionError):
            adam_step(AdamState.initial(params), params, other, TrainConfig())


def logistic_regression_accuracy(X, y, steps=2000, lr=0.5):
    """Plain gradient-descent logistic regression used as a separability oracle."""
    w, b = np.zeros(X.shape[1]), 0.0
    for _ in range(steps):
        p = 1 / (1 + np.exp(-(X @ w + b)))
        w -= lr * X.T @ (p - y) / len(y)
        b -= lr * float(np.mean(p - y))
    return float(np.mean(((X @ w + b) > 0) == y))


def two_blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.normal(0, 0.5, (n, 2)) + np.where(y[:, None] == 1, 1.5, -1.5)
    return X, y


LAYOUT2 = FeatureLayout(("a", "b"))


class TestTrain:
    def test_separable_blobs(self):
        X, y = two_blobs()
        assert logistic_regression_accuracy(X, y) >= 0.99
        model = train(X, y, hidden=(16, 16), config=TrainConfig(epochs=200, seed=1, learning_rate=1e-2), layout=LAYOUT2)
        _, dist = mc_predict(model, X[0], 1, 0)
        acc = np.mean(mc_predict_batch(model, X, 50, 3).mean(axis=1).argmax(axis=1) == y)
        assert acc >= 0.95
        assert dist.p_benign + dist.p_malignant == pytest.approx(1.0, abs=1e-12)

    def test_untrained_model_is_near_chance(self):
        X, y = two_blobs()
        means = [
            mc_predict_batch(train(X, y, hidden=(16, 16), config=TrainConfig(epochs=0, seed=s), layout=LAYOUT2),
                             X, 20, s)[..., 1].mean()
            for s in range(20)
        ]
        assert abs(np.mean(means) - 0.5) < 0.1

    def test_deterministic(self):
        X, y = two_blobs(60)
        cfg = TrainConfig(epochs=5, seed=42)
        a = train(X, y, hidden=(8,), config=cfg, layout=LAYOUT2)
        b = train(X, y, hidden=(8,), config=cfg, layout=LAYOUT2)
        c = train(X, y, hidden=(8,), config=TrainConfig(epochs=5, seed=43), layout=LAYOUT2)
        assert a.params.equals(b.params) and a.final_loss == b.final_loss
        assert not a.params.equals(c.params)

    def test_single_class_rejected(self):
        X, _ = two_blobs(20)
        with pytest.raises(TrainingError, match="degenerate labels"):
            train(X, np.zeros(20, dtype=int), layout=LAYOUT2)

    def test_layout_width_checked(self):
        X, y = two_blobs(20)
        with pytest.raises(DimensionError):
            train(X, y, layout=FeatureLayout(("a", "b", "c")))


class TestMcPredict:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.params = random_net(rng, (4, 8, 8, 2))
        self.x = rng.uniform(-1, 1, 4)

    def test_rate_zero_has_no_variance(self):
        samples, dist = mc_predict(classifier(self.params, 0.0), self.x, 25, 0)
        assert np.all(samples.per_pass == samples.per_pass[0])
        p = softmax(forward(self.params, self.x))
        assert dist.p_malignant == pytest.approx(p.p_malignant, abs=1e-15)

    def test_single_pass_is_the_sample(self):
        samples, dist = mc_predict(classifier(self.params), self.x, 1, 4)
        assert (dist.p_benign, dist.p_malignant) == tuple(samples.per_pass[0])

    def test_distribution_is_sample_mean(self):
        samples, dist = mc_predict(classifier(self.params), self.x, 10_000, 7)
        mean = samples.per_pass.mean(axis=0)
        assert (dist.p_benign, dist.p_malignant) == (mean[0], mean[1])
        assert abs(dist.p_benign + dist.p_malignant - 1.0) <= 1e-12

    def test_zero_passes_rejected(self):
        with pytest.raises(ValidationError):
            mc_predict(classifier(self.params), self.x, 0, 0)

    def test_passes_are_independent_of_count(self):
        model = classifier(self.params)
        short, _ = mc_predict(model, self.x, 3, 9)
        long, _ = mc_predict(model, self.x, 8, 9)
        assert np.array_equal(long.per_pass[:3], short.per_pass)

    def test_batch_rows_match_single_calls_in_shape(self):
        out = mc_predict_batch(classifier(self.params), np.stack([self.x, -self.x]), 6, 2)
        assert out.shape == (2, 6, 2)
        np.testing.assert_allclose(out.sum(axis=2), 1.0, atol=1e-12)

    def test_inverted_dropout_expectation(self):
        W, b = self.params.layers[0]
        h = np.maximum(self.x @ W + b, 0.0)
        n, rate = 100_000, 0.5
        masks = draw_masks(np.random.default_rng(0), n, [h.size], rate)[0]
        draws = h * masks / (1 - rate)
        se = draws.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(draws.mean(axis=0) - h) <= 3 * se + 1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.9), st.integers(1, 20))
def test_mc_distribution_sums_to_one(seed, rate, T):
    rng = np.random.default_rng(seed)
    params = random_net(rng, (3, 5, 4, 2), bound=3.0)
    _, dist = mc_predict(classifier(params, rate), rng.uniform(-2, 2, 3), T, seed)
    assert abs(dist.p_benign + dist.p_malignant - 1.0) <= 1e-12


def test_predictive_distribution_validation():
    with pytest.raises(ValidationError):
        PredictiveDistribution(0.6, 0.6)
    assert PredictiveDistribution.from_malignant(0.5).predicted_label is Pathology.MALIGNANT
    assert PredictiveDistribution.from_malignant(0.49).predicted_label is Pathology.BENIGN
