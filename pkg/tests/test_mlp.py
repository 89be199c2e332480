import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmlp.errors import ConfigError, NumericError, ShapeError
from dmlp.mlp import (
    ActivationKind,
    DenseLayer,
    ForwardTrace,
    MlpTopology,
    backward,
    backward_batch,
    canonical_topology,
    cross_entropy_loss,
    forward,
    forward_batch,
    gradient_check,
    rectifier,
    softmax,
)
from helpers import manual_loss, max_relative_error, numeric_gradients, random_topology

# Independently evaluated at high precision.
SOFTMAX_1_2 = (0.26894142136999512, 0.73105857863000488)


def make_layer(w, b, activation, dropout=0.0):
    w = np.asarray(w, dtype=float)
    return DenseLayer(
        in_dim=w.shape[1], out_dim=w.shape[0], weights=w, bias=np.asarray(b, dtype=float),
        activation=activation, dropout_rate=dropout,
    )


class TestCanonicalTopology:
    def test_layer_dims(self):
        topo = canonical_topology()
        assert topo.input_dim == 136
        assert [l.in_dim for l in topo.layers] == [136, 100, 10, 10, 10]
        assert [l.out_dim for l in topo.layers] == [100, 10, 10, 10, 2]

    def test_activations_and_dropout(self):
        topo = canonical_topology()
        assert [l.activation for l in topo.layers[:-1]] == [ActivationKind.RECTIFIER] * 4
        assert topo.layers[-1].activation is ActivationKind.SOFTMAX
        assert [l.dropout_rate for l in topo.layers] == [0.2, 0.2, 0.2, 0.2, 0.0]

    def test_parameter_count(self):
        # Independent accounting over the declared stack.
        dims = [(136, 100), (100, 10), (10, 10), (10, 10), (10, 2)]
        expected = sum(i * o + o for i, o in dims)
        assert expected == 14952
        assert canonical_topology().parameter_count == expected

    def test_zero_initialized(self):
        topo = canonical_topology()
        assert all(not layer.weights.any() and not layer.bias.any() for layer in topo.layers)


class TestTopologyValidation:
    def test_chain_mismatch(self):
        good = canonical_topology()
        layers = good.layers
        with pytest.raises(ShapeError):
            MlpTopology(input_dim=136, layers=[layers[0], layers[2], layers[4]])

    def test_softmax_must_be_last(self):
        w = np.zeros((2, 2))
        hidden = make_layer(w, np.zeros(2), ActivationKind.SOFTMAX)
        out = make_layer(w, np.zeros(2), ActivationKind.SOFTMAX)
        with pytest.raises(ConfigError):
            MlpTopology(input_dim=2, layers=[hidden, out])

    def test_no_dropout_after_softmax(self):
        w = np.zeros((2, 2))
        with pytest.raises(ConfigError):
            MlpTopology(
                input_dim=2, layers=[make_layer(w, np.zeros(2), ActivationKind.SOFTMAX, dropout=0.2)]
            )

    def test_dropout_rate_below_one(self):
        with pytest.raises(ConfigError):
            make_layer(np.zeros((2, 2)), np.zeros(2), ActivationKind.RECTIFIER, dropout=1.0)


class TestSoftmax:
    def test_uniform_on_zeros(self):
        assert np.allclose(softmax([0.0, 0.0]), [0.5, 0.5], atol=0)

    def test_frozen_values(self):
        p = softmax([1.0, 2.0])
        assert abs(p[0] - SOFTMAX_1_2[0]) < 1e-12
        assert abs(p[1] - SOFTMAX_1_2[1]) < 1e-12

    @given(
        st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=8),
        st.floats(-1e4, 1e4),
    )
    def test_shift_invariance(self, z, c):
        z = np.asarray(z)
        assert np.allclose(softmax(z + c), softmax(z), rtol=0, atol=1e-9)

    def test_extreme_logits_stay_positive_and_normalized(self):
        p = softmax([1e4, -1e4])
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(p > 0.0) and np.all(p <= 1.0)

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            softmax([])

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError):
            softmax([1.0, float("nan")])


class TestRectifier:
    def test_clamps_negatives(self):
        assert rectifier([-1.0, 0.0, 2.0]).tolist() == [0.0, 0.0, 2.0]

    def test_identity_on_nonnegative(self):
        z = np.array([0.0, 0.5, 3.0])
        assert np.array_equal(rectifier(z), z)

    def test_idempotent(self):
        z = np.array([-2.0, -0.1, 0.0, 0.1, 5.0])
        assert np.array_equal(rectifier(rectifier(z)), rectifier(z))


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert cross_entropy_loss(np.array([1.0, 0.0]), 0) == 0.0

    def test_uniform_gives_ln2(self):
        for label in (0, 1):
            assert cross_entropy_loss(np.array([0.5, 0.5]), label) == pytest.approx(
                math.log(2.0), abs=1e-15
            )

    def test_frozen_value(self):
        assert cross_entropy_loss(np.array([0.9, 0.1]), 1) == pytest.approx(
            2.302585092994046, abs=1e-12
        )

    def test_label_out_of_range(self):
        with pytest.raises(ShapeError):
            cross_entropy_loss(np.array([0.5, 0.5]), 2)

    def test_clamped_never_infinite(self):
        assert math.isfinite(cross_entropy_loss(np.array([1.0, 0.0]), 1))


class TestForward:
    def test_zero_weights_uniform_output(self):
        topo = canonical_topology()
        probs, _ = forward(topo, np.linspace(0.0, 1.0, 136))
        assert np.allclose(probs, [0.5, 0.5], atol=0)

    def test_identity_weight_softmax(self):
        layer = make_layer(np.eye(2), np.zeros(2), ActivationKind.SOFTMAX)
        probs, _ = forward(MlpTopology(input_dim=2, layers=[layer]), np.zeros(2))
        assert np.allclose(probs, [0.5, 0.5], atol=0)

    def test_single_layer_matches_softmax_oracle(self):
        layer = make_layer([[1.0], [2.0]], np.zeros(2), ActivationKind.SOFTMAX)
        probs, _ = forward(MlpTopology(input_dim=1, layers=[layer]), np.ones(1))
        assert abs(probs[0] - SOFTMAX_1_2[0]) < 1e-12
        assert abs(probs[1] - SOFTMAX_1_2[1]) < 1e-12

    def test_probabilities_normalized(self):
        rng = np.random.default_rng(0)
        topo = random_topology(rng)
        for _ in range(20):
            probs, _ = forward(topo, rng.normal(size=topo.input_dim))
            assert probs.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(probs >= 0.0) and np.all(probs <= 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            forward(canonical_topology(), np.zeros(135))

    def test_non_finite_input(self):
        x = np.zeros(136)
        x[3] = np.inf
        with pytest.raises(NumericError):
            forward(canonical_topology(), x)

    def test_inference_is_pure(self):
        rng = np.random.default_rng(1)
        topo = random_topology(rng)
        x = rng.normal(size=topo.input_dim)
        p1, _ = forward(topo, x)
        p2, _ = forward(topo, x)
        assert np.array_equal(p1, p2)

    def test_inference_masks_all_ones(self):
        topo = canonical_topology()
        _, trace = forward(topo, np.zeros(136))
        assert len(trace.masks) == len(topo.layers)
        assert all(np.all(mask == 1.0) for mask in trace.masks)

    def test_training_mask_values(self):
        topo = canonical_topology(dropout_rate=0.2)
        rng = np.random.default_rng(2)
        _, trace = forward(topo, np.zeros(136), rng)
        for layer, mask in zip(topo.layers, trace.masks):
            if layer.dropout_rate > 0.0:
                allowed = {0.0, 1.0 / (1.0 - layer.dropout_rate)}
                assert set(np.unique(mask)) <= allowed
            else:
                assert np.all(mask == 1.0)


def test_inverted_dropout_preserves_expectation():
    # One wide layer gives plenty of mask draws per pass.
    layers = [
        make_layer(np.zeros((400, 2)), np.zeros(400), ActivationKind.RECTIFIER, dropout=0.2),
        make_layer(np.zeros((2, 400)), np.zeros(2), ActivationKind.SOFTMAX),
    ]
    topo = MlpTopology(input_dim=2, layers=layers)
    rng = np.random.default_rng(123)
    values = []
    for _ in range(250):
        _, trace = forward(topo, np.zeros(2), rng)
        values.append(trace.masks[0])
    stacked = np.concatenate(values)
    assert stacked.size == 100_000
    assert abs(stacked.mean() - 1.0) < 0.01


class TestBackward:
    def test_zero_output_gradient_on_exact_hit(self):
        layer = make_layer(np.eye(2), np.zeros(2), ActivationKind.SOFTMAX)
        topo = MlpTopology(input_dim=2, layers=[layer])
        x = np.array([3.0, -1.0])
        trace = ForwardTrace(
            x=x,
            pre=[x.copy()],
            post=[np.array([1.0, 0.0])],
            masks=[np.ones(2)],
        )
        grads = backward(topo, trace, 0)
        assert not grads.weights[0].any()
        assert not grads.biases[0].any()

    def test_shapes_mirror_topology(self):
        rng = np.random.default_rng(3)
        topo = random_topology(rng)
        _, trace = forward(topo, rng.normal(size=topo.input_dim))
        grads = backward(topo, trace, 0)
        assert grads.matches(topo)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            topo = random_topology(rng)
            x = rng.normal(size=topo.input_dim)
            label = int(rng.integers(topo.output_dim))
            _, trace = forward(topo, x)
            grads = backward(topo, trace, label)
            num_w, num_b = numeric_gradients(topo, x, label, trace.masks)
            assert max_relative_error(grads.weights + grads.biases, num_w + num_b) < 1e-6

    def test_matches_finite_differences_with_dropout_masks(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            topo = random_topology(rng, dropout=0.3)
            x = rng.normal(size=topo.input_dim)
            label = int(rng.integers(topo.output_dim))
            _, trace = forward(topo, x, rng)
            grads = backward(topo, trace, label)
            num_w, num_b = numeric_gradients(topo, x, label, trace.masks)
            assert max_relative_error(grads.weights + grads.biases, num_w + num_b) < 1e-6

    def test_trace_mismatch_rejected(self):
        rng = np.random.default_rng(6)
        topo = random_topology(rng)
        other = canonical_topology()
        _, trace = forward(other, np.zeros(136))
        with pytest.raises(ShapeError):
            backward(topo, trace, 0)

    def test_independent_loss_agrees_with_kernel(self):
        rng = np.random.default_rng(7)
        topo = random_topology(rng)
        x = rng.normal(size=topo.input_dim)
        probs, trace = forward(topo, x)
        assert manual_loss(topo, x, 0, trace.masks) == pytest.approx(
            cross_entropy_loss(probs, 0), abs=1e-12
        )


class TestBatchKernels:
    def test_forward_batch_matches_single(self):
        rng = np.random.default_rng(8)
        topo = random_topology(rng)
        X = rng.normal(size=(16, topo.input_dim))
        batch_probs, _ = forward_batch(topo, X)
        for i in range(X.shape[0]):
            single, _ = forward(topo, X[i])
            assert np.allclose(batch_probs[i], single, rtol=1e-12, atol=1e-15)

    def test_backward_batch_is_mean_of_singles(self):
        rng = np.random.default_rng(9)
        topo = random_topology(rng)
        X = rng.normal(size=(12, topo.input_dim))
        labels = rng.integers(topo.output_dim, size=12)
        _, batch_trace = forward_batch(topo, X)
        batch = backward_batch(topo, batch_trace, labels)
        sums_w = [np.zeros_like(l.weights) for l in topo.layers]
        sums_b = [np.zeros_like(l.bias) for l in topo.layers]
        for i in range(12):
            _, trace = forward(topo, X[i])
            grads = backward(topo, trace, int(labels[i]))
            for j in range(len(topo.layers)):
                sums_w[j] += grads.weights[j]
                sums_b[j] += grads.biases[j]
        for j in range(len(topo.layers)):
            assert np.allclose(batch.weights[j], sums_w[j] / 12, rtol=1e-10, atol=1e-14)
            assert np.allclose(batch.biases[j], sums_b[j] / 12, rtol=1e-10, atol=1e-14)


class TestGradientCheck:
    def test_canonical_with_random_init(self):
        rng = np.random.default_rng(10)
        topo = canonical_topology(dropout_rate=0.0)
        for layer in topo.layers:
            bound = np.sqrt(6.0 / layer.in_dim)
            layer.weights[...] = rng.uniform(-bound, bound, size=layer.weights.shape)
        x = rng.uniform(0.0, 1.0, size=136)
        assert gradient_check(topo, x, 1) < 1e-6

    def test_degenerate_zero_case_is_finite(self):
        topo = canonical_topology(dropout_rate=0.0)
        err = gradient_check(topo, np.zeros(136), 0)
        assert math.isfinite(err)
        assert err < 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        topo = random_topology(rng)
        x = rng.normal(size=topo.input_dim)
        assert gradient_check(topo, x, 0) == gradient_check(topo, x, 0)
