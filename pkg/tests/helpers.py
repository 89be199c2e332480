"""Independent oracles and builders shared by the test modules.

Everything here deliberately avoids the package's own forward/backward
kernels wherever it is used to check those kernels.
"""

import numpy as np

from dmlp.mlp import ActivationKind, DenseLayer, MlpTopology, canonical_topology
from dmlp.scaling import MinMaxScaler
from dmlp.training import MlpModel, ModelMetadata

RIGHT_EYE_GAPS = ((37, 41), (38, 40))
LEFT_EYE_GAPS = ((43, 47), (44, 46))


def eye_aperture_px(points) -> float:
    """Mean vertical eyelid gap in pixels over both eyes."""
    gaps = [abs(points[b][1] - points[a][1]) for a, b in RIGHT_EYE_GAPS + LEFT_EYE_GAPS]
    return float(np.mean(gaps))


def best_threshold_accuracy(values, sleepy_flags) -> float:
    """Best accuracy of any single-threshold classifier on one feature.

    Sweeps every cut position of the sorted values, in both orientations.
    """
    v = np.asarray(values, dtype=float)
    y = np.asarray(sleepy_flags, dtype=bool)
    order = np.argsort(v, kind="stable")
    y = y[order]
    n = y.size
    sleepy_prefix = np.concatenate([[0], np.cumsum(y)])
    total_sleepy = int(sleepy_prefix[-1])
    ks = np.arange(n + 1)
    acc_sleepy_below = (sleepy_prefix + (n - ks) - (total_sleepy - sleepy_prefix)) / n
    acc_sleepy_above = ((ks - sleepy_prefix) + (total_sleepy - sleepy_prefix)) / n
    return float(max(acc_sleepy_below.max(), acc_sleepy_above.max()))


def recount_alert_states(sleepy_flags, window, threshold):
    """Brute-force trailing-window recount of the alert state after each frame."""
    states = []
    for i in range(len(sleepy_flags)):
        recent = sleepy_flags[max(0, i - window + 1) : i + 1]
        states.append(sum(recent) >= threshold)
    return states


def manual_loss(topology, x, label, masks):
    """Recompute the masked forward pass and loss without the package kernel."""
    a = np.asarray(x, dtype=float)
    for layer, mask in zip(topology.layers, masks):
        z = layer.weights @ a + layer.bias
        if layer.activation is ActivationKind.RECTIFIER:
            h = np.maximum(z, 0.0)
        elif layer.activation is ActivationKind.SOFTMAX:
            e = np.exp(z - z.max())
            h = e / e.sum()
        else:
            h = z
        a = h * mask
    return -np.log(max(float(a[label]), 1e-12))


def numeric_gradients(topology, x, label, masks, epsilon=1e-5):
    """Central finite differences of manual_loss for every parameter."""
    weight_grads, bias_grads = [], []
    for layer in topology.layers:
        gw = np.zeros_like(layer.weights)
        gb = np.zeros_like(layer.bias)
        for arr, grad in ((layer.weights, gw), (layer.bias, gb)):
            for k in range(arr.size):
                original = arr.flat[k]
                arr.flat[k] = original + epsilon
                plus = manual_loss(topology, x, label, masks)
                arr.flat[k] = original - epsilon
                minus = manual_loss(topology, x, label, masks)
                arr.flat[k] = original
                grad.flat[k] = (plus - minus) / (2.0 * epsilon)
        weight_grads.append(gw)
        bias_grads.append(gb)
    return weight_grads, bias_grads


def max_relative_error(analytic_arrays, numeric_arrays) -> float:
    worst = 0.0
    for a, n in zip(analytic_arrays, numeric_arrays):
        denom = np.maximum(1e-12, np.abs(a) + np.abs(n))
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def random_topology(rng, max_width=12, dropout=0.0) -> MlpTopology:
    """A small valid random topology with He-style random parameters."""
    input_dim = int(rng.integers(2, max_width))
    hidden = [int(rng.integers(2, max_width)) for _ in range(int(rng.integers(0, 3)))]
    out_dim = int(rng.integers(2, 6))
    dims = [input_dim] + hidden + [out_dim]
    layers = []
    for i in range(len(dims) - 1):
        last = i == len(dims) - 2
        bound = np.sqrt(6.0 / dims[i])
        layers.append(
            DenseLayer(
                in_dim=dims[i],
                out_dim=dims[i + 1],
                weights=rng.uniform(-bound, bound, size=(dims[i + 1], dims[i])),
                bias=rng.uniform(-0.5, 0.5, size=dims[i + 1]),
                activation=ActivationKind.SOFTMAX if last else ActivationKind.RECTIFIER,
                dropout_rate=0.0 if last else dropout,
            )
        )
    return MlpTopology(input_dim=input_dim, layers=layers)


def zero_canonical_model() -> MlpModel:
    """Canonical topology with all-zero parameters and a unit scaler."""
    return MlpModel(
        topology=canonical_topology(),
        scaler=MinMaxScaler(mins=np.zeros(136), maxs=np.ones(136)),
        metadata=ModelMetadata(config_digest="0" * 64),
    )
