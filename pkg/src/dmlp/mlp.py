"""Numeric kernel for the small fixed MLP family.

Dense layers with rectifier hidden activations and a softmax output, plus
cross-entropy loss and exact gradients via backpropagation. All in-memory
arithmetic is float64; the on-disk format narrows parameters to float32
(see model_io). `forward`/`backward` are the single-sample reference path;
the `*_batch` variants vectorize the same math for the training loop.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

# Keeps probabilities strictly positive when a huge logit gap underflows exp().
PROB_FLOOR = 1e-300
# Floor on p[label] before the log, so a confidently wrong answer stays finite.
LOG_CLAMP = 1e-12

CANONICAL_INPUT_DIM = 136  # 68 landmarks x 2 coordinates
CANONICAL_HIDDEN_DIMS = (100, 10, 10, 10)
CANONICAL_OUTPUT_DIM = 2
CANONICAL_DROPOUT = 0.2


class ActivationKind(Enum):
    RECTIFIER = "rectifier"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


@dataclass
class DenseLayer:
    """One fully connected layer; weights are (out_dim, in_dim)."""

    in_dim: int
    out_dim: int
    weights: np.ndarray
    bias: np.ndarray
    activation: ActivationKind
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ShapeError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.shape != (self.out_dim, self.in_dim):
            raise ShapeError(
                f"weights shape {self.weights.shape} != ({self.out_dim}, {self.in_dim})"
            )
        if self.bias.shape != (self.out_dim,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({self.out_dim},)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise NumericError("layer parameters must be finite")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def parameter_count(self) -> int:
        return self.out_dim * (self.in_dim + 1)


@dataclass
class MlpTopology:
    """Ordered dense-layer stack: rectifier hidden layers, softmax output.

    Treated as immutable once built; only the training loop updates the
    parameter arrays in place, confined to a single thread.
    """

    input_dim: int
    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("topology needs at least one layer")
        if self.layers[0].in_dim != self.input_dim:
            raise ShapeError(
                f"first layer expects {self.layers[0].in_dim} inputs, topology says {self.input_dim}"
            )
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if nxt.in_dim != prev.out_dim:
                raise ShapeError(f"layer {i + 1} in_dim {nxt.in_dim} != layer {i} out_dim {prev.out_dim}")
        for i, layer in enumerate(self.layers[:-1]):
            if layer.activation is not ActivationKind.RECTIFIER:
                raise ConfigError(f"layer {i} must use the rectifier activation")
        last = self.layers[-1]
        if last.activation is not ActivationKind.SOFTMAX:
            raise ConfigError("output layer must use softmax")
        if last.dropout_rate != 0.0:
            raise ConfigError("no dropout is applied after the softmax layer")

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def parameter_count(self) -> int:
        return sum(layer.parameter_count for layer in self.layers)


@dataclass
class ForwardTrace:
    """Per-layer bookkeeping retained by a forward pass for backprop.

    `pre` holds pre-activations, `post` the layer outputs after activation
    and dropout mask, `masks` the inverted-dropout masks (all ones outside
    training). The same container carries 2-d arrays on the batch path.
    """

    x: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    masks: list[np.ndarray]

    @property
    def probabilities(self) -> np.ndarray:
        return self.post[-1]


@dataclass
class GradientSet:
    """Weight/bias gradients, one pair per layer, shapes mirroring the topology."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def matches(self, topology: MlpTopology) -> bool:
        if len(self.weights) != len(topology.layers) or len(self.biases) != len(topology.layers):
            return False
        return all(
            gw.shape == layer.weights.shape and gb.shape == layer.bias.shape
            for layer, gw, gb in zip(topology.layers, self.weights, self.biases)
        )


def canonical_topology(dropout_rate: float = CANONICAL_DROPOUT) -> MlpTopology:
    """Untrained 136 -> 100 -> 10 -> 10 -> 10 -> 2 stack.

    Rectifier plus dropout on the first four layers, softmax on the output
    layer with no dropout. Parameters start at zero; initialization proper
    belongs to the training module.
    """
    dims = []
    prev = CANONICAL_INPUT_DIM
    for width in CANONICAL_HIDDEN_DIMS + (CANONICAL_OUTPUT_DIM,):
        dims.append((prev, width))
        prev = width
    layers = []
    for i, (n_in, n_out) in enumerate(dims):
        last = i == len(dims) - 1
        layers.append(
            DenseLayer(
                in_dim=n_in,
                out_dim=n_out,
                weights=np.zeros((n_out, n_in)),
                bias=np.zeros(n_out),
                activation=ActivationKind.SOFTMAX if last else ActivationKind.RECTIFIER,
                dropout_rate=0.0 if last else dropout_rate,
            )
        )
    return MlpTopology(input_dim=CANONICAL_INPUT_DIM, layers=layers)


def rectifier(z: np.ndarray) -> np.ndarray:
    """Elementwise max(0, z)."""
    return np.maximum(np.asarray(z, dtype=np.float64), 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    """Shift-stable softmax over a nonempty vector of finite logits."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ShapeError("softmax expects a nonempty 1-d vector")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input must be finite")
    e = np.exp(z - z.max())
    return np.maximum(e / e.sum(), PROB_FLOOR)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return np.maximum(e / e.sum(axis=1, keepdims=True), PROB_FLOOR)


def cross_entropy_loss(probabilities: np.ndarray, label: int) -> float:
    """Negative log probability of the true class, clamped below at 1e-12."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ShapeError("probabilities must be a nonempty 1-d vector")
    if isinstance(label, bool) or not isinstance(label, (int, np.integer)):
        raise ShapeError(f"label must be an integer class index, got {label!r}")
    if not 0 <= label < p.size:
        raise ShapeError(f"label {label} out of range for {p.size} classes")
    return float(-np.log(max(float(p[label]), LOG_CLAMP)))


def cross_entropy_batch(probabilities: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row cross-entropy for a (n, classes) probability matrix."""
    rows = np.arange(probabilities.shape[0])
    return -np.log(np.maximum(probabilities[rows, labels], LOG_CLAMP))


def _draw_mask(rng, shape, rate: float) -> np.ndarray:
    # Inverted dropout: zero with probability `rate`, else scale by 1/(1-rate).
    keep = 1.0 - rate
    return (rng.random(shape) >= rate) / keep


def forward(
    topology: MlpTopology, x: np.ndarray, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, ForwardTrace]:
    """Single-sample forward pass.

    `rng` None runs inference (no dropout, trace masks all ones); passing a
    Generator enables training mode with inverted-dropout masks drawn from it.
    Returns the output probabilities and the trace needed by `backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (topology.input_dim,):
        raise ShapeError(f"input shape {x.shape} != ({topology.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise NumericError("input contains non-finite values")
    a = x
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for layer in topology.layers:
        z = layer.weights @ a + layer.bias
        if layer.activation is ActivationKind.RECTIFIER:
            h = np.maximum(z, 0.0)
        elif layer.activation is ActivationKind.SOFTMAX:
            h = softmax(z)
        else:
            h = z
        if rng is not None and layer.dropout_rate > 0.0:
            mask = _draw_mask(rng, layer.out_dim, layer.dropout_rate)
        else:
            mask = np.ones(layer.out_dim)
        h = h * mask
        pre.append(z)
        post.append(h)
        masks.append(mask)
        a = h
    return a, ForwardTrace(x=x, pre=pre, post=post, masks=masks)


def forward_batch(
    topology: MlpTopology, X: np.ndarray, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, ForwardTrace]:
    """Vectorized forward pass over a (n, input_dim) matrix.

    Dropout masks are drawn independently per sample and unit; the returned
    trace feeds `backward_batch`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != topology.input_dim:
        raise ShapeError(f"batch shape {X.shape} incompatible with input_dim {topology.input_dim}")
    if not np.all(np.isfinite(X)):
        raise NumericError("batch contains non-finite values")
    A = X
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for layer in topology.layers:
        Z = A @ layer.weights.T + layer.bias
        if layer.activation is ActivationKind.RECTIFIER:
            H = np.maximum(Z, 0.0)
        elif layer.activation is ActivationKind.SOFTMAX:
            H = _softmax_rows(Z)
        else:
            H = Z
        if rng is not None and layer.dropout_rate > 0.0:
            mask = _draw_mask(rng, Z.shape, layer.dropout_rate)
        else:
            mask = np.ones_like(Z)
        H = H * mask
        pre.append(Z)
        post.append(H)
        masks.append(mask)
        A = H
    return A, ForwardTrace(x=X, pre=pre, post=post, masks=masks)


def _check_trace(topology: MlpTopology, trace: ForwardTrace, batch: bool) -> None:
    n_layers = len(topology.layers)
    if not (len(trace.pre) == len(trace.post) == len(trace.masks) == n_layers):
        raise ShapeError("trace depth does not match the topology layer count")
    want_ndim = 2 if batch else 1
    for i, layer in enumerate(topology.layers):
        arr = trace.pre[i]
        if arr.ndim != want_ndim or arr.shape[-1] != layer.out_dim:
            raise ShapeError(
                f"trace layer {i} shape {arr.shape} does not match topology width {layer.out_dim}"
            )


def backward(topology: MlpTopology, trace: ForwardTrace, label: int) -> GradientSet:
    """Cross-entropy gradients for one sample from its forward trace.

    Dropout masks recorded in the trace are applied consistently, so the
    gradients match the exact function the forward pass computed.
    """
    _check_trace(topology, trace, batch=False)
    if trace.x.shape != (topology.input_dim,):
        raise ShapeError("trace input width does not match the topology")
    out_dim = topology.output_dim
    if isinstance(label, bool) or not isinstance(label, (int, np.integer)):
        raise ShapeError(f"label must be an integer class index, got {label!r}")
    if not 0 <= label < out_dim:
        raise ShapeError(f"label {label} out of range for {out_dim} classes")
    n_layers = len(topology.layers)
    # Softmax + cross-entropy collapses to probabilities minus the one-hot truth.
    delta = trace.post[-1].copy()
    delta[label] -= 1.0
    w_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    b_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    for i in range(n_layers - 1, -1, -1):
        below = trace.post[i - 1] if i > 0 else trace.x
        w_grads[i] = np.outer(delta, below)
        b_grads[i] = delta
        if i > 0:
            upstream = topology.layers[i].weights.T @ delta
            upstream = upstream * trace.masks[i - 1]
            delta = upstream * (trace.pre[i - 1] > 0.0)
    return GradientSet(weights=w_grads, biases=b_grads)


def backward_batch(topology: MlpTopology, trace: ForwardTrace, labels: np.ndarray) -> GradientSet:
    """Mean cross-entropy gradient over a batch traced by `forward_batch`."""
    _check_trace(topology, trace, batch=True)
    labels = np.asarray(labels)
    n = trace.x.shape[0]
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    n_layers = len(topology.layers)
    delta = trace.post[-1].copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    w_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    b_grads: list[np.ndarray] = [np.empty(0)] * n_layers
    for i in range(n_layers - 1, -1, -1):
        below = trace.post[i - 1] if i > 0 else trace.x
        w_grads[i] = delta.T @ below
        b_grads[i] = delta.sum(axis=0)
        if i > 0:
            upstream = delta @ topology.layers[i].weights
            upstream = upstream * trace.masks[i - 1]
            delta = upstream * (trace.pre[i - 1] > 0.0)
    return GradientSet(weights=w_grads, biases=b_grads)


def gradient_check(
    topology: MlpTopology, x: np.ndarray, label: int, epsilon: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs with dropout disabled (inference masks, all ones) so the check is
    deterministic. The relative error for each parameter is
    |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
    """
    _, trace = forward(topology, x)
    grads = backward(topology, trace, label)
    worst = 0.0
    for layer, gw, gb in zip(topology.layers, grads.weights, grads.biases):
        for arr, grad in ((layer.weights, gw), (layer.bias, gb)):
            flat_grad = grad.ravel()
            for k in range(arr.size):
                original = arr.flat[k]
                arr.flat[k] = original + epsilon
                loss_plus = cross_entropy_loss(forward(topology, x)[0], label)
                arr.flat[k] = original - epsilon
                loss_minus = cross_entropy_loss(forward(topology, x)[0], label)
                arr.flat[k] = original
                numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
                analytic = flat_grad[k]
                err = abs(analytic - numeric) / max(1e-12, abs(analytic) + abs(numeric))
                if err > worst:
                    worst = err
    return worst
