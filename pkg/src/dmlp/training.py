"""Deterministic mini-batch training producing the deployable model.

One root 64-bit seed deterministically derives three independent PCG64
streams (initialization, shuffling, dropout) through a SplitMix64 chain, so
a run is reproducible bit for bit within one environment. Frames are put
into a canonical order before the seeded shuffle, which makes the result
independent of the input file order as well.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import NUM_LANDMARKS, DrowsyLabel, LandmarkFrame
from .errors import ConfigError, DataError, NumericError, ShapeError
from .mlp import (
    LOG_CLAMP,
    ActivationKind,
    MlpTopology,
    backward_batch,
    canonical_topology,
    forward,
    forward_batch,
)
from .scaling import MinMaxScaler

_MASK64 = (1 << 64) - 1

LABEL_ORDER = (DrowsyLabel.NOT_SLEEPY.value, DrowsyLabel.SLEEPY.value)


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31), state


def derive_stream_seeds(seed: int, count: int = 3) -> list[int]:
    """Child seeds for independent random streams, chained from the root seed."""
    state = seed & _MASK64
    seeds = []
    for _ in range(count):
        value, state = _splitmix64(state)
        seeds.append(value)
    return seeds


def stream_generators(seed: int):
    """(init, shuffle, dropout) generators derived from one root seed."""
    return tuple(np.random.Generator(np.random.PCG64(s)) for s in derive_stream_seeds(seed))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    dropout_rate: float = 0.2
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")
        # Zero stays legal so a no-op run can be used as a diagnostic.
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0.0:
            raise ConfigError(f"learning rate must be nonnegative, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")

    def digest(self) -> str:
        payload = json.dumps(
            {
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "momentum": self.momentum,
                "dropout_rate": self.dropout_rate,
                "seed": self.seed,
                "shuffle": self.shuffle,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class TrainHistory:
    """Per-epoch mean training loss, training accuracy, and wall-clock seconds."""

    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.losses)


@dataclass
class ModelMetadata:
    """Descriptive fields carried by a model.

    `created_at` is wall-clock provenance kept in memory only; it is never
    serialized so identical training runs produce identical model files.
    """

    config_digest: str
    label_order: tuple = LABEL_ORDER
    created_at: str = ""


@dataclass
class MlpModel:
    """The deployable unit: fitted topology, fitted scaler, metadata."""

    topology: MlpTopology
    scaler: MinMaxScaler
    metadata: ModelMetadata

    def __post_init__(self):
        if self.scaler.n_features != self.topology.input_dim:
            raise ShapeError(
                f"scaler width {self.scaler.n_features} != model input {self.topology.input_dim}"
            )
        if tuple(self.metadata.label_order) != LABEL_ORDER:
            raise ConfigError(f"label order must be {LABEL_ORDER}")


def flatten_features(frame: LandmarkFrame) -> np.ndarray:
    """Interleaved coordinate vector: landmark k occupies indices 2k and 2k+1."""
    if frame.landmarks is None:
        raise DataError("frame has no landmarks")
    return frame.landmarks.reshape(-1).astype(np.float64)


def unflatten_features(features: np.ndarray) -> np.ndarray:
    """Inverse of flatten_features, back to (68, 2) points."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (2 * NUM_LANDMARKS,):
        raise ShapeError(f"feature vector shape {features.shape} != ({2 * NUM_LANDMARKS},)")
    return features.reshape(NUM_LANDMARKS, 2)


def _initialize(topology: MlpTopology, rng: np.random.Generator) -> None:
    # He-uniform fan-in bounds on rectifier layers, Glorot-uniform on softmax.
    for layer in topology.layers:
        if layer.activation is ActivationKind.RECTIFIER:
            bound = np.sqrt(6.0 / layer.in_dim)
        else:
            bound = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        layer.weights[...] = rng.uniform(-bound, bound, size=layer.weights.shape)
        layer.bias[...] = 0.0


def _canonical_order(frames: list[LandmarkFrame]) -> list[LandmarkFrame]:
    return sorted(
        frames,
        key=lambda f: (f.subject, f.scenario.value, f.label.value, f.frame_index, f.t_ms),
    )


def train(frames, config: TrainConfig, on_epoch=None) -> tuple[MlpModel, TrainHistory]:
    """SGD with classical momentum over shuffled mini-batches.

    Fits the scaler on the training frames, He/Glorot-initializes the
    canonical topology from the seeded stream, and runs `config.epochs`
    passes with inverted dropout active. The last short batch is used with
    its actual size. `on_epoch(epoch, loss, accuracy, seconds)` is invoked
    after each epoch when given. Identical frames, config, and environment
    reproduce the model bit for bit.
    """
    frames = _canonical_order(list(frames))
    if not frames:
        raise DataError("training set is empty")
    if any(f.landmarks is None for f in frames):
        raise DataError("training frames must all carry landmarks")
    raw = np.stack([flatten_features(f) for f in frames])
    labels = np.array([f.label.index for f in frames], dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DataError("training data contains a single class; need both labels")
    scaler = MinMaxScaler.fit(raw)
    X = scaler.transform(raw)
    topology = canonical_topology(dropout_rate=config.dropout_rate)
    init_rng, shuffle_rng, dropout_rng = stream_generators(config.seed)
    _initialize(topology, init_rng)
    velocities = [
        (np.zeros_like(layer.weights), np.zeros_like(layer.bias)) for layer in topology.layers
    ]
    n = len(frames)
    history = TrainHistory()
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            probs, trace = forward_batch(topology, X[idx], dropout_rng)
            sample_losses = -np.log(np.maximum(probs[np.arange(len(idx)), labels[idx]], LOG_CLAMP))
            batch_loss = float(sample_losses.mean())
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"training diverged: non-finite loss at epoch {epoch + 1}, batch {batch_index + 1}"
                )
            loss_sum += float(sample_losses.sum())
            grads = backward_batch(topology, trace, labels[idx])
            for layer, (vel_w, vel_b), grad_w, grad_b in zip(
                topology.layers, velocities, grads.weights, grads.biases
            ):
                vel_w *= config.momentum
                vel_w -= config.learning_rate * grad_w
                layer.weights += vel_w
                vel_b *= config.momentum
                vel_b -= config.learning_rate * grad_b
                layer.bias += vel_b
        # Epoch accuracy from a clean inference pass, not the dropout batches.
        clean_probs, _ = forward_batch(topology, X)
        accuracy = float((clean_probs.argmax(axis=1) == labels).mean())
        elapsed = time.perf_counter() - started
        history.losses.append(loss_sum / n)
        history.accuracies.append(accuracy)
        history.seconds.append(elapsed)
        if on_epoch is not None:
            on_epoch(epoch + 1, loss_sum / n, accuracy, elapsed)
    metadata = ModelMetadata(
        config_digest=config.digest(),
        created_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )
    return MlpModel(topology=topology, scaler=scaler, metadata=metadata), history


def predict_features(model: MlpModel, landmarks: np.ndarray) -> tuple[DrowsyLabel, float]:
    """Classify one 68-point array; shared by predict and the stream daemon."""
    x = model.scaler.transform(landmarks.reshape(-1).astype(np.float64))
    probs, _ = forward(model.topology, x)
    # Strict comparison breaks exact ties toward NOT_SLEEPY (class index 0).
    label = DrowsyLabel.SLEEPY if probs[1] > probs[0] else DrowsyLabel.NOT_SLEEPY
    return label, float(probs[1])


def predict(model: MlpModel, frame: LandmarkFrame) -> tuple[DrowsyLabel, float]:
    """Label one frame and return the sleepy-class probability."""
    if frame.landmarks is None:
        raise DataError("cannot predict on a frame without landmarks")
    return predict_features(model, frame.landmarks)
