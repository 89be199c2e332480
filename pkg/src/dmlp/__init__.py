"""Landmark-based drowsiness classification.

A small fully connected network over 68-point facial landmarks, with
min-max scaling, deterministic training, a compact binary model format
under a 100 KB budget, batch evaluation, and a streaming alert daemon.
"""

__version__ = "0.1.0"

from .data import (
    DrowsyLabel,
    LandmarkFrame,
    Scenario,
    SplitSpec,
    default_synth_split,
    load_dataset,
    manifest_report,
    synth_generate,
    write_frames,
)
from .mlp import canonical_topology, gradient_check
from .model_io import inspect, load, save
from .runtime import DebounceConfig, Debouncer, bench_latency, evaluate, stream_serve
from .scaling import MinMaxScaler
from .training import MlpModel, TrainConfig, flatten_features, predict, train

__all__ = [
    "DrowsyLabel",
    "LandmarkFrame",
    "Scenario",
    "SplitSpec",
    "default_synth_split",
    "load_dataset",
    "manifest_report",
    "synth_generate",
    "write_frames",
    "canonical_topology",
    "gradient_check",
    "inspect",
    "load",
    "save",
    "DebounceConfig",
    "Debouncer",
    "bench_latency",
    "evaluate",
    "stream_serve",
    "MinMaxScaler",
    "MlpModel",
    "TrainConfig",
    "flatten_features",
    "predict",
    "train",
    "__version__",
]
