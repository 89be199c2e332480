"""Batch evaluation, latency measurement, and the streaming alert daemon.

The daemon is three stages (reader thread, classifier on the calling
thread, writer thread) joined by bounded queues of 256 records: if the
output consumer stalls, the pipeline blocks the input side rather than
dropping records. Output order always matches input order.
"""

import json
import queue
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import DrowsyLabel, Scenario, landmarks_from_json
from .errors import BenchmarkError, ConfigError, DataError, DmlpError, ParseError, StreamError
from .training import MlpModel, predict, predict_features

QUEUE_CAPACITY = 256


@dataclass
class ScenarioCounts:
    """Confusion counts with sleepy as the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def frames(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def correct(self) -> int:
        return self.tp + self.tn

    @property
    def accuracy_percent(self) -> float | None:
        if self.frames == 0:
            return None
        return 100.0 * self.correct / self.frames


@dataclass
class EvalReport:
    """Per-scenario accuracy and confusion counts plus a frame-weighted overall."""

    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for scenario in Scenario:
            self.counts.setdefault(scenario, ScenarioCounts())

    @property
    def overall_frames(self) -> int:
        return sum(c.frames for c in self.counts.values())

    @property
    def overall_correct(self) -> int:
        return sum(c.correct for c in self.counts.values())

    @property
    def overall_accuracy_percent(self) -> float | None:
        frames = self.overall_frames
        if frames == 0:
            return None
        return 100.0 * self.overall_correct / frames

    def to_table(self) -> str:
        """Six accuracy rows, the five scenarios in declaration order then 'All'."""
        lines = ["category\tframes\ttp\tfp\ttn\tfn\taccuracy"]
        for scenario in Scenario:
            c = self.counts[scenario]
            acc = "" if c.accuracy_percent is None else f"{c.accuracy_percent:.3f}"
            lines.append(
                f"{scenario.display}\t{c.frames}\t{c.tp}\t{c.fp}\t{c.tn}\t{c.fn}\t{acc}"
            )
        overall = self.overall_accuracy_percent
        acc = "" if overall is None else f"{overall:.3f}"
        lines.append(
            f"All\t{self.overall_frames}"
            f"\t{sum(c.tp for c in self.counts.values())}"
            f"\t{sum(c.fp for c in self.counts.values())}"
            f"\t{sum(c.tn for c in self.counts.values())}"
            f"\t{sum(c.fn for c in self.counts.values())}"
            f"\t{acc}"
        )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        rows = []
        for scenario in Scenario:
            c = self.counts[scenario]
            rows.append(
                {
                    "scenario": scenario.value,
                    "category": scenario.display,
                    "frames": c.frames,
                    "tp": c.tp,
                    "fp": c.fp,
                    "tn": c.tn,
                    "fn": c.fn,
                    "accuracy": c.accuracy_percent,
                }
            )
        return {
            "rows": rows,
            "overall": {
                "frames": self.overall_frames,
                "correct": self.overall_correct,
                "accuracy": self.overall_accuracy_percent,
            },
        }

    @classmethod
    def from_dict(cls, obj) -> "EvalReport":
        if not isinstance(obj, dict) or "rows" not in obj:
            raise ParseError("report object needs a 'rows' list")
        counts = {}
        wire = {s.value: s for s in Scenario}
        for entry in obj["rows"]:
            scenario = wire.get(entry.get("scenario"))
            if scenario is None:
                raise ParseError(f"unknown scenario {entry.get('scenario')!r}")
            counts[scenario] = ScenarioCounts(
                tp=int(entry["tp"]), fp=int(entry["fp"]), tn=int(entry["tn"]), fn=int(entry["fn"])
            )
        return cls(counts=counts)


def evaluate(model: MlpModel, frames) -> EvalReport:
    """Frame-level argmax scoring grouped by scenario."""
    frames = list(frames)
    if not frames:
        raise DataError("nothing to evaluate: the frame collection is empty")
    report = EvalReport()
    for frame in frames:
        if frame.landmarks is None:
            raise DataError("evaluation frames must all carry landmarks")
        predicted, _p = predict(model, frame)
        c = report.counts[frame.scenario]
        actual_sleepy = frame.label is DrowsyLabel.SLEEPY
        predicted_sleepy = predicted is DrowsyLabel.SLEEPY
        if predicted_sleepy and actual_sleepy:
            c.tp += 1
        elif predicted_sleepy and not actual_sleepy:
            c.fp += 1
        elif not predicted_sleepy and not actual_sleepy:
            c.tn += 1
        else:
            c.fn += 1
    return report


@dataclass
class LatencyStats:
    """Single-frame inference timings in microseconds."""

    frames_measured: int
    mean_us: float
    median_us: float
    p95_us: float
    max_us: float

    def describe(self) -> str:
        return "\n".join(
            [
                "single-frame inference latency (scaling + forward pass only;"
                " face detection and landmark extraction are upstream and excluded)",
                f"frames measured: {self.frames_measured}",
                f"mean: {self.mean_us:.1f} us",
                f"median: {self.median_us:.1f} us",
                f"p95: {self.p95_us:.1f} us",
                f"max: {self.max_us:.1f} us",
            ]
        )


def bench_latency(model: MlpModel, frames, repetitions: int = 1) -> LatencyStats:
    """Wall-clock per single-frame predict, after one untimed warm-up pass."""
    frames = [f for f in frames if f.landmarks is not None]
    total = len(frames) * repetitions
    if total < 100:
        raise BenchmarkError(f"need at least 100 measured inferences, would get {total}")
    for frame in frames:
        predict(model, frame)
    samples = np.empty(total)
    i = 0
    for _ in range(repetitions):
        for frame in frames:
            started = time.perf_counter_ns()
            predict(model, frame)
            samples[i] = (time.perf_counter_ns() - started) / 1000.0
            i += 1
    return LatencyStats(
        frames_measured=total,
        mean_us=float(samples.mean()),
        median_us=float(np.median(samples)),
        p95_us=float(np.percentile(samples, 95)),
        max_us=float(samples.max()),
    )


class Transition(Enum):
    NONE = "none"
    RAISED = "raised"
    CLEARED = "cleared"


@dataclass(frozen=True)
class DebounceConfig:
    """Alert when at least `threshold` of the last `window` frames are sleepy.

    A frame counts as sleepy when p_sleepy >= cutoff; the tie errs toward
    alerting. Before `window` frames have been seen, only observed frames
    count, so an alert still requires `threshold` actual sleepy frames.
    """

    window: int = 10
    threshold: int = 8
    cutoff: float = 0.5

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError(f"window must be positive, got {self.window}")
        if not 1 <= self.threshold <= self.window:
            raise ConfigError(
                f"threshold must be within [1, window={self.window}], got {self.threshold}"
            )
        if not np.isfinite(self.cutoff):
            raise ConfigError("probability cutoff must be finite")


@dataclass
class AlertEvent:
    t_ms: int | None
    label: str
    p_sleepy: float | None
    alert_active: bool
    transition: Transition


class Debouncer:
    """Rolling-window alert state machine over per-frame classifications."""

    def __init__(self, config: DebounceConfig | None = None):
        self.config = config or DebounceConfig()
        self._recent = deque(maxlen=self.config.window)
        self.alert_active = False

    def step(self, t_ms: int | None, label: DrowsyLabel, p_sleepy: float) -> AlertEvent:
        self._recent.append(p_sleepy >= self.config.cutoff)
        active = sum(self._recent) >= self.config.threshold
        if active and not self.alert_active:
            transition = Transition.RAISED
        elif not active and self.alert_active:
            transition = Transition.CLEARED
        else:
            transition = Transition.NONE
        self.alert_active = active
        return AlertEvent(
            t_ms=t_ms,
            label=label.value,
            p_sleepy=p_sleepy,
            alert_active=active,
            transition=transition,
        )


def _classify_record(model: MlpModel, debouncer: Debouncer, line: str) -> dict | None:
    text = line.strip()
    if not text:
        return None

    def error_record(t_ms=None):
        return {
            "t_ms": t_ms,
            "label": "error",
            "p_sleepy": None,
            "alert": debouncer.alert_active,
            "transition": Transition.NONE.value,
        }

    try:
        obj = json.loads(text)
    except ValueError:
        return error_record()
    if not isinstance(obj, dict):
        return error_record()
    t_ms = obj.get("t_ms")
    if isinstance(t_ms, bool) or not isinstance(t_ms, int) or t_ms < 0:
        return error_record()
    frame_index = obj.get("frame")
    if isinstance(frame_index, bool) or not isinstance(frame_index, int) or frame_index < 0:
        return error_record(t_ms)
    if "landmarks" not in obj:
        return error_record(t_ms)
    if obj["landmarks"] is None:
        # Upstream found no face: report it, leave the debounce window alone.
        return {
            "t_ms": t_ms,
            "label": "skipped",
            "p_sleepy": None,
            "alert": debouncer.alert_active,
            "transition": Transition.NONE.value,
        }
    try:
        points = landmarks_from_json(obj["landmarks"])
    except DmlpError:
        return error_record(t_ms)
    label, p_sleepy = predict_features(model, points)
    event = debouncer.step(t_ms, label, p_sleepy)
    return {
        "t_ms": t_ms,
        "label": label.value,
        "p_sleepy": p_sleepy,
        "alert": event.alert_active,
        "transition": event.transition.value,
    }


_EOF = object()


def stream_serve(model: MlpModel, source, sink, config: DebounceConfig | None = None) -> int:
    """Classify newline-delimited records from `source` into `sink`.

    Emits exactly one output line per input record, in input order:
    malformed lines become `error` records, null-landmark lines become
    `skipped` records (the debounce window does not advance), everything
    else is classified and debounced. Returns the number of emitted lines.
    """
    in_q: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
    out_q: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)

    def read_source():
        try:
            for line in source:
                in_q.put(line)
        finally:
            in_q.put(_EOF)

    def write_sink():
        while True:
            item = out_q.get()
            if item is _EOF:
                break
            sink.write(item)
            sink.flush()

    reader = threading.Thread(target=read_source, name="stream-reader", daemon=True)
    writer = threading.Thread(target=write_sink, name="stream-writer", daemon=True)
    reader.start()
    writer.start()
    debouncer = Debouncer(config)
    emitted = 0
    while True:
        line = in_q.get()
        if line is _EOF:
            break
        record = _classify_record(model, debouncer, line)
        if record is None:
            continue
        out_q.put(json.dumps(record, separators=(",", ":")) + "\n")
        emitted += 1
    out_q.put(_EOF)
    reader.join()
    writer.join()
    return emitted


def serve_connections(
    model: MlpModel,
    listener: socket.socket,
    config: DebounceConfig | None = None,
    max_connections: int | None = None,
) -> int:
    """Accept connections sequentially on a bound listening socket.

    Each connection streams records in and alert records back out over the
    same socket, with a fresh debounce state. Returns connections served.
    """
    served = 0
    while max_connections is None or served < max_connections:
        try:
            conn, _addr = listener.accept()
        except OSError as exc:
            raise StreamError(f"listener failed: {exc}") from exc
        with conn:
            rfile = conn.makefile("r", encoding="utf-8", newline="\n")
            wfile = conn.makefile("w", encoding="utf-8", newline="\n")
            try:
                stream_serve(model, rfile, wfile, config)
            except OSError:
                pass  # client reset mid-stream; next connection starts clean
            finally:
                rfile.close()
                try:
                    wfile.close()
                except OSError:
                    pass
        served += 1
    return served
