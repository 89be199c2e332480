"""Landmark dataset tooling.

Frame files are newline-delimited JSON, one record per line:

    {"subject": "s01", "scenario": "glasses", "label": "sleepy",
     "frame": 0, "t_ms": 0, "landmarks": [[x, y], ... 68 pairs ...]}

A record whose upstream extractor found no face carries `"landmarks": null`;
such records never enter the returned frame lists but are counted in the
manifest so dropped-frame accounting is reproducible from the files alone.
Split files are JSON objects with `train` and `eval` subject-id lists.
"""

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DmlpError,
    NumericError,
    ParseError,
    ShapeError,
    SplitError,
)

NUM_LANDMARKS = 68


class Scenario(Enum):
    """Recording condition; declaration order is the report row order."""

    WITH_GLASSES = "glasses"
    NIGHT_WITHOUT_GLASSES = "nightnoglasses"
    NIGHT_WITH_GLASSES = "nightglasses"
    WITHOUT_GLASSES = "noglasses"
    WITH_SUNGLASSES = "sunglasses"

    @property
    def display(self) -> str:
        return _SCENARIO_DISPLAY[self]


_SCENARIO_DISPLAY = {
    Scenario.WITH_GLASSES: "With glasses",
    Scenario.NIGHT_WITHOUT_GLASSES: "Night Without glasses",
    Scenario.NIGHT_WITH_GLASSES: "Night With glasses",
    Scenario.WITHOUT_GLASSES: "Without glasses",
    Scenario.WITH_SUNGLASSES: "With sunglasses",
}

_SCENARIO_BY_WIRE = {s.value: s for s in Scenario}


class DrowsyLabel(Enum):
    NOT_SLEEPY = "notsleepy"
    SLEEPY = "sleepy"

    @property
    def index(self) -> int:
        """Class index: NOT_SLEEPY is 0, SLEEPY is 1."""
        return 1 if self is DrowsyLabel.SLEEPY else 0


_LABEL_BY_WIRE = {l.value: l for l in DrowsyLabel}


def landmarks_from_json(value) -> np.ndarray:
    """Validate a 68-pair coordinate array parsed from JSON."""
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"landmarks are not numeric: {exc}") from exc
    if arr.shape != (NUM_LANDMARKS, 2):
        raise ShapeError(f"landmarks shape {arr.shape} != ({NUM_LANDMARKS}, 2)")
    if not np.all(np.isfinite(arr)):
        raise NumericError("landmarks contain non-finite values")
    return arr


@dataclass
class LandmarkFrame:
    """One timestamped observation: 68 (x, y) points plus identity metadata.

    `landmarks` is None for records the upstream extractor could not map;
    coordinates are nominally within the 640x480 source but slightly
    out-of-frame points are accepted.
    """

    subject: str
    scenario: Scenario
    label: DrowsyLabel
    frame_index: int
    t_ms: int
    landmarks: np.ndarray | None

    def __post_init__(self):
        if not isinstance(self.subject, str) or not self.subject:
            raise ParseError(f"subject must be a nonempty string, got {self.subject!r}")
        if self.frame_index < 0:
            raise ParseError(f"frame index must be nonnegative, got {self.frame_index}")
        if self.t_ms < 0:
            raise ParseError(f"timestamp must be nonnegative, got {self.t_ms}")
        if self.landmarks is not None:
            self.landmarks = landmarks_from_json(self.landmarks)

    @property
    def has_landmarks(self) -> bool:
        return self.landmarks is not None


def _require_int(obj: dict, key: str) -> int:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"field {key!r} must be an integer, got {value!r}")
    return value


def frame_from_obj(obj) -> LandmarkFrame:
    """Build a frame from one decoded record; raises ParseError family on misuse."""
    if not isinstance(obj, dict):
        raise ParseError(f"record must be an object, got {type(obj).__name__}")
    scenario = _SCENARIO_BY_WIRE.get(obj.get("scenario"))
    if scenario is None:
        raise ParseError(f"unknown scenario {obj.get('scenario')!r}")
    label = _LABEL_BY_WIRE.get(obj.get("label"))
    if label is None:
        raise ParseError(f"unknown label {obj.get('label')!r}")
    if "landmarks" not in obj:
        raise ParseError("record is missing the 'landmarks' field")
    landmarks = obj["landmarks"]
    return LandmarkFrame(
        subject=obj.get("subject"),
        scenario=scenario,
        label=label,
        frame_index=_require_int(obj, "frame"),
        t_ms=_require_int(obj, "t_ms"),
        landmarks=landmarks,
    )


def frame_to_obj(frame: LandmarkFrame) -> dict:
    return {
        "subject": frame.subject,
        "scenario": frame.scenario.value,
        "label": frame.label.value,
        "frame": frame.frame_index,
        "t_ms": frame.t_ms,
        "landmarks": None if frame.landmarks is None else frame.landmarks.tolist(),
    }


def write_frames(frames, path) -> int:
    """Write frames as newline-delimited records; returns the record count."""
    path = Path(path)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame in frames:
            fh.write(json.dumps(frame_to_obj(frame), separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/eval subject-id sets; routing is always by subject."""

    train_subjects: frozenset
    eval_subjects: frozenset

    def __post_init__(self):
        overlap = self.train_subjects & self.eval_subjects
        if overlap:
            raise SplitError(f"subjects in both splits: {sorted(overlap)}")

    @classmethod
    def of(cls, train_ids, eval_ids) -> "SplitSpec":
        return cls(train_subjects=frozenset(train_ids), eval_subjects=frozenset(eval_ids))

    @classmethod
    def from_file(cls, path) -> "SplitSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read split file {path}: {exc}") from exc
        except ValueError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "train" not in obj or "eval" not in obj:
            raise ParseError(f"{path}: split file needs 'train' and 'eval' lists")
        for key in ("train", "eval"):
            ids = obj[key]
            if not isinstance(ids, list) or not all(isinstance(s, str) for s in ids):
                raise ParseError(f"{path}: {key!r} must be a list of subject id strings")
        return cls.of(obj["train"], obj["eval"])

    def to_obj(self) -> dict:
        return {"train": sorted(self.train_subjects), "eval": sorted(self.eval_subjects)}


@dataclass
class ManifestRow:
    videos: int = 0
    frames_extracted: int = 0
    frames_dropped: int = 0


SPLIT_NAMES = ("train", "eval")
_SPLIT_DISPLAY = {"train": "Training", "eval": "Evaluation"}


@dataclass
class DatasetManifest:
    """Per (split, scenario) accounting.

    `videos` counts distinct (subject, label) recordings seen in the files,
    `frames_extracted` the records with usable landmarks, `frames_dropped`
    the null-landmark records. Totals are always the column sums.
    """

    rows: dict = field(default_factory=dict)

    @property
    def totals(self) -> ManifestRow:
        total = ManifestRow()
        for row in self.rows.values():
            total.videos += row.videos
            total.frames_extracted += row.frames_extracted
            total.frames_dropped += row.frames_dropped
        return total

    def _ordered_keys(self):
        for split in SPLIT_NAMES:
            for scenario in Scenario:
                if (split, scenario) in self.rows:
                    yield split, scenario

    def to_dict(self) -> dict:
        rows = []
        for split, scenario in self._ordered_keys():
            row = self.rows[(split, scenario)]
            rows.append(
                {
                    "split": split,
                    "scenario": scenario.value,
                    "videos": int(row.videos),
                    "frames_extracted": int(row.frames_extracted),
                    "frames_dropped": int(row.frames_dropped),
                }
            )
        totals = self.totals
        return {
            "rows": rows,
            "totals": {
                "videos": int(totals.videos),
                "frames_extracted": int(totals.frames_extracted),
                "frames_dropped": int(totals.frames_dropped),
            },
        }

    @classmethod
    def from_dict(cls, obj) -> "DatasetManifest":
        if not isinstance(obj, dict) or "rows" not in obj:
            raise ParseError("manifest object needs a 'rows' list")
        manifest = cls()
        for entry in obj["rows"]:
            split = entry.get("split")
            if split not in SPLIT_NAMES:
                raise ParseError(f"unknown split {split!r}")
            scenario = _SCENARIO_BY_WIRE.get(entry.get("scenario"))
            if scenario is None:
                raise ParseError(f"unknown scenario {entry.get('scenario')!r}")
            manifest.rows[(split, scenario)] = ManifestRow(
                videos=int(entry["videos"]),
                frames_extracted=int(entry["frames_extracted"]),
                frames_dropped=int(entry["frames_dropped"]),
            )
        totals = obj.get("totals")
        if totals is not None:
            have = manifest.totals
            stated = (totals["videos"], totals["frames_extracted"], totals["frames_dropped"])
            if stated != (have.videos, have.frames_extracted, have.frames_dropped):
                raise ParseError("manifest totals do not equal the sum of its rows")
        return manifest


def manifest_report(manifest: DatasetManifest) -> str:
    """Tab-separated table: one row per populated (split, scenario), then totals."""
    lines = ["dataset\tcategory\tvideos\tframes_extracted\tframes_dropped"]
    for split, scenario in manifest._ordered_keys():
        row = manifest.rows[(split, scenario)]
        lines.append(
            f"{_SPLIT_DISPLAY[split]}\t{scenario.display}\t{row.videos}"
            f"\t{row.frames_extracted}\t{row.frames_dropped}"
        )
    totals = manifest.totals
    lines.append(f"Total\t\t{totals.videos}\t{totals.frames_extracted}\t{totals.frames_dropped}")
    return "\n".join(lines)


def _resolve_frame_files(path) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.glob("*.jsonl") if p.is_file())
    if path.is_file():
        return [path]
    raise DataError(f"no frame file or directory at {path}")


def load_dataset(path, split: SplitSpec):
    """Load frame files, route frames to splits by subject, and account for drops.

    Returns (train_frames, eval_frames, manifest). Frames keep file order.
    Records with null landmarks are counted as dropped and excluded; a
    subject absent from both split lists is a hard error so no frame can
    silently leak across splits.
    """
    if not split.train_subjects:
        raise DataError("split spec lists no training subjects")
    files = _resolve_frame_files(path)
    if not files:
        raise DataError(f"no .jsonl frame files under {path}")
    train_frames: list[LandmarkFrame] = []
    eval_frames: list[LandmarkFrame] = []
    rows: dict = defaultdict(ManifestRow)
    videos: dict = defaultdict(set)
    for file_path in files:
        try:
            fh = open(file_path, encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read {file_path}: {exc}") from exc
        with fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                try:
                    frame = frame_from_obj(json.loads(line))
                except ValueError as exc:
                    raise ParseError(f"{file_path}:{lineno}: invalid JSON: {exc}") from exc
                except DmlpError as exc:
                    raise ParseError(f"{file_path}:{lineno}: {exc}") from exc
                if frame.subject in split.train_subjects:
                    dest = "train"
                elif frame.subject in split.eval_subjects:
                    dest = "eval"
                else:
                    raise SplitError(
                        f"{file_path}:{lineno}: subject {frame.subject!r} is in neither split list"
                    )
                key = (dest, frame.scenario)
                videos[key].add((frame.subject, frame.label))
                if frame.has_landmarks:
                    rows[key].frames_extracted += 1
                    (train_frames if dest == "train" else eval_frames).append(frame)
                else:
                    rows[key].frames_dropped += 1
    for key, recordings in videos.items():
        rows[key].videos = len(recordings)
    return train_frames, eval_frames, DatasetManifest(rows=dict(rows))


# --- synthetic landmark sequences -------------------------------------------

SYNTH_SUBJECTS = tuple(f"s{i:02d}" for i in range(1, 23))

_EYE_AXIS_Y = 215.0
_EYE_LID_OFFSET = 7.0
_CLOSED_LID_FACTOR = 0.12
EYE_POINTS = slice(36, 48)


def default_synth_split() -> SplitSpec:
    """18 training subjects and 4 evaluation subjects from the synthetic pool."""
    return SplitSpec.of(SYNTH_SUBJECTS[:18], SYNTH_SUBJECTS[18:])


def _eye_points(cx: float) -> np.ndarray:
    return np.array(
        [
            [cx - 20.0, _EYE_AXIS_Y],
            [cx - 8.0, _EYE_AXIS_Y - _EYE_LID_OFFSET],
            [cx + 8.0, _EYE_AXIS_Y - _EYE_LID_OFFSET],
            [cx + 20.0, _EYE_AXIS_Y],
            [cx + 8.0, _EYE_AXIS_Y + _EYE_LID_OFFSET],
            [cx - 8.0, _EYE_AXIS_Y + _EYE_LID_OFFSET],
        ]
    )


def face_template() -> np.ndarray:
    """Neutral open-eyed 68-point face centered in 640x480 pixel space."""
    pts = np.zeros((NUM_LANDMARKS, 2))
    jaw_t = np.linspace(np.pi, 0.0, 17)
    pts[0:17, 0] = 320.0 + 75.0 * np.cos(jaw_t)
    pts[0:17, 1] = 200.0 + 145.0 * np.sin(jaw_t)
    arch = np.array([0.0, 6.0, 8.0, 6.0, 0.0])
    pts[17:22, 0] = np.linspace(248.0, 302.0, 5)
    pts[17:22, 1] = 192.0 - arch
    pts[22:27, 0] = np.linspace(338.0, 392.0, 5)
    pts[22:27, 1] = 192.0 - arch
    pts[27:31, 0] = 320.0
    pts[27:31, 1] = np.linspace(205.0, 250.0, 4)
    pts[31:36, 0] = np.linspace(300.0, 340.0, 5)
    pts[31:36, 1] = np.array([262.0, 266.0, 268.0, 266.0, 262.0])
    pts[36:42] = _eye_points(275.0)
    pts[42:48] = _eye_points(365.0)
    outer_t = np.linspace(0.0, 2.0 * np.pi, 13)[:-1]
    pts[48:60, 0] = 320.0 + 28.0 * np.cos(outer_t)
    pts[48:60, 1] = 300.0 + 12.0 * np.sin(outer_t)
    inner_t = np.linspace(0.0, 2.0 * np.pi, 9)[:-1]
    pts[60:68, 0] = 320.0 + 18.0 * np.cos(inner_t)
    pts[60:68, 1] = 300.0 + 5.0 * np.sin(inner_t)
    return pts


def synth_generate(count: int, sleepy_fraction: float, noise_px: float, seed: int):
    """Deterministic synthetic landmark frames for desk-scale verification.

    Sleepy frames collapse the 12 eye points toward the eye axis (low
    aperture); all points then receive seeded Gaussian jitter of
    `noise_px` pixels. The first round(count * sleepy_fraction) frames are
    sleepy; subjects and scenarios cycle through fixed pools.
    """
    if count <= 0:
        raise ConfigError(f"frame count must be positive, got {count}")
    if not 0.0 <= sleepy_fraction <= 1.0:
        raise ConfigError(f"sleepy fraction must be within [0, 1], got {sleepy_fraction}")
    if noise_px < 0.0:
        raise ConfigError(f"noise level must be nonnegative, got {noise_px}")
    rng = np.random.Generator(np.random.PCG64(seed))
    template = face_template()
    scenarios = list(Scenario)
    n_sleepy = int(round(count * sleepy_fraction))
    frames = []
    for i in range(count):
        sleepy = i < n_sleepy
        pts = template.copy()
        if sleepy:
            offsets = pts[EYE_POINTS, 1] - _EYE_AXIS_Y
            pts[EYE_POINTS, 1] = _EYE_AXIS_Y + offsets * _CLOSED_LID_FACTOR
        pts = pts + rng.normal(size=(NUM_LANDMARKS, 2)) * noise_px
        frames.append(
            LandmarkFrame(
                subject=SYNTH_SUBJECTS[i % len(SYNTH_SUBJECTS)],
                scenario=scenarios[i % len(scenarios)],
                label=DrowsyLabel.SLEEPY if sleepy else DrowsyLabel.NOT_SLEEPY,
                frame_index=i,
                t_ms=i * 1000 // 30,
                landmarks=pts,
            )
        )
    return frames
