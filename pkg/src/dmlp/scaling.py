"""Per-feature min-max scaling.

Fitted on training frames only and shipped inside the model file, so
evaluation and streaming apply exactly the map the model was trained with
and never refit.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError, ShapeError

# Out-of-range inputs (unseen at fit time) are mapped by the same affine
# transform and then clamped, so a drifting face degrades instead of crashing.
CLIP_LO = -1.0
CLIP_HI = 2.0


@dataclass
class MinMaxScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.ndim != 1 or self.mins.shape != self.maxs.shape or self.mins.size == 0:
            raise ShapeError(
                f"scaler bounds must be matching nonempty vectors, got {self.mins.shape} and {self.maxs.shape}"
            )
        if not (np.all(np.isfinite(self.mins)) and np.all(np.isfinite(self.maxs))):
            raise NumericError("scaler bounds must be finite")
        if np.any(self.mins > self.maxs):
            raise DataError("scaler minimum exceeds maximum for some feature")

    @property
    def n_features(self) -> int:
        return self.mins.size

    @classmethod
    def fit(cls, X) -> "MinMaxScaler":
        """Elementwise extrema over a nonempty collection of equal-length vectors."""
        try:
            X = np.asarray(X, dtype=np.float64)
        except (ValueError, TypeError) as exc:
            raise ShapeError(f"fitting collection is ragged or non-numeric: {exc}") from exc
        if X.size == 0:
            raise DataError("cannot fit a scaler on an empty collection")
        if X.ndim != 2:
            raise ShapeError(f"fit expects a 2-d collection, got ndim {X.ndim}")
        if not np.all(np.isfinite(X)):
            raise NumericError("fitting collection contains non-finite values")
        return cls(mins=X.min(axis=0), maxs=X.max(axis=0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Map each feature to (x - min) / (max - min), clipped to [-1, 2].

        Constant features (min == max) map to 0.0. Accepts a single vector
        or a (n, features) matrix.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[-1] != self.n_features:
            raise ShapeError(f"input shape {x.shape} does not match {self.n_features} features")
        span = self.maxs - self.mins
        varying = span > 0.0
        safe_span = np.where(varying, span, 1.0)
        y = np.where(varying, (x - self.mins) / safe_span, 0.0)
        return np.clip(y, CLIP_LO, CLIP_HI)
