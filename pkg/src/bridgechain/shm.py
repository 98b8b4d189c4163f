"""Damage features from strain snapshots: POM extraction and novelty index.

A frame of strain readings (time x sensors) is turned into a mean-centred
snapshot matrix with one row per sensor. The first proper orthogonal mode
(dominant left singular vector) is the damage feature; the novelty index is
its Euclidean distance from the mean of healthy features.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AllZero,
    BadCalibration,
    BadThreshold,
    DimensionMismatch,
    EmptyBaseline,
    NonFinite,
    SvdFailure,
    TooSmall,
    ZeroMatrix,
)

DEFAULT_SAMPLE_RATE_HZ = 256
DEFAULT_EPS = 0.15
UNHEALTHY_MESSAGE = "Unhealthy bridge detected!"

# relative tolerance under which two singular values count as tied
_TIE_RTOL = 1e-12


class HealthState(str, enum.Enum):
    HEALTHY = "Healthy"
    UNHEALTHY = "Unhealthy"


class FeatureKind(str, enum.Enum):
    POM = "pom"
    BASELINE_MEAN = "baseline_mean"


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SensorFrame:
    """One ingested file: ``values[t, j]`` is sensor ``j`` at sample ``t``."""

    bridge_id: str
    file_id: str
    values: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise TooSmall(f"frame must be 2-D, got shape {values.shape}")
        n_t, s = values.shape
        if n_t < 2 or s < 2:
            raise TooSmall(f"frame needs >= 2 samples and >= 2 sensors, got {n_t}x{s}")
        if not np.all(np.isfinite(values)):
            raise NonFinite(f"frame {self.file_id!r} contains NaN/Inf")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.values.shape[1]

    @property
    def nbytes(self) -> int:
        return int(self.values.nbytes)


@dataclass(frozen=True)
class SnapshotMatrix:
    """Centred snapshots, shape ``(sensors, snapshot_count)``."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[1] < 1:
            raise TooSmall(f"snapshot matrix needs >= 1 column, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise NonFinite("snapshot matrix contains NaN/Inf")
        object.__setattr__(self, "entries", _readonly(entries))

    @property
    def snapshot_count(self) -> int:
        return self.entries.shape[1]

    @property
    def n_sensors(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class FeatureVector:
    components: np.ndarray
    kind: FeatureKind = FeatureKind.POM

    def __post_init__(self):
        comps = np.array(self.components, dtype=float).reshape(-1)
        kind = FeatureKind(self.kind)
        if kind is FeatureKind.POM:
            norm = np.linalg.norm(comps)
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"POM must have unit norm, got {norm!r}")
            if comps[np.argmax(np.abs(comps))] < 0:
                raise ValueError("POM sign convention violated")
        object.__setattr__(self, "components", _readonly(comps))
        object.__setattr__(self, "kind", kind)

    def __len__(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class Calibration:
    n_ref: float
    healthy_count: int = 1

    def __post_init__(self):
        if not self.n_ref > 0 or not np.isfinite(self.n_ref):
            raise BadCalibration(f"n_ref must be positive and finite, got {self.n_ref!r}")
        if self.healthy_count < 1:
            raise BadCalibration("healthy_count must be >= 1")


@dataclass(frozen=True)
class NoveltyRecord:
    """A per-sensor-group novelty result for one epoch, as stored on-chain."""

    bridge_id: str
    epoch: int
    sensor_group: int
    ni_raw: float
    ni_norm: float
    state: HealthState
    threshold_eps: float = DEFAULT_EPS
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "state", HealthState(self.state))

    def is_consistent(self) -> bool:
        try:
            expected = classify(self.ni_norm, self.threshold_eps)
        except BadThreshold:
            return False
        return (
            self.epoch >= 0
            and self.sensor_group >= 0
            and np.isfinite(self.ni_raw)
            and self.ni_raw >= 0
            and 0.0 <= self.ni_norm <= 1.0
            and expected is self.state
        )


def build_snapshot_matrix(frame: SensorFrame) -> SnapshotMatrix:
    """Transpose a frame into sensor rows and subtract each sensor's temporal mean."""
    values = frame.values
    centred = values - values.mean(axis=0, keepdims=True)
    return SnapshotMatrix(centred.T)


def stack_snapshots(frames: Sequence[SensorFrame]) -> SnapshotMatrix:
    """Concatenate the centred snapshots of several frames column-wise.

    Each frame is centred on its own, so static gauge offsets that differ
    between files do not leak into the mode.
    """
    if not frames:
        raise TooSmall("no frames to stack")
    s = frames[0].n_sensors
    for f in frames:
        if f.n_sensors != s:
            raise DimensionMismatch(f"frame {f.file_id!r} has {f.n_sensors} sensors, expected {s}")
    blocks = [f.values - f.values.mean(axis=0, keepdims=True) for f in frames]
    return SnapshotMatrix(np.concatenate(blocks, axis=0).T)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # argmax picks the lowest index among equal magnitudes
    if v[np.argmax(np.abs(v))] < 0:
        return -v
    return v


def singular_values(u: SnapshotMatrix) -> np.ndarray:
    """Singular values of the snapshot matrix, non-increasing."""
    try:
        return np.linalg.svd(u.entries, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc


def compute_pom(u: SnapshotMatrix) -> FeatureVector:
    """First proper orthogonal mode of ``u``.

    Among tied leading singular values the lowest column of the left factor
    is taken. The returned vector has unit norm and its largest-magnitude
    component is non-negative.
    """
    a = u.entries
    scale = np.max(np.abs(a))
    if scale == 0.0:
        raise ZeroMatrix("snapshot matrix is identically zero")
    s, n = a.shape
    # Wide matrices: reduce to an s x s triangular factor first. The left
    # singular vectors of A equal those of R^T where A^T = QR.
    work = a / scale
    if n > s:
        work = np.linalg.qr(work.T, mode="r").T
    try:
        left, sigma, _ = np.linalg.svd(work, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc
    if sigma.size > 1 and np.any(np.diff(sigma) > _TIE_RTOL * sigma[0]):
        raise SvdFailure("singular values are not non-increasing")
    phi = left[:, 0]
    phi = phi / np.linalg.norm(phi)
    return FeatureVector(_fix_sign(phi), FeatureKind.POM)


def healthy_baseline(features: Sequence[FeatureVector]) -> FeatureVector:
    """Component-wise mean of the healthy feature vectors."""
    if len(features) == 0:
        raise EmptyBaseline("baseline needs at least one healthy feature vector")
    n = len(features[0])
    for f in features:
        if len(f) != n:
            raise DimensionMismatch(f"feature length {len(f)} != {n}")
    stacked = np.stack([f.components for f in features])
    return FeatureVector(stacked.sum(axis=0) / len(features), FeatureKind.BASELINE_MEAN)


def raw_novelty(chi: FeatureVector, baseline: FeatureVector) -> float:
    """Euclidean distance between a feature vector and the healthy mean."""
    if len(chi) != len(baseline):
        raise DimensionMismatch(f"lengths differ: {len(chi)} vs {len(baseline)}")
    return float(np.linalg.norm(chi.components - baseline.components))


def sensor_groups(n_sensors: int, width: int = 1) -> list[np.ndarray]:
    """Sliding windows of ``width`` adjacent sensors, one starting at each sensor.

    Windows wrap around the end of the array so there are always exactly
    ``n_sensors`` groups.
    """
    if not 1 <= width <= n_sensors:
        raise ValueError(f"group width must be in [1, {n_sensors}], got {width}")
    base = np.arange(width)
    return [(g + base) % n_sensors for g in range(n_sensors)]


def group_novelty(chi: FeatureVector, baseline: FeatureVector, width: int = 1) -> np.ndarray:
    """Novelty restricted to each sensor group; one value per sensor.

    With ``width == len(chi)`` every group covers the whole array and each
    entry equals :func:`raw_novelty`.
    """
    if len(chi) != len(baseline):
        raise DimensionMismatch(f"lengths differ: {len(chi)} vs {len(baseline)}")
    diff = chi.components - baseline.components
    return np.array([np.linalg.norm(diff[idx]) for idx in sensor_groups(len(chi), width)])


def calibrate(raw_nis: Sequence[float], healthy_count: int = 1) -> Calibration:
    """Anchor the 0-1 scale on the largest raw novelty of a calibration run."""
    values = np.asarray(raw_nis, dtype=float).reshape(-1)
    if values.size == 0:
        raise EmptyBaseline("calibration needs at least one raw NI")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise BadCalibration("raw NI values must be finite and non-negative")
    n_ref = float(values.max())
    if n_ref == 0.0:
        raise AllZero("all calibration NI values are zero")
    return Calibration(n_ref=n_ref, healthy_count=healthy_count)


def normalize_novelty(raw: float, cal: Calibration) -> float:
    if not cal.n_ref > 0:
        raise BadCalibration(f"n_ref must be positive, got {cal.n_ref!r}")
    if raw < 0:
        raise ValueError(f"raw NI must be non-negative, got {raw!r}")
    return min(raw / cal.n_ref, 1.0)


def classify(ni_norm: float, eps: float = DEFAULT_EPS) -> HealthState:
    """Unhealthy iff the normalized NI lies strictly within ``eps`` of 1."""
    if not 0.0 < eps < 1.0:
        raise BadThreshold(f"eps must lie in (0, 1), got {eps!r}")
    if abs(ni_norm - 1.0) < eps:
        return HealthState.UNHEALTHY
    return HealthState.HEALTHY
