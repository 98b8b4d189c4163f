"""Epoch-level novelty monitoring: from m buffered frames to s records."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadCalibration
from .shm import (
    DEFAULT_EPS,
    Calibration,
    FeatureVector,
    NoveltyRecord,
    SensorFrame,
    calibrate,
    classify,
    compute_pom,
    group_novelty,
    healthy_baseline,
    normalize_novelty,
    stack_snapshots,
)


def epoch_feature(frames: Sequence[SensorFrame]) -> FeatureVector:
    """POM of the snapshot matrix built from all frames of one epoch."""
    return compute_pom(stack_snapshots(frames))


@dataclass
class NoveltyMonitor:
    """Holds the healthy baseline and calibration for one bridge.

    ``group_width`` selects how many adjacent sensors feed each of the s
    per-epoch novelty values; ``group_width == s`` gives s copies of the
    whole-array novelty index.
    """

    baseline: FeatureVector
    calibration: Calibration | None = None
    eps: float = DEFAULT_EPS
    group_width: int = 1

    @classmethod
    def fit(cls, healthy_epochs: Sequence[Sequence[SensorFrame]], **kwargs) -> "NoveltyMonitor":
        features = [epoch_feature(ep) for ep in healthy_epochs]
        return cls(baseline=healthy_baseline(features), **kwargs)

    @property
    def n_sensors(self) -> int:
        return len(self.baseline)

    def raw(self, frames: Sequence[SensorFrame]) -> np.ndarray:
        return group_novelty(epoch_feature(frames), self.baseline, self.group_width)

    def raw_total(self, frames: Sequence[SensorFrame]) -> float:
        """Whole-array novelty index of one epoch."""
        diff = epoch_feature(frames).components - self.baseline.components
        return float(np.linalg.norm(diff))

    def fit_calibration(self, calibration_epochs: Sequence[Sequence[SensorFrame]],
                        healthy_count: int = 1) -> Calibration:
        raws = np.concatenate([self.raw(ep) for ep in calibration_epochs])
        self.calibration = calibrate(raws, healthy_count=healthy_count)
        return self.calibration

    def records(self, frames: Sequence[SensorFrame], bridge_id: str, epoch: int) -> list[NoveltyRecord]:
        if self.calibration is None:
            raise BadCalibration("monitor has no calibration; call fit_calibration or set n_ref")
        out = []
        for g, raw in enumerate(self.raw(frames)):
            norm = normalize_novelty(float(raw), self.calibration)
            out.append(NoveltyRecord(
                bridge_id=bridge_id,
                epoch=epoch,
                sensor_group=g,
                ni_raw=float(raw),
                ni_norm=norm,
                state=classify(norm, self.eps),
                threshold_eps=self.eps,
            ))
        return out
