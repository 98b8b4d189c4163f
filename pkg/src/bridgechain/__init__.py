"""Bridge strain monitoring with novelty indices stored on a simulated DPoS chain."""

__version__ = "0.1.0"

from .chain import Chain, NetworkModel, Simulator, supermajority
from .contract import ContractRuntime, CostModel
from .ingest import DamageLevel, DamageScenario, FrameBuffer, parse_frame, synthesize_dataset, synthesize_frames
from .pipeline import NoveltyMonitor
from .shm import (
    Calibration,
    FeatureVector,
    HealthState,
    NoveltyRecord,
    SensorFrame,
    SnapshotMatrix,
    build_snapshot_matrix,
    calibrate,
    classify,
    compute_pom,
    healthy_baseline,
    normalize_novelty,
    raw_novelty,
)

__all__ = [
    "Calibration", "Chain", "ContractRuntime", "CostModel", "DamageLevel", "DamageScenario",
    "FeatureVector", "FrameBuffer", "HealthState", "NetworkModel", "NoveltyMonitor",
    "NoveltyRecord", "SensorFrame", "Simulator", "SnapshotMatrix", "build_snapshot_matrix",
    "calibrate", "classify", "compute_pom", "healthy_baseline", "normalize_novelty",
    "parse_frame", "raw_novelty", "supermajority", "synthesize_dataset", "synthesize_frames",
]
