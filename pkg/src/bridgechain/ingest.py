"""Sensor file ingestion, the bounded frame buffer, and the synthetic bridge.

CSV layout: a header ``t,s001,...,sNNN`` followed by one row per sample,
UTF-8, LF line endings, ``.`` as decimal separator.
"""

from __future__ import annotations

import enum
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadDimensions,
    FrameTooLarge,
    InsufficientFrames,
    MalformedCsv,
    NonFinite,
    RaggedRows,
)
from .shm import DEFAULT_SAMPLE_RATE_HZ, SensorFrame

DEFAULT_BUFFER_BYTES = 150 * 2**20


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def sensor_header(s: int) -> str:
    return ",".join(["t"] + [f"s{j + 1:03d}" for j in range(s)])


def serialize_frame(frame: SensorFrame) -> bytes:
    """Render a frame as CSV bytes; values keep 12 significant digits."""
    n_t, s = frame.values.shape
    t = np.arange(n_t) / frame.sample_rate_hz
    buf = io.StringIO()
    buf.write(sensor_header(s) + "\n")
    data = np.column_stack([t, frame.values])
    np.savetxt(buf, data, fmt=["%.9f"] + ["%.12g"] * s, delimiter=",", newline="\n")
    return buf.getvalue().encode("utf-8")


def parse_frame(
    data: bytes,
    bridge_id: str = "",
    file_id: str = "",
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ,
) -> SensorFrame:
    """Parse CSV bytes into a :class:`SensorFrame`.

    The leading ``t`` column is checked for presence but otherwise ignored.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedCsv(f"{file_id}: not UTF-8") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedCsv(f"{file_id}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "t" or len(header) < 2 or any(not h for h in header):
        raise MalformedCsv(f"{file_id}: header must be 't,s001,...', got {lines[0]!r}")
    rows = lines[1:]
    if not rows:
        raise MalformedCsv(f"{file_id}: header only, no data rows")
    width = len(header)
    values = np.empty((len(rows), width - 1))
    for i, line in enumerate(rows):
        cells = line.split(",")
        if len(cells) != width:
            raise RaggedRows(f"{file_id}: row {i + 1} has {len(cells)} cells, expected {width}")
        try:
            parsed = [float(c) for c in cells]
        except ValueError as exc:
            raise MalformedCsv(f"{file_id}: row {i + 1}: {exc}") from exc
        if not all(math.isfinite(v) for v in parsed):
            raise NonFinite(f"{file_id}: row {i + 1} contains a non-finite value")
        values[i] = parsed[1:]
    return SensorFrame(bridge_id=bridge_id, file_id=file_id, values=values,
                       sample_rate_hz=sample_rate_hz)


# --------------------------------------------------------------------------
# Buffer
# --------------------------------------------------------------------------

@dataclass
class PushResult:
    accepted: bool
    evicted: list[SensorFrame] = field(default_factory=list)

    @property
    def eviction_count(self) -> int:
        return len(self.evicted)


class FrameBuffer:
    """FIFO buffer of frames bounded by total byte size.

    Pushing a frame evicts the oldest resident frames until it fits.
    """

    def __init__(self, capacity_bytes: int = DEFAULT_BUFFER_BYTES, epoch_size: int = 1):
        if capacity_bytes <= 0:
            raise ValueError("capacity_bytes must be positive")
        if epoch_size <= 0:
            raise ValueError("epoch_size must be positive")
        self.capacity_bytes = int(capacity_bytes)
        self.epoch_size = int(epoch_size)
        self._frames: deque[SensorFrame] = deque()
        self.used_bytes = 0
        self.pushed = 0
        self.evicted = 0
        self.batched = 0

    def __len__(self) -> int:
        return len(self._frames)

    def __iter__(self):
        return iter(self._frames)

    def push(self, frame: SensorFrame) -> PushResult:
        size = frame.nbytes
        if size > self.capacity_bytes:
            raise FrameTooLarge(f"frame of {size} B exceeds buffer capacity {self.capacity_bytes} B")
        evicted = []
        while self.used_bytes + size > self.capacity_bytes:
            old = self._frames.popleft()
            self.used_bytes -= old.nbytes
            evicted.append(old)
        self._frames.append(frame)
        self.used_bytes += size
        self.pushed += 1
        self.evicted += len(evicted)
        return PushResult(accepted=True, evicted=evicted)

    def epoch_batch(self, m: int | None = None) -> list[SensorFrame]:
        """Remove and return the ``m`` oldest frames."""
        m = self.epoch_size if m is None else m
        if m <= 0:
            raise ValueError("m must be positive")
        if m > len(self._frames):
            raise InsufficientFrames(f"need {m} frames, {len(self._frames)} resident")
        batch = [self._frames.popleft() for _ in range(m)]
        self.used_bytes -= sum(f.nbytes for f in batch)
        self.batched += m
        return batch


def buffer_push(buf: FrameBuffer, frame: SensorFrame) -> PushResult:
    return buf.push(frame)


def epoch_batch(buf: FrameBuffer, m: int) -> list[SensorFrame]:
    return buf.epoch_batch(m)


# --------------------------------------------------------------------------
# Synthetic bridge
# --------------------------------------------------------------------------

class DamageLevel(str, enum.Enum):
    H = "H"
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"


SEVERITY = {DamageLevel.H: 0.0, DamageLevel.D1: 0.3, DamageLevel.D2: 0.6, DamageLevel.D3: 0.95}


def default_damage_zone(s: int) -> frozenset[int]:
    """Sensors between 60% and 80% of the deck width, at least one."""
    lo = int(0.6 * s)
    hi = max(lo + 1, int(0.8 * s))
    return frozenset(range(lo, min(hi, s)))


@dataclass(frozen=True)
class DamageScenario:
    level: DamageLevel
    affected_sensors: frozenset[int] = frozenset()

    def __post_init__(self):
        level = DamageLevel(self.level)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "affected_sensors", frozenset(int(i) for i in self.affected_sensors))
        if level is DamageLevel.H and self.affected_sensors:
            raise ValueError("healthy scenario cannot have affected sensors")
        if level is not DamageLevel.H and not self.affected_sensors:
            raise ValueError(f"{level.value} scenario needs affected sensors")

    @property
    def severity(self) -> float:
        return SEVERITY[self.level]

    @classmethod
    def for_level(cls, level: DamageLevel | str, s: int) -> "DamageScenario":
        level = DamageLevel(level)
        if level is DamageLevel.H:
            return cls(level)
        return cls(level, default_damage_zone(s))


@dataclass(frozen=True)
class SignalModel:
    """Knobs of the synthetic vehicle-passage response.

    Two damped sinusoids with spatial shapes sin(pi x) and sin(2 pi x) across
    the deck; damage scales the affected sensors by ``1 + severity`` and
    shifts their phase by ``severity * phase_shift_rad``.
    """

    f1_hz: float = 3.2
    f2_hz: float = 8.5
    zeta1: float = 0.04
    zeta2: float = 0.06
    second_mode_ratio: float = 0.35
    peak_microstrain: float = 120.0
    noise_fraction: float = 0.05
    phase_shift_rad: float = math.pi / 8
    load_range: tuple[float, float] = (0.6, 1.4)
    onset_range: tuple[float, float] = (0.05, 0.25)
    freq_jitter: float = 0.03
    offset_range: float = 25.0


def synthesize_frames(
    scenario: DamageScenario,
    n_files: int,
    s: int,
    n_t: int,
    seed: int,
    bridge_id: str = "bridge",
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ,
    model: SignalModel = SignalModel(),
) -> list[SensorFrame]:
    if s < 2 or n_t < 64 or n_files < 1:
        raise BadDimensions(f"need s >= 2, n_t >= 64, n_files >= 1; got s={s}, n_t={n_t}, n_files={n_files}")
    if any(not 0 <= j < s for j in scenario.affected_sensors):
        raise BadDimensions(f"affected sensors out of range for s={s}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    x = (np.arange(s) + 0.5) / s
    shape1 = np.sin(np.pi * x)
    shape2 = np.sin(2 * np.pi * x)
    gain = np.ones(s)
    phase = np.zeros(s)
    affected = np.array(sorted(scenario.affected_sensors), dtype=int)
    if affected.size:
        gain[affected] *= 1.0 + scenario.severity
        phase[affected] = scenario.severity * model.phase_shift_rad
    # per-bridge static gauge offsets, removed again by centring
    offsets = rng.uniform(-model.offset_range, model.offset_range, size=s)
    t = np.arange(n_t) / sample_rate_hz
    duration = n_t / sample_rate_hz
    frames = []
    for k in range(n_files):
        load = rng.uniform(*model.load_range)
        onset = rng.uniform(*model.onset_range) * duration
        w1 = 2 * np.pi * model.f1_hz * (1 + rng.uniform(-model.freq_jitter, model.freq_jitter))
        w2 = 2 * np.pi * model.f2_hz * (1 + rng.uniform(-model.freq_jitter, model.freq_jitter))
        tau = np.clip(t - onset, 0.0, None)[:, None]
        live = (t >= onset)[:, None]
        r1 = np.exp(-model.zeta1 * w1 * tau) * np.sin(w1 * tau + phase)
        r2 = np.exp(-model.zeta2 * w2 * tau) * np.sin(w2 * tau + phase)
        response = live * (shape1 * r1 + model.second_mode_ratio * shape2 * r2) * gain
        response *= load * model.peak_microstrain
        peak = np.max(np.abs(response))
        noise = rng.normal(0.0, model.noise_fraction * peak, size=response.shape)
        frames.append(SensorFrame(
            bridge_id=bridge_id,
            file_id=f"{bridge_id}_{scenario.level.value}_{seed}_{k}",
            values=response + noise + offsets,
            sample_rate_hz=sample_rate_hz,
        ))
    return frames


def synthesize_dataset(
    scenario: DamageScenario,
    n_files: int,
    s: int,
    n_t: int,
    seed: int,
    bridge_id: str = "bridge",
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ,
) -> list[bytes]:
    """Deterministic CSV blobs for ``n_files`` simulated vehicle passages."""
    frames = synthesize_frames(scenario, n_files, s, n_t, seed, bridge_id, sample_rate_hz)
    return [serialize_frame(f) for f in frames]


def dataset_filename(bridge_id: str, level: DamageLevel | str, seed: int, index: int) -> str:
    return f"{bridge_id}_{DamageLevel(level).value}_{seed}_{index}.csv"


def frames_from_files(paths: Iterable, sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ,
                      bridge_id: str = "") -> list[SensorFrame]:
    from pathlib import Path

    out = []
    for p in paths:
        p = Path(p)
        out.append(parse_frame(p.read_bytes(), bridge_id=bridge_id, file_id=p.stem,
                               sample_rate_hz=sample_rate_hz))
    return out


def split_epochs(frames: Sequence[SensorFrame], m: int) -> list[list[SensorFrame]]:
    """Chunk frames into consecutive epochs of ``m``; a short tail is dropped."""
    return [list(frames[i:i + m]) for i in range(0, len(frames) - m + 1, m)]
