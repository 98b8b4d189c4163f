"""Desk-scale performance study: node and sensor sweeps, CPU use, storage.

Each scenario runs the whole pipeline on one simulator instance:
synthetic passages -> buffer -> novelty records (or raw samples) ->
contract actions -> blocks and finality. Every producer node acts as a
submission gateway for ``streams_per_node`` bridges, so offered load grows
with the node count. Gateways pace their transactions evenly over the epoch
interval.

All times are simulated milliseconds; nothing here reads the wall clock
except :func:`measure_ni_cost`.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import statistics
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .chain import (
    BLOCK_INTERVAL_MS,
    CPU_BUDGET_US,
    Chain,
    NetworkModel,
    Simulator,
    producer_name,
)
from .contract import ContractRuntime, CostModel
from .errors import ConfigMismatch, InvalidScenario, MixedAxes, ScenarioTooLarge, Underspecified
from .ingest import DamageLevel, DamageScenario, FrameBuffer, synthesize_frames
from .pipeline import NoveltyMonitor

CSV_COLUMNS = [
    "producers", "sensors", "m", "epochs", "with_ni", "blocks_per_sec", "tx_confirmed",
    "avg_latency_ms", "cpu_mean_pct", "cpu_cv", "ledger_values", "ledger_bytes",
]

# baseline and calibration epochs never need more files than this
_REFERENCE_FILES = 16


@dataclass(frozen=True)
class ScenarioConfig:
    producers: int = 5
    sensors: int = 51
    files_per_epoch: int = 4
    epochs: int = 3
    with_ni: bool = True
    seed: int = 0
    network: NetworkModel = NetworkModel()
    samples_per_file: int = 256
    streams_per_node: int = 1
    epoch_interval_ms: int = 10_000
    duration_ms: int | None = None
    level: str = "H"
    baseline_epochs: int = 2
    group_width: int = 1
    eps: float = 0.15
    n_ref: float | None = None
    ni_cost_base_us: float = 5000.0
    ni_cost_per_value_us: float = 0.005
    values_per_tx: int = 512
    drain_limit_ms: int = 3_600_000
    max_events: int = 5_000_000

    def __post_init__(self):
        if not 1 <= self.producers <= 50:
            raise InvalidScenario(f"producers must be in [1, 50], got {self.producers}")
        if not 2 <= self.sensors <= 51:
            raise InvalidScenario(f"sensors must be in [2, 51], got {self.sensors}")
        for name in ("files_per_epoch", "epochs", "streams_per_node", "epoch_interval_ms",
                     "baseline_epochs", "values_per_tx"):
            if getattr(self, name) < 1:
                raise InvalidScenario(f"{name} must be positive")
        if self.samples_per_file < 64:
            raise InvalidScenario("samples_per_file must be >= 64")
        if self.epoch_interval_ms % BLOCK_INTERVAL_MS:
            raise InvalidScenario("epoch_interval_ms must be a multiple of 500")
        if self.duration_ms is not None and self.duration_ms < BLOCK_INTERVAL_MS:
            raise InvalidScenario("duration_ms must cover at least one block")
        DamageLevel(self.level)

    @property
    def streams(self) -> int:
        return self.producers * self.streams_per_node

    def ni_cost_ms(self) -> float:
        values = self.sensors * self.samples_per_file * self.files_per_epoch
        return (self.ni_cost_base_us + self.ni_cost_per_value_us * values) / 1000.0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d


@dataclass
class MetricsReport:
    config: ScenarioConfig
    blocks: int
    duration_ms: int
    blocks_per_sec: float
    lib_blocks_per_sec: float
    tx_submitted_total: int
    tx_confirmed_total: int
    avg_latency_ms: float
    avg_inclusion_latency_ms: float
    cpu_usage_pct_series: list[float]
    ledger_value_count: int
    ledger_bytes: int
    ni_cost_ms: float = 0.0
    unhealthy_events: int = 0
    lib_height: int = 0

    @property
    def cpu_mean_pct(self) -> float:
        return statistics.fmean(self.cpu_usage_pct_series) if self.cpu_usage_pct_series else 0.0

    @property
    def cpu_cv(self) -> float:
        return coefficient_of_variation(self.cpu_usage_pct_series)

    def csv_row(self) -> dict:
        c = self.config
        return {
            "producers": c.producers,
            "sensors": c.sensors,
            "m": c.files_per_epoch,
            "epochs": c.epochs,
            "with_ni": c.with_ni,
            "blocks_per_sec": self.blocks_per_sec,
            "tx_confirmed": self.tx_confirmed_total,
            "avg_latency_ms": self.avg_latency_ms,
            "cpu_mean_pct": self.cpu_mean_pct,
            "cpu_cv": self.cpu_cv,
            "ledger_values": self.ledger_value_count,
            "ledger_bytes": self.ledger_bytes,
        }

    def to_dict(self) -> dict:
        d = {k: v for k, v in dataclasses.asdict(self).items() if k != "config"}
        d["config"] = self.config.to_dict()
        d["cpu_mean_pct"] = self.cpu_mean_pct
        d["cpu_cv"] = self.cpu_cv
        return d


def coefficient_of_variation(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    mean = statistics.fmean(xs)
    if mean == 0:
        return 0.0
    return statistics.pstdev(xs) / mean


def storage_counts(sensors: int, samples_per_file: int, files_per_epoch: int,
                   epochs: int = 1, streams: int = 1) -> tuple[int, int]:
    """Scalar values written on-chain (with NI, without NI)."""
    with_ni = streams * sensors * epochs
    without = streams * sensors * samples_per_file * files_per_epoch * epochs
    return with_ni, without


def _gateway_name(i: int) -> str:
    return "gw" + producer_name(i)[2:]


@dataclass
class _Workload:
    submitted_at: float
    values: int
    payload_bytes: int


def _fit_monitor(cfg: ScenarioConfig) -> NoveltyMonitor:
    s, n_t = cfg.sensors, cfg.samples_per_file
    files = min(cfg.files_per_epoch, _REFERENCE_FILES)
    healthy = DamageScenario.for_level(DamageLevel.H, s)
    baseline = [synthesize_frames(healthy, files, s, n_t, seed=sub_seed(cfg.seed, 1, i))
                for i in range(cfg.baseline_epochs)]
    mon = NoveltyMonitor.fit(baseline, eps=cfg.eps, group_width=cfg.group_width)
    if cfg.n_ref is not None:
        from .shm import Calibration
        mon.calibration = Calibration(cfg.n_ref, cfg.baseline_epochs)
    else:
        worst = DamageScenario.for_level(DamageLevel.D3, s)
        mon.fit_calibration([synthesize_frames(worst, files, s, n_t, seed=sub_seed(cfg.seed, 2, 0))],
                            healthy_count=cfg.baseline_epochs)
    return mon


# gateways submit just after each block so that inclusion wait is the same
# for every transaction; the epoch's load is spread evenly over its slots
_GATEWAY_OFFSET_MS = 1.0


def paced_offset(q: int, total: int, interval_ms: int) -> float:
    slots = interval_ms // BLOCK_INTERVAL_MS
    return (q * slots // total) * BLOCK_INTERVAL_MS + _GATEWAY_OFFSET_MS


def sub_seed(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *path])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def projected_events(cfg: ScenarioConfig) -> int:
    """Rough upper estimate of simulator events, used to refuse huge runs."""
    with_vals, without_vals = storage_counts(cfg.sensors, cfg.samples_per_file, cfg.files_per_epoch,
                                             cfg.epochs, cfg.streams)
    if cfg.with_ni:
        txs = with_vals
        tx_cost = CostModel().cost(160)
    else:
        txs = math.ceil(without_vals / cfg.values_per_tx)
        tx_cost = CostModel().cost(8 * cfg.values_per_tx + 96)
    busy_blocks = math.ceil(txs * tx_cost / CPU_BUDGET_US)
    if cfg.duration_ms is not None:
        blocks = cfg.duration_ms // BLOCK_INTERVAL_MS
    else:
        blocks = max(cfg.epochs * cfg.epoch_interval_ms // BLOCK_INTERVAL_MS, busy_blocks) + 4
    return blocks * (2 * cfg.producers + 1) + 2 * txs


def run_scenario(cfg: ScenarioConfig) -> MetricsReport:
    """Run one scenario end to end and collect its metrics."""
    projected = projected_events(cfg)
    if projected > cfg.max_events:
        raise ScenarioTooLarge(f"projected {projected} events exceeds cap {cfg.max_events}")

    producers = [producer_name(i) for i in range(cfg.producers)]
    chain = Chain(producers, cfg.network)
    runtime = ContractRuntime(chain, CostModel())
    sim = Simulator(chain)

    n_streams = cfg.streams
    gateways = []
    for i in range(n_streams):
        gw = _gateway_name(i)
        chain.create_account(gw, 0.0)
        contract = f"br{i:03d}_0"
        runtime.set_contract(gw, contract, now=0.0)
        gateways.append((gw, contract))

    monitor = _fit_monitor(cfg) if cfg.with_ni else None
    scenario = DamageScenario.for_level(cfg.level, cfg.sensors)
    s, n_t, m = cfg.sensors, cfg.samples_per_file, cfg.files_per_epoch
    interval = cfg.epoch_interval_ms
    ni_ms = cfg.ni_cost_ms() if cfg.with_ni else 0.0
    workload: dict[str, _Workload] = {}
    buffers = [FrameBuffer(epoch_size=m) for _ in range(n_streams)]

    def submit_record(gw, contract, record, t):
        receipt = runtime.push_action_addnovelty(gw, contract, record, now=t)
        workload[receipt.tx_id] = _Workload(t, 1, receipt.payload_bytes)

    def submit_raw(gw, contract, header, chunk, t):
        tx = runtime.push_raw_data(gw, contract, header, chunk.astype("<f8").tobytes(), now=t)
        workload[tx.id] = _Workload(t, int(chunk.size), len(tx.payload))

    first_submit = math.inf
    for e in range(cfg.epochs):
        t_ready = e * interval
        for i, (gw, contract) in enumerate(gateways):
            frames = synthesize_frames(scenario, m, s, n_t, seed=sub_seed(cfg.seed, 3, i, e),
                                       bridge_id=contract.split("_")[0])
            buf = buffers[i]
            for f in frames:
                buf.push(f)
            batch = buf.epoch_batch(m)
            if cfg.with_ni:
                records = monitor.records(batch, bridge_id=contract.split("_")[0], epoch=e)
                total = len(records) * n_streams
                for k, rec in enumerate(records):
                    t = t_ready + paced_offset(k * n_streams + i, total, interval)
                    first_submit = min(first_submit, t)
                    sim.at(t, lambda t, gw=gw, c=contract, r=rec: submit_record(gw, c, r, t))
            else:
                flat = np.stack([f.values for f in batch]).reshape(-1)
                n_chunks = math.ceil(flat.size / cfg.values_per_tx)
                for k in range(n_chunks):
                    lo = k * cfg.values_per_tx
                    chunk = flat[lo:lo + cfg.values_per_tx]
                    header = {"bridge": contract, "epoch": e, "offset": lo, "count": int(chunk.size)}
                    t = t_ready + paced_offset(k * n_streams + i, n_chunks * n_streams, interval)
                    first_submit = min(first_submit, t)
                    sim.at(t, lambda t, gw=gw, c=contract, h=header, ch=chunk: submit_raw(gw, c, h, ch, t))

    load_end = cfg.epochs * interval
    if cfg.duration_ms is not None:
        sim.run_until(cfg.duration_ms)
    else:
        sim.run_until(load_end)
        sim.run_until_final(load_end + cfg.drain_limit_ms)

    blocks = chain.head_height
    duration = chain.head.timestamp
    lib = chain.lib_height
    latencies, inclusion = [], []
    values = nbytes = confirmed = 0
    for tx_id, w in workload.items():
        h = chain.transaction_height(tx_id)
        if h is None:
            continue
        inclusion.append(chain.blocks[h].timestamp - w.submitted_at)
        if h <= lib:
            confirmed += 1
            values += w.values
            nbytes += w.payload_bytes
            latencies.append(sim.final_at[h] - w.submitted_at + ni_ms)

    window_end = min(load_end, duration) if cfg.duration_ms is None else duration
    cpu = [100.0 * b.cpu_used_us / CPU_BUDGET_US for b in chain.blocks[1:]
           if first_submit <= b.timestamp <= window_end]

    return MetricsReport(
        config=cfg,
        blocks=blocks,
        duration_ms=duration,
        blocks_per_sec=blocks / (duration / 1000.0) if duration else 0.0,
        lib_blocks_per_sec=lib / (duration / 1000.0) if duration else 0.0,
        tx_submitted_total=len(workload),
        tx_confirmed_total=confirmed,
        avg_latency_ms=statistics.fmean(latencies) if latencies else 0.0,
        avg_inclusion_latency_ms=statistics.fmean(inclusion) if inclusion else 0.0,
        cpu_usage_pct_series=cpu,
        ledger_value_count=values,
        ledger_bytes=nbytes,
        ni_cost_ms=ni_ms,
        unhealthy_events=len(runtime.events),
        lib_height=lib,
    )


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------

@dataclass
class SweepResult:
    axis: str
    reports: list[MetricsReport]
    latency_increasing: bool
    confirmed_nondecreasing: bool

    def table(self) -> list[dict]:
        return [r.csv_row() for r in self.reports]

    def to_csv(self) -> str:
        return reports_to_csv(self.reports)


def varying_fields(cfgs: Sequence[ScenarioConfig]) -> list[str]:
    names = [f.name for f in dataclasses.fields(ScenarioConfig)]
    return [n for n in names if len({repr(getattr(c, n)) for c in cfgs}) > 1]


def sweep(cfgs: Sequence[ScenarioConfig]) -> SweepResult:
    """Run configs that differ in exactly one field; report monotonicity."""
    cfgs = list(cfgs)
    if len(cfgs) < 2:
        raise Underspecified("a sweep needs at least two configs")
    axes = varying_fields(cfgs)
    if not axes:
        raise Underspecified("configs are identical; nothing is swept")
    if len(axes) > 1:
        raise MixedAxes(f"configs vary in more than one field: {axes}")
    axis = axes[0]
    cfgs.sort(key=lambda c: getattr(c, axis))
    reports = [run_scenario(c) for c in cfgs]
    lat = [r.avg_latency_ms for r in reports]
    conf = [r.tx_confirmed_total for r in reports]
    return SweepResult(
        axis=axis,
        reports=reports,
        latency_increasing=all(a < b for a, b in zip(lat, lat[1:])),
        confirmed_nondecreasing=all(a <= b for a, b in zip(conf, conf[1:])),
    )


# --------------------------------------------------------------------------
# Storage comparison
# --------------------------------------------------------------------------

@dataclass
class StorageComparison:
    with_ni: MetricsReport
    without_ni: MetricsReport
    ratio: Fraction
    expected_ratio: Fraction

    @property
    def law_holds(self) -> bool:
        return self.ratio == self.expected_ratio


def storage_comparison(cfg_with: ScenarioConfig, cfg_without: ScenarioConfig) -> StorageComparison:
    if not cfg_with.with_ni or cfg_without.with_ni:
        raise ConfigMismatch("first config must have with_ni=True, second with_ni=False")
    if dataclasses.replace(cfg_without, with_ni=True) != cfg_with:
        raise ConfigMismatch("configs must be identical apart from with_ni")
    a = run_scenario(cfg_with)
    b = run_scenario(cfg_without)
    if a.ledger_value_count == 0:
        raise ConfigMismatch("with-NI run stored nothing; ratio undefined")
    ratio = Fraction(b.ledger_value_count, a.ledger_value_count)
    expected = Fraction(cfg_with.samples_per_file * cfg_with.files_per_epoch)
    return StorageComparison(a, b, ratio, expected)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def reports_to_csv(reports: Sequence[MetricsReport]) -> str:
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())
    return out.getvalue()


def write_reports(reports: Sequence[MetricsReport], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, r in enumerate(reports):
        p = out_dir / f"scenario_{i:03d}.json"
        p.write_text(json.dumps(r.to_dict(), indent=2, default=_json_default) + "\n")
        written.append(p)
    p = out_dir / "summary.csv"
    p.write_text(reports_to_csv(reports))
    written.append(p)
    return written


def _json_default(o):
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def measure_ni_cost(s: int = 51, n_t: int = 256, sizes: Sequence[int] = (4, 32),
                    repeats: int = 3, seed: int = 0) -> tuple[float, float]:
    """Time the novelty computation on this host; returns (base_us, per_value_us).

    The result depends on the machine, so scenario configs take fixed
    constants and this is only a helper for choosing them.
    """
    healthy = DamageScenario.for_level(DamageLevel.H, s)
    mon = NoveltyMonitor.fit([synthesize_frames(healthy, 4, s, n_t, seed)], group_width=1)
    points = []
    for m in sizes:
        frames = synthesize_frames(healthy, m, s, n_t, seed + 1)
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            mon.raw(frames)
            best = min(best, time.perf_counter() - t0)
        points.append((s * n_t * m, best * 1e6))
    (x0, y0), (x1, y1) = points[0], points[-1]
    slope = (y1 - y0) / (x1 - x0) if x1 != x0 else 0.0
    return max(y0 - slope * x0, 0.0), max(slope, 0.0)


__all__ = [
    "CSV_COLUMNS", "MetricsReport", "ScenarioConfig", "StorageComparison", "SweepResult",
    "coefficient_of_variation", "measure_ni_cost", "projected_events", "reports_to_csv",
    "run_scenario", "storage_comparison", "storage_counts", "sweep", "varying_fields",
    "write_reports",
]
