"""Calibrate-then-monitor run on a single bridge.

The healthy baseline and the calibration constant are built first; the
monitoring loop then turns each epoch of ``m`` buffered files into ``s``
novelty records, pushes them through the contract, and lets the chain
produce and finalize blocks for the epoch interval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .bench import paced_offset, sub_seed
from .chain import BLOCK_INTERVAL_MS, Chain, Simulator, producer_name
from .config import CliConfig
from .contract import ContractRuntime, CostModel
from .ingest import DamageLevel, DamageScenario, FrameBuffer, frames_from_files, split_epochs, synthesize_frames
from .pipeline import NoveltyMonitor
from .shm import Calibration, SensorFrame
from .store import save_run

REPORT_FILE = "report.json"


@dataclass
class RunSummary:
    epochs: int = 0
    records_written: int = 0
    unhealthy_events: int = 0
    head_height: int = 0
    lib_height: int = 0
    n_ref: float = 0.0
    contract: str = ""
    epoch_lines: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "contract": self.contract,
            "epochs": self.epochs,
            "head_height": self.head_height,
            "lib_height": self.lib_height,
            "n_ref": self.n_ref,
            "records_written": self.records_written,
            "unhealthy_events": self.unhealthy_events,
        }


def _csv_paths(directory: str) -> list[Path]:
    return sorted(Path(directory).glob("*.csv"))


def _reference_epochs(cfg: CliConfig, directory: str | None, level: DamageLevel,
                      count: int, stream: int) -> list[list[SensorFrame]]:
    if directory is not None:
        frames = frames_from_files(_csv_paths(directory), cfg.sample_rate_hz, cfg.bridge_id)
        return split_epochs(frames, cfg.files_per_epoch) or [frames]
    scenario = DamageScenario.for_level(level, cfg.sensors)
    return [synthesize_frames(scenario, cfg.files_per_epoch, cfg.sensors, cfg.samples_per_file,
                              sub_seed(cfg.seed, stream, i), cfg.bridge_id, cfg.sample_rate_hz)
            for i in range(count)]


def _monitor_frames(cfg: CliConfig) -> list[SensorFrame]:
    if cfg.monitor_dir is not None:
        return frames_from_files(_csv_paths(cfg.monitor_dir), cfg.sample_rate_hz, cfg.bridge_id)
    frames = []
    for e, level in enumerate(cfg.monitor_levels):
        scenario = DamageScenario.for_level(level, cfg.sensors)
        frames.extend(synthesize_frames(scenario, cfg.files_per_epoch, cfg.sensors, cfg.samples_per_file,
                                        sub_seed(cfg.seed, 3, e), cfg.bridge_id, cfg.sample_rate_hz))
    return frames


def run_pipeline(cfg: CliConfig, emit: Callable[[str], None] = print,
                 out_dir: str | Path | None = None) -> RunSummary:
    out_dir = Path(out_dir or cfg.out_dir)

    healthy = _reference_epochs(cfg, cfg.healthy_dir, DamageLevel.H, cfg.baseline_epochs, 1)
    monitor = NoveltyMonitor.fit(healthy, eps=cfg.eps, group_width=cfg.group_width)
    if cfg.n_ref is not None:
        monitor.calibration = Calibration(cfg.n_ref, len(healthy))
    else:
        worst = _reference_epochs(cfg, cfg.calibration_dir, DamageLevel.D3, 1, 2)
        monitor.fit_calibration(worst, healthy_count=len(healthy))

    chain = Chain([producer_name(i) for i in range(cfg.producers)], cfg.network)
    runtime = ContractRuntime(chain, CostModel())
    sim = Simulator(chain)
    chain.create_account(cfg.account, 0.0)
    contract = cfg.contract_name
    runtime.set_contract(cfg.account, contract, now=0.0)

    buf = FrameBuffer(cfg.buffer_bytes, cfg.files_per_epoch)
    summary = RunSummary(n_ref=monitor.calibration.n_ref, contract=contract)
    frames = _monitor_frames(cfg)
    interval = cfg.epoch_interval_ms
    epoch = 0
    t = 0
    for f in frames:
        buf.push(f)
        if len(buf) < cfg.files_per_epoch:
            continue
        batch = buf.epoch_batch(cfg.files_per_epoch)
        records = monitor.records(batch, bridge_id=cfg.bridge_id, epoch=epoch)
        unhealthy_before = len(runtime.events)
        for k, rec in enumerate(records):
            when = t + paced_offset(k, len(records), interval)
            sim.at(when, lambda when, rec=rec: runtime.push_action_addnovelty(
                cfg.account, contract, rec, now=when))
        t += interval
        sim.run_until(t)
        new_events = len(runtime.events) - unhealthy_before
        summary.records_written += len(records)
        summary.unhealthy_events += new_events
        line = (f"epoch {epoch}: records={len(records)} unhealthy={new_events} "
                f"max_ni={max(r.ni_norm for r in records):.4f} "
                f"head={chain.head_height} lib={chain.lib_height}")
        summary.epoch_lines.append(line)
        emit(line)
        epoch += 1

    sim.run_until_final(t + 60 * BLOCK_INTERVAL_MS * 2)
    summary.epochs = epoch
    summary.head_height = chain.head_height
    summary.lib_height = chain.lib_height
    save_run(out_dir, chain, runtime)
    report = summary.to_dict()
    report["config"] = cfg.to_dict()
    (out_dir / REPORT_FILE).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    emit(json.dumps(summary.to_dict(), sort_keys=True))
    return summary
