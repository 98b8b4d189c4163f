"""Run configuration loaded from a JSON document.

Defaults describe the reference deployment: 51 gauges, at most 50
producer nodes with 50 contracts each, a 150 MiB buffer, 256 Hz sampling
and 100 Mbps links with 5 ms propagation delay.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .chain import NetworkModel, valid_account_name
from .errors import ConfigError
from .ingest import DEFAULT_BUFFER_BYTES, DamageLevel


@dataclass(frozen=True)
class CliConfig:
    sensors: int = 51
    max_nodes: int = 50
    producers: int = 5
    max_contracts_per_node: int = 50
    buffer_bytes: int = DEFAULT_BUFFER_BYTES
    sample_rate_hz: int = 256
    bandwidth_bps: float = 100e6
    propagation_delay_ms: float = 5.0
    eps: float = 0.15
    n_ref: float | None = None
    seed: int = 0
    files_per_epoch: int = 8
    samples_per_file: int = 256
    group_width: int = 1
    baseline_epochs: int = 3
    epoch_interval_ms: int = 10_000
    bridge_id: str = "b01"
    account: str = "bridgeacct1"
    contract: str | None = None
    monitor_levels: tuple[str, ...] = ("H", "H", "D3")
    healthy_dir: str | None = None
    monitor_dir: str | None = None
    calibration_dir: str | None = None
    out_dir: str = "run_out"

    def __post_init__(self):
        object.__setattr__(self, "monitor_levels", tuple(self.monitor_levels))
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, msg: str):
            if not cond:
                raise ConfigError(msg)

        need(2 <= self.sensors <= 51, f"sensors must be in [2, 51], got {self.sensors}")
        need(1 <= self.max_nodes <= 50, f"max_nodes must be in [1, 50], got {self.max_nodes}")
        need(1 <= self.producers <= self.max_nodes,
             f"producers must be in [1, max_nodes={self.max_nodes}], got {self.producers}")
        need(1 <= self.max_contracts_per_node <= 50, "max_contracts_per_node must be in [1, 50]")
        need(self.buffer_bytes > 0, "buffer_bytes must be positive")
        need(self.sample_rate_hz > 0, "sample_rate_hz must be positive")
        need(self.bandwidth_bps > 0, "bandwidth_bps must be positive")
        need(self.propagation_delay_ms >= 0, "propagation_delay_ms must be non-negative")
        need(0 < self.eps < 1, f"eps must lie in (0, 1), got {self.eps}")
        need(self.n_ref is None or self.n_ref > 0, "n_ref must be positive when given")
        need(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned value")
        need(self.files_per_epoch >= 1, "files_per_epoch must be >= 1")
        need(self.samples_per_file >= 64, "samples_per_file must be >= 64")
        need(1 <= self.group_width <= self.sensors, "group_width must be in [1, sensors]")
        need(self.baseline_epochs >= 1, "baseline_epochs must be >= 1")
        need(self.epoch_interval_ms >= 500 and self.epoch_interval_ms % 500 == 0,
             "epoch_interval_ms must be a positive multiple of 500")
        need(valid_account_name(self.account), f"invalid account name {self.account!r}")
        need(bool(self.bridge_id) and "_" not in self.bridge_id, "bridge_id must be non-empty without '_'")
        for lvl in self.monitor_levels:
            need(lvl in DamageLevel.__members__, f"unknown damage level {lvl!r}")
        need(bool(self.monitor_levels) or self.monitor_dir is not None,
             "need monitor_levels or monitor_dir")

    @property
    def network(self) -> NetworkModel:
        return NetworkModel(self.propagation_delay_ms, self.bandwidth_bps)

    @property
    def contract_name(self) -> str:
        return self.contract or f"{self.bridge_id}_0"

    @classmethod
    def from_dict(cls, d: dict) -> "CliConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "CliConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"config file {str(path)!r} not found") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["monitor_levels"] = list(self.monitor_levels)
        return d
