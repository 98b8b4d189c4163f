import csv
import dataclasses
import io
import json
from fractions import Fraction

import pytest

from bridgechain.bench import (
    CSV_COLUMNS,
    ScenarioConfig,
    coefficient_of_variation,
    run_scenario,
    storage_comparison,
    storage_counts,
    sweep,
    write_reports,
)
from bridgechain.errors import (
    ConfigMismatch,
    InvalidScenario,
    MixedAxes,
    ScenarioTooLarge,
    Underspecified,
)

SMALL = ScenarioConfig(producers=1, sensors=8, files_per_epoch=2, epochs=1, samples_per_file=64)


def test_ten_seconds_is_twenty_blocks():
    r = run_scenario(dataclasses.replace(SMALL, duration_ms=10_000))
    assert r.blocks == 20
    assert 1.99 <= r.blocks_per_sec <= 2.01


@pytest.mark.parametrize("cfg", [
    ScenarioConfig(producers=3, sensors=8, epochs=2),
    ScenarioConfig(producers=7, sensors=20, epochs=1, with_ni=False, samples_per_file=64),
])
def test_cadence_and_cpu_bounds(cfg):
    r = run_scenario(cfg)
    assert r.duration_ms >= 10_000
    assert 1.99 <= r.blocks_per_sec <= 2.01
    assert all(0.0 <= p <= 100.0 for p in r.cpu_usage_pct_series)


def test_storage_arithmetic():
    assert storage_counts(51, 4396, 500) == (51, 112_098_000)
    assert storage_counts(51, 1, 1) == (51, 51)  # m = n_t = 1: equal counts
    w, wo = storage_counts(8, 64, 10, epochs=3)
    assert (w, wo) == (24, 8 * 64 * 10 * 3)


def test_storage_ratio_640():
    base = ScenarioConfig(producers=1, sensors=8, files_per_epoch=10, epochs=1, samples_per_file=64)
    cmp = storage_comparison(base, dataclasses.replace(base, with_ni=False))
    assert cmp.with_ni.ledger_value_count == 8
    assert cmp.without_ni.ledger_value_count == 8 * 64 * 10
    assert cmp.ratio == Fraction(640) == cmp.expected_ratio
    assert cmp.law_holds


def test_storage_linear_in_sensors():
    def counts(s):
        cfg = ScenarioConfig(producers=1, sensors=s, files_per_epoch=2, epochs=1, samples_per_file=64)
        c = storage_comparison(cfg, dataclasses.replace(cfg, with_ni=False))
        return c.with_ni.ledger_value_count, c.without_ni.ledger_value_count, c.ratio

    w1, wo1, r1 = counts(8)
    w2, wo2, r2 = counts(16)
    assert (w2, wo2) == (2 * w1, 2 * wo1)
    assert r1 == r2


def test_storage_law_over_epochs_and_streams():
    cfg = ScenarioConfig(producers=2, sensors=6, files_per_epoch=2, epochs=2, samples_per_file=64)
    w = run_scenario(cfg)
    wo = run_scenario(dataclasses.replace(cfg, with_ni=False))
    assert (w.ledger_value_count, wo.ledger_value_count) == storage_counts(6, 64, 2, 2, streams=2)


def test_storage_comparison_mismatch():
    with pytest.raises(ConfigMismatch):
        storage_comparison(SMALL, dataclasses.replace(SMALL, with_ni=False, sensors=9))
    with pytest.raises(ConfigMismatch):
        storage_comparison(SMALL, SMALL)


def test_sweep_errors():
    with pytest.raises(Underspecified):
        sweep([SMALL])
    with pytest.raises(Underspecified):
        sweep([SMALL, SMALL])
    with pytest.raises(MixedAxes):
        sweep([SMALL, dataclasses.replace(SMALL, producers=2, sensors=9)])


def test_sweep_orders_by_axis():
    res = sweep([dataclasses.replace(SMALL, sensors=s) for s in (12, 4, 8)])
    assert res.axis == "sensors"
    assert [r.config.sensors for r in res.reports] == [4, 8, 12]


@pytest.mark.parametrize("field,value", [("producers", 0), ("producers", 51), ("sensors", 1),
                                         ("sensors", 52), ("epochs", 0), ("samples_per_file", 63)])
def test_scenario_bounds(field, value):
    with pytest.raises(InvalidScenario):
        dataclasses.replace(SMALL, **{field: value})


def test_scenario_too_large():
    with pytest.raises(ScenarioTooLarge):
        run_scenario(dataclasses.replace(SMALL, max_events=10))


def test_deterministic():
    a = run_scenario(ScenarioConfig(producers=2, sensors=6, epochs=2, seed=3))
    b = run_scenario(ScenarioConfig(producers=2, sensors=6, epochs=2, seed=3))
    assert json.dumps(a.to_dict(), sort_keys=True, default=str) == \
        json.dumps(b.to_dict(), sort_keys=True, default=str)


def test_csv_and_json_output(tmp_path):
    reports = [run_scenario(SMALL)]
    paths = write_reports(reports, tmp_path)
    assert [p.name for p in paths] == ["scenario_000.json", "summary.csv"]
    rows = list(csv.DictReader(io.StringIO((tmp_path / "summary.csv").read_text())))
    assert list(rows[0]) == CSV_COLUMNS == [
        "producers", "sensors", "m", "epochs", "with_ni", "blocks_per_sec", "tx_confirmed",
        "avg_latency_ms", "cpu_mean_pct", "cpu_cv", "ledger_values", "ledger_bytes"]
    doc = json.loads(paths[0].read_text())
    assert doc["config"]["sensors"] == 8


def test_cv():
    assert coefficient_of_variation([2.0, 2.0, 2.0]) == 0.0
    assert coefficient_of_variation([1.0, 3.0]) == pytest.approx(0.5)
