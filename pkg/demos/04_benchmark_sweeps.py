# %% [markdown]
# # Desk-scale benchmark sweeps
#
# Each producer node runs a submission gateway that posts one epoch of
# novelty rows every 10 s. We sweep producers and sensors and look at
# shapes: cadence, confirmed throughput, latency to irreversibility and
# per-block CPU use.

# %%
import dataclasses

from bridgechain.bench import ScenarioConfig, run_scenario, storage_comparison, sweep

base = ScenarioConfig()

# %%
nodes = sweep([dataclasses.replace(base, producers=n) for n in (5, 10, 20)])
print(nodes.to_csv())
print("latency increasing:", nodes.latency_increasing,
      " confirmed non-decreasing:", nodes.confirmed_nondecreasing)

# %%
sensors = sweep([dataclasses.replace(base, sensors=s) for s in (15, 25, 35, 51)])
print(sensors.to_csv())

# %% [markdown]
# Storage: one value per sensor group with novelty indices, against every
# raw sample without them.

# %%
cfg = ScenarioConfig(producers=1, sensors=8, files_per_epoch=10, samples_per_file=64, epochs=1)
cmp = storage_comparison(cfg, dataclasses.replace(cfg, with_ni=False))
print(f"with NI: {cmp.with_ni.ledger_value_count} values, {cmp.with_ni.ledger_bytes} B")
print(f"without: {cmp.without_ni.ledger_value_count} values, {cmp.without_ni.ledger_bytes} B")
print(f"ratio {cmp.ratio} (expected m*n_t = {cmp.expected_ratio})")

# %%
r = run_scenario(dataclasses.replace(base, epochs=6))
print(f"cpu mean {r.cpu_mean_pct:.1f}% of 5000 us, cv {r.cpu_cv:.3f}, {r.blocks_per_sec:.2f} blocks/s")
