# %% [markdown]
# # The novelty contract
#
# One contract per bridge keeps a table of novelty rows keyed by
# `(epoch << 16) | sensor_group`. Writes are authenticated, the threshold
# check runs again inside the action, and unhealthy rows raise an event.

# %%
from bridgechain.chain import Chain, Simulator, producer_name
from bridgechain.contract import ContractRuntime, pack_key, unpack_key
from bridgechain.errors import AuthFailure, StaleReference
from bridgechain.shm import HealthState, NoveltyRecord, classify

chain = Chain([producer_name(i) for i in range(5)])
for name in ("bridgeacct1", "someoneelse"):
    chain.create_account(name, 0.0)
rt = ContractRuntime(chain)
rt.set_contract("bridgeacct1", "b01_1700000000")
sim = Simulator(chain)

# %%
for g, ni in enumerate([0.05, 0.12, 0.97, 0.40]):
    rec = NoveltyRecord("b01", 4, g, ni * 0.1, ni, classify(ni))
    receipt = rt.push_action_addnovelty("bridgeacct1", "b01_1700000000", rec)
    print(f"group {g}: key={receipt.primary_key} cost={receipt.cpu_cost_us} us events={receipt.events}")

# %%
try:
    rt.push_action_addnovelty("someoneelse", "b01_1700000000",
                              NoveltyRecord("b01", 4, 9, 0.0, 0.0, HealthState.HEALTHY))
except AuthFailure as exc:
    print("rejected:", exc)

# %%
ref = rt.table_find("b01_1700000000", pack_key(4, 2))
print("found", ref.row.state.value, "at", unpack_key(ref.primary_key))
rt.table_erase("b01_1700000000", ref)
try:
    rt.table_erase("b01_1700000000", ref)
except StaleReference as exc:
    print("second erase:", exc)

# %% [markdown]
# Erasing only touches the table. The insert transaction stays in its block.

# %%
sim.run_until_final(10_000)
_, block, final = chain.get_transaction(receipt.tx_id)
print(f"last insert lives in block {block.height}, irreversible={final}")
print("rows left:", [r.sensor_group for r in rt.contract("b01_1700000000").table.rows()])
