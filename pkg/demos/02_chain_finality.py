# %% [markdown]
# # Block production and two-stage finality
#
# Five producers take 500 ms slots in turn. Every block collects a
# supermajority of stage-1 confirmations, then stage-2 confirmations; only
# then does the last irreversible block (LIB) move past it.

# %%
from bridgechain.chain import Chain, Simulator, Transaction, producer_name, supermajority

chain = Chain([producer_name(i) for i in range(5)])
chain.create_account("bridgeacct1", 0.0)
sim = Simulator(chain)
print("supermajority of 5:", supermajority(5))

# %%
for i in range(12):
    sim.at(40.0 * i, lambda t, i=i: chain.submit_transaction(
        Transaction("bridgeacct1", "b01_0", "note", f"reading {i}".encode(), t)))

for stop in (500, 1_000, 2_000, 3_000):
    sim.run_until(stop)
    print(f"t={stop:>5} ms  head={chain.head_height}  lib={chain.lib_height}  pending={chain.pending_count}")

# %% [markdown]
# Lag between production and irreversibility, per block:

# %%
sim.run_until_final(20_000)
for b in chain.blocks[1:7]:
    print(f"block {b.height}: produced {b.timestamp} ms by {b.producer}, final at "
          f"{sim.final_at[b.height]:.2f} ms, {len(b.transactions)} tx")

# %%
print(chain.chain_log().splitlines()[1])
