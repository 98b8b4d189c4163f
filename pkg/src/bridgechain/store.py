"""Persisting a run: chain log, transactions, and a table snapshot.

Files written into the run directory:

``chain.ndjson``
    one block per line in canonical field order.
``transactions.ndjson``
    every included transaction, in block order.
``state.json``
    accounts, producer schedules, confirmation sets, LIB and contract tables.
"""

from __future__ import annotations

import json
from pathlib import Path

from .chain import Account, Block, Chain, NetworkModel, ProducerSchedule, Transaction
from .contract import Contract, ContractRuntime, CostModel, TableRow
from .errors import NotFound

CHAIN_LOG = "chain.ndjson"
TX_LOG = "transactions.ndjson"
STATE_FILE = "state.json"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def save_run(out_dir: str | Path, chain: Chain, runtime: ContractRuntime) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CHAIN_LOG).write_text(chain.chain_log(), encoding="utf-8")
    (out / TX_LOG).write_text(
        "".join(_dumps(tx.to_dict()) + "\n" for tx, _ in chain.included_transactions()),
        encoding="utf-8",
    )
    state = {
        "network": {"propagation_delay_ms": chain.network.propagation_delay_ms,
                    "bandwidth_bps": chain.network.bandwidth_bps},
        "cpu_budget_us": chain.cpu_budget_us,
        "cost_model": {"base_us": runtime.cost_model.base_us,
                       "per_byte_us": runtime.cost_model.per_byte_us},
        "lib_height": chain.lib_height,
        "accounts": [{"name": a.name, "created_at": a.created_at} for a in chain.accounts.values()],
        "schedules": [{"round_index": s.round_index, "producers": list(s.producers),
                       "slots_per_producer": s.slots_per_producer, "start_slot": s.start_slot}
                      for s in chain.schedules],
        "confirmations": [[sorted(b.confirmations), sorted(b.second_confirmations)]
                          for b in chain.blocks],
        "contracts": [
            {"name": c.name, "owner": c.owner, "deployed_at": c.deployed_at,
             "actions": sorted(c.actions), "permitted": sorted(c.permitted),
             "rows": [r.to_dict() for r in c.table.rows()]}
            for c in runtime.contracts.values()
        ],
    }
    (out / STATE_FILE).write_text(json.dumps(state, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return [out / CHAIN_LOG, out / TX_LOG, out / STATE_FILE]


def load_run(run_dir: str | Path) -> tuple[Chain, ContractRuntime]:
    """Rebuild a read-only view of a persisted run."""
    d = Path(run_dir)
    try:
        state = json.loads((d / STATE_FILE).read_text(encoding="utf-8"))
        log_lines = (d / CHAIN_LOG).read_text(encoding="utf-8").splitlines()
        tx_lines = (d / TX_LOG).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise NotFound(f"no persisted chain in {str(d)!r}: {exc.filename}") from None

    schedules = [ProducerSchedule(**s) for s in state["schedules"]]
    chain = Chain(schedules[0].producers, NetworkModel(**state["network"]),
                  slots_per_producer=schedules[0].slots_per_producer,
                  cpu_budget_us=state["cpu_budget_us"])
    chain.schedules = schedules
    for a in state["accounts"]:
        if a["name"] not in chain.accounts:
            chain.accounts[a["name"]] = Account(a["name"], a["created_at"])
    txs = {}
    for line in tx_lines:
        tx = Transaction.from_dict(json.loads(line))
        txs[tx.id] = tx
    confirmations = state["confirmations"]
    for line in log_lines[1:]:
        rec = json.loads(line)
        first, second = confirmations[rec["height"]]
        block = Block(rec["height"], rec["parent_id"], rec["producer"], rec["timestamp"],
                      tuple(txs[i] for i in rec["tx_ids"]), rec["cpu_used_us"],
                      schedule_round=_round_for(schedules, rec["timestamp"]),
                      confirmations=set(first), second_confirmations=set(second))
        if block.id != rec["id"]:
            raise ValueError(f"block {rec['height']}: id mismatch in chain log")
        chain.restore_block(block)
    chain.lib_height = state["lib_height"]

    runtime = ContractRuntime(chain, CostModel(**state["cost_model"]))
    for c in state["contracts"]:
        contract = Contract(c["name"], c["owner"], c["deployed_at"], frozenset(c["actions"]),
                            set(c["permitted"]))
        for r in c["rows"]:
            contract.table.insert(TableRow.from_dict(r))
        runtime.contracts[c["name"]] = contract
    return chain, runtime


def _round_for(schedules: list[ProducerSchedule], timestamp: int) -> int:
    slot = timestamp // 500
    for s in reversed(schedules):
        if slot >= s.start_slot:
            return s.round_index
    return 0
