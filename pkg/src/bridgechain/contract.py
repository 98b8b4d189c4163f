"""Native smart-contract runtime hosting the novelty contract.

Contracts are named ``<sensor_or_bridge_id>_<timestamp>`` and own one
multi-index table of novelty rows keyed by ``(epoch << 16) | sensor_group``.
The ``addnovelty`` action authenticates the caller, re-checks the health
threshold, writes the row, and submits a transaction to the chain.
"""

from __future__ import annotations

import bisect
import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterator

from .chain import Chain, Transaction, canonical_json, sha256_hex
from .errors import (
    AuthFailure,
    ContractNotFound,
    DuplicateContract,
    DuplicateKey,
    InvalidRecord,
    MalformedName,
    StaleReference,
    UnknownAccount,
)
from .shm import UNHEALTHY_MESSAGE, HealthState, NoveltyRecord, classify

ADDNOVELTY = "addnovelty"
ADDRAWDATA = "addrawdata"
SETCODE = "setcode"
EPOCH_BITS = 48
GROUP_BITS = 16

_CONTRACT_RE = re.compile(r"^[A-Za-z0-9.\-]+_[0-9]+$")


def pack_key(epoch: int, sensor_group: int) -> int:
    if not 0 <= epoch < 2**EPOCH_BITS:
        raise InvalidRecord(f"epoch {epoch} out of range [0, 2^48)")
    if not 0 <= sensor_group < 2**GROUP_BITS:
        raise InvalidRecord(f"sensor group {sensor_group} out of range [0, 2^16)")
    return (epoch << GROUP_BITS) | sensor_group


def unpack_key(key: int) -> tuple[int, int]:
    return key >> GROUP_BITS, key & (2**GROUP_BITS - 1)


@dataclass(frozen=True)
class CostModel:
    base_us: float = 100.0
    per_byte_us: float = 0.1

    def cost(self, payload_size: int) -> int:
        return int(math.ceil(self.base_us + self.per_byte_us * payload_size))

    def __call__(self, tx: Transaction) -> int:
        return self.cost(len(tx.payload))


def novelty_payload(record: NoveltyRecord) -> bytes:
    """Canonical JSON wire form of an ``addnovelty`` call."""
    body = {
        "bridge_id": record.bridge_id,
        "sensor_group": record.sensor_group,
        "epoch": record.epoch,
        "ni_raw": record.ni_raw,
        "ni_norm": record.ni_norm,
        "state": record.state.value,
        "eps": record.threshold_eps,
    }
    return canonical_json(body).encode("utf-8")


def decode_novelty_payload(payload: bytes) -> NoveltyRecord:
    import json

    d = json.loads(payload.decode("utf-8"))
    return NoveltyRecord(d["bridge_id"], d["epoch"], d["sensor_group"], d["ni_raw"],
                         d["ni_norm"], HealthState(d["state"]), d["eps"])


@dataclass(frozen=True)
class TableRow:
    primary_key: int
    bridge_id: str
    sensor_group: int
    epoch: int
    ni_raw: float
    ni_norm: float
    state: HealthState
    tx_id: str

    def to_dict(self) -> dict:
        return {
            "primary_key": self.primary_key,
            "bridge_id": self.bridge_id,
            "sensor_group": self.sensor_group,
            "epoch": self.epoch,
            "ni_raw": self.ni_raw,
            "ni_norm": self.ni_norm,
            "state": self.state.value,
            "tx_id": self.tx_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TableRow":
        return cls(d["primary_key"], d["bridge_id"], d["sensor_group"], d["epoch"],
                   d["ni_raw"], d["ni_norm"], HealthState(d["state"]), d["tx_id"])


@dataclass(frozen=True)
class RowRef:
    """Iterator-like handle returned by :meth:`MultiIndexTable.find`."""

    table: "MultiIndexTable"
    primary_key: int
    serial: int

    @property
    def row(self) -> TableRow:
        return self.table._deref(self)


class MultiIndexTable:
    """Rows ordered by primary key, with find-by-key and erase-by-reference."""

    def __init__(self):
        self._rows: dict[int, tuple[int, TableRow]] = {}
        self._keys: list[int] = []
        self._serials = itertools.count(1)

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key: int) -> bool:
        return key in self._rows

    def insert(self, row: TableRow) -> RowRef:
        if row.primary_key in self._rows:
            raise DuplicateKey(f"primary key {row.primary_key} already present")
        serial = next(self._serials)
        self._rows[row.primary_key] = (serial, row)
        bisect.insort(self._keys, row.primary_key)
        return RowRef(self, row.primary_key, serial)

    def find(self, key: int) -> RowRef:
        try:
            serial, _ = self._rows[key]
        except KeyError:
            raise ContractNotFound(f"no row with primary key {key}") from None
        return RowRef(self, key, serial)

    def _deref(self, ref: RowRef) -> TableRow:
        entry = self._rows.get(ref.primary_key)
        if ref.table is not self or entry is None or entry[0] != ref.serial:
            raise StaleReference(f"reference to key {ref.primary_key} is no longer valid")
        return entry[1]

    def erase(self, ref: RowRef) -> TableRow:
        row = self._deref(ref)
        del self._rows[ref.primary_key]
        i = bisect.bisect_left(self._keys, ref.primary_key)
        del self._keys[i]
        return row

    def rows(self, lower: int | None = None, upper: int | None = None) -> Iterator[TableRow]:
        """Rows with ``lower <= key < upper`` in key order."""
        lo = 0 if lower is None else bisect.bisect_left(self._keys, lower)
        hi = len(self._keys) if upper is None else bisect.bisect_left(self._keys, upper)
        for k in self._keys[lo:hi]:
            yield self._rows[k][1]

    def epoch_rows(self, epoch: int) -> list[TableRow]:
        return list(self.rows(epoch << GROUP_BITS, (epoch + 1) << GROUP_BITS))


@dataclass
class Contract:
    name: str
    owner: str
    deployed_at: float
    actions: frozenset[str] = frozenset({ADDNOVELTY})
    permitted: set[str] = field(default_factory=set)
    table: MultiIndexTable = field(default_factory=MultiIndexTable, repr=False)


@dataclass(frozen=True)
class ActionReceipt:
    tx_id: str
    cpu_cost_us: int
    events: tuple[str, ...]
    rows_written: int
    primary_key: int | None = None
    state: HealthState | None = None
    payload_bytes: int = 0


@dataclass(frozen=True)
class RemovalReceipt:
    contract: str
    primary_key: int
    tx_id: str
    erased_at: float


class ContractRuntime:
    """Contracts deployed on one :class:`Chain`."""

    def __init__(self, chain: Chain, cost_model: CostModel | None = None):
        self.chain = chain
        self.cost_model = cost_model or CostModel()
        chain.cost_model = self.cost_model
        self.contracts: dict[str, Contract] = {}
        self.events: list[tuple[str, str]] = []
        self.unhealthy_inserted = 0

    def _now(self, now: float | None) -> float:
        return self.chain.clock if now is None else now

    def contract(self, name: str) -> Contract:
        try:
            return self.contracts[name]
        except KeyError:
            raise ContractNotFound(f"contract {name!r} not deployed") from None

    def set_contract(self, owner: str, name: str, now: float | None = None,
                     actions: frozenset[str] = frozenset({ADDNOVELTY})) -> Contract:
        if owner not in self.chain.accounts:
            raise UnknownAccount(f"owner {owner!r} not registered")
        if not isinstance(name, str) or not _CONTRACT_RE.match(name):
            raise MalformedName(f"contract name {name!r} must look like <id>_<timestamp>")
        if name in self.contracts:
            raise DuplicateContract(f"contract {name!r} already deployed")
        actions = frozenset(actions) | {ADDNOVELTY}
        now = self._now(now)
        payload = canonical_json({"name": name, "owner": owner, "actions": sorted(actions)})
        tx = Transaction(owner, "eosio", SETCODE, payload.encode("utf-8"), now)
        receipt = self.chain.submit_transaction(tx)
        if not receipt.accepted:
            raise DuplicateContract(f"deployment of {name!r} rejected: {receipt.reason}")
        c = Contract(name, owner, now, actions)
        self.contracts[name] = c
        return c

    def permit(self, contract: str, account: str) -> None:
        c = self.contract(contract)
        if account not in self.chain.accounts:
            raise UnknownAccount(f"account {account!r} not registered")
        c.permitted.add(account)

    def push_action_addnovelty(self, actor: str, contract: str, record: NoveltyRecord,
                               now: float | None = None) -> ActionReceipt:
        if actor not in self.chain.accounts:
            raise UnknownAccount(f"actor {actor!r} not registered")
        c = self.contract(contract)
        if actor != c.owner and actor not in c.permitted:
            raise AuthFailure(f"{actor!r} may not write to {contract!r}")
        if not _loosely_valid(record):
            raise InvalidRecord(f"record violates novelty invariants: {record!r}")
        key = pack_key(record.epoch, record.sensor_group)
        if key in c.table:
            raise DuplicateKey(f"{contract}: epoch {record.epoch} group {record.sensor_group} already stored")
        # the contract's own threshold check decides the stored state
        state = classify(record.ni_norm, record.threshold_eps)
        if state is not record.state:
            record = NoveltyRecord(record.bridge_id, record.epoch, record.sensor_group,
                                   record.ni_raw, record.ni_norm, state, record.threshold_eps)
        payload = novelty_payload(record)
        tx = Transaction(actor, contract, ADDNOVELTY, payload, self._now(now))
        receipt = self.chain.submit_transaction(tx)
        if not receipt.accepted:
            raise InvalidRecord(f"transaction rejected: {receipt.reason}")
        c.table.insert(TableRow(key, record.bridge_id, record.sensor_group, record.epoch,
                                record.ni_raw, record.ni_norm, state, tx.id))
        events = ()
        if state is HealthState.UNHEALTHY:
            events = (UNHEALTHY_MESSAGE,)
            self.events.append((tx.id, UNHEALTHY_MESSAGE))
            self.unhealthy_inserted += 1
        return ActionReceipt(tx.id, self.cost_model.cost(len(payload)), events, 1, key, state,
                             len(payload))

    def push_raw_data(self, actor: str, contract: str, header: dict, values: bytes,
                      now: float | None = None) -> Transaction:
        """Store raw samples on-chain unchanged; used for the without-NI comparison."""
        c = self.contract(contract)
        if actor != c.owner and actor not in c.permitted:
            raise AuthFailure(f"{actor!r} may not write to {contract!r}")
        payload = canonical_json(header).encode("utf-8") + b"\n" + values
        tx = Transaction(actor, contract, ADDRAWDATA, payload, self._now(now))
        receipt = self.chain.submit_transaction(tx)
        if not receipt.accepted:
            raise InvalidRecord(f"transaction rejected: {receipt.reason}")
        return tx

    def table_find(self, contract: str, primary_key: int) -> RowRef:
        return self.contract(contract).table.find(primary_key)

    def table_erase(self, contract: str, ref: RowRef, now: float | None = None) -> RemovalReceipt:
        c = self.contract(contract)
        if ref.table is not c.table:
            raise StaleReference("reference belongs to a different table")
        row = c.table.erase(ref)
        return RemovalReceipt(contract, row.primary_key, row.tx_id, self._now(now))

    def state_hash(self) -> str:
        """Digest of all table contents."""
        dump = {
            name: [r.to_dict() for r in c.table.rows()]
            for name, c in sorted(self.contracts.items())
        }
        return sha256_hex(canonical_json(dump))


def _loosely_valid(record: NoveltyRecord) -> bool:
    # A stale edge-side verdict is tolerated (the contract re-classifies);
    # anything else wrong with the record is not.
    return (
        isinstance(record.epoch, int) and record.epoch >= 0
        and isinstance(record.sensor_group, int) and record.sensor_group >= 0
        and math.isfinite(record.ni_raw) and record.ni_raw >= 0
        and 0.0 <= record.ni_norm <= 1.0
        and 0.0 < record.threshold_eps < 1.0
    )


# functional aliases mirroring the cleos verbs
def set_contract(rt: ContractRuntime, owner: str, name: str, now: float | None = None) -> Contract:
    return rt.set_contract(owner, name, now)


def push_action_addnovelty(rt: ContractRuntime, actor: str, contract: str,
                           record: NoveltyRecord, now: float | None = None) -> ActionReceipt:
    return rt.push_action_addnovelty(actor, contract, record, now)


def table_find(rt: ContractRuntime, contract: str, primary_key: int) -> RowRef:
    return rt.table_find(contract, primary_key)


def table_erase(rt: ContractRuntime, contract: str, ref: RowRef) -> RemovalReceipt:
    return rt.table_erase(contract, ref)
