"""Deterministic simulation of a DPoS chain with two-stage finality.

Blocks are produced every 500 ms of simulated time by the producer whose
slot it is. Each block is confirmed in two stages; once both stages hold a
two-thirds supermajority of the scheduled producers (and every ancestor is
already final) the block becomes the last irreversible block.

:class:`Chain` is the state machine. :class:`Simulator` drives it with an
event queue: timed external callbacks, slot production, and the honest
producers' confirmation messages.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import (
    ChainNotFound,
    DuplicateName,
    InvalidName,
    MissedSlot,
    NotSlotBoundary,
    OversizedTransaction,
    PrematureStage2,
    SlotOccupied,
    UnknownAccount,
    UnknownProducer,
    WrongProducer,
)

BLOCK_INTERVAL_MS = 500
CPU_BUDGET_US = 5000
TX_HEADER_BYTES = 64
BLOCK_HEADER_BYTES = 200
CONFIRMATION_BYTES = 96
MAX_PAYLOAD_BYTES = 8192
MAX_TX_PER_BLOCK = 1000
SYSTEM_ACCOUNT = "eosio"
GENESIS_PARENT = "0" * 64

_NAME_RE = re.compile(r"^[a-z1-5.]{1,12}$")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def supermajority(n: int) -> int:
    """Confirmations needed out of ``n`` producers: floor(2n/3) + 1."""
    return 2 * n // 3 + 1


def valid_account_name(name: str) -> bool:
    return bool(_NAME_RE.match(name)) and not name.startswith(".") and not name.endswith(".")


def producer_name(i: int) -> str:
    """Account name of the i-th generated producer: bpaa, bpab, ..."""
    a, b = divmod(i, 26)
    if a >= 26:
        raise ValueError("at most 676 generated producer names")
    return "bp" + chr(ord("a") + a) + chr(ord("a") + b)


@dataclass(frozen=True)
class NetworkModel:
    propagation_delay_ms: float = 5.0
    bandwidth_bps: float = 100e6

    def __post_init__(self):
        if self.propagation_delay_ms < 0:
            raise ValueError("propagation_delay_ms must be non-negative")
        if not self.bandwidth_bps > 0:
            raise ValueError("bandwidth_bps must be positive")

    def transmission_ms(self, nbytes: int) -> float:
        return nbytes * 8 / self.bandwidth_bps * 1000.0

    def delivery_ms(self, nbytes: int) -> float:
        t = self.propagation_delay_ms + self.transmission_ms(nbytes)
        if not t > 0:
            raise ValueError("delivery time must be strictly positive")
        return t


@dataclass(frozen=True)
class Account:
    name: str
    created_at: float


@dataclass(frozen=True)
class Transaction:
    actor: str
    contract: str
    action: str
    payload: bytes
    submitted_at: float
    id: str = field(init=False)
    size_bytes: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "payload", bytes(self.payload))
        object.__setattr__(self, "size_bytes", len(self.payload) + TX_HEADER_BYTES)
        object.__setattr__(self, "id", sha256_hex(canonical_json(self._hashed_fields())))

    def _hashed_fields(self) -> dict:
        return {
            "actor": self.actor,
            "contract": self.contract,
            "action": self.action,
            "payload": self.payload.hex(),
            "size_bytes": self.size_bytes,
            "submitted_at": self.submitted_at,
        }

    def to_dict(self) -> dict:
        d = {"id": self.id}
        d.update(self._hashed_fields())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Transaction":
        tx = cls(d["actor"], d["contract"], d["action"], bytes.fromhex(d["payload"]), d["submitted_at"])
        if tx.id != d["id"]:
            raise ValueError(f"transaction hash mismatch for {d['id']}")
        return tx


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    accepted: bool
    arrival_ms: float | None = None
    reason: str = ""


@dataclass(frozen=True)
class ProducerSchedule:
    round_index: int
    producers: tuple[str, ...]
    slots_per_producer: int = 1
    # first slot (timestamp / 500) at which this schedule is active
    start_slot: int = 0

    def __post_init__(self):
        object.__setattr__(self, "producers", tuple(self.producers))
        if not self.producers:
            raise ValueError("producer schedule is empty")
        if len(set(self.producers)) != len(self.producers):
            raise ValueError("producer schedule has duplicates")
        if self.slots_per_producer < 1:
            raise ValueError("slots_per_producer must be >= 1")

    @property
    def size(self) -> int:
        return len(self.producers)

    @property
    def round_slots(self) -> int:
        return self.size * self.slots_per_producer

    def producer_at(self, slot: int) -> str:
        # slot numbering is absolute so that a single schedule started at
        # genesis gives schedule[(t / 500) mod N]
        return self.producers[(slot // self.slots_per_producer) % self.size]


@dataclass
class Block:
    height: int
    parent_id: str
    producer: str
    timestamp: int
    transactions: tuple[Transaction, ...] = ()
    cpu_used_us: int = 0
    schedule_round: int = 0
    confirmations: set[str] = field(default_factory=set)
    second_confirmations: set[str] = field(default_factory=set)

    def __post_init__(self):
        self.transactions = tuple(self.transactions)
        self.id = sha256_hex(canonical_json(self._header()))

    def _header(self) -> dict:
        return {
            "height": self.height,
            "parent_id": self.parent_id,
            "producer": self.producer,
            "timestamp": self.timestamp,
            "tx_ids": [tx.id for tx in self.transactions],
            "cpu_used_us": self.cpu_used_us,
        }

    @property
    def size_bytes(self) -> int:
        return BLOCK_HEADER_BYTES + sum(tx.size_bytes for tx in self.transactions)

    def log_line(self) -> str:
        """One line of the chain log; the hashed header plus confirmation counts."""
        # insertion order is the canonical field order of the log
        line = {
            "height": self.height,
            "parent_id": self.parent_id,
            "producer": self.producer,
            "timestamp": self.timestamp,
            "tx_ids": [tx.id for tx in self.transactions],
            "confirmations": len(self.confirmations),
            "second_confirmations": len(self.second_confirmations),
            "cpu_used_us": self.cpu_used_us,
            "id": self.id,
        }
        return json.dumps(line, separators=(",", ":"), ensure_ascii=False)


def linear_cost(base_us: float = 100.0, per_byte_us: float = 0.1) -> Callable[[Transaction], int]:
    import math

    def cost(tx: Transaction) -> int:
        return int(math.ceil(base_us + per_byte_us * len(tx.payload)))
    return cost


@dataclass
class _PendingSchedule:
    producers: tuple[str, ...]
    proposed_at_height: int


class Chain:
    """Single-owner chain state.

    All mutation goes through the methods here; queries never mutate.
    """

    def __init__(
        self,
        producers: Iterable[str],
        network: NetworkModel | None = None,
        slots_per_producer: int = 1,
        cpu_budget_us: int = CPU_BUDGET_US,
        max_tx_per_block: int = MAX_TX_PER_BLOCK,
        max_payload_bytes: int = MAX_PAYLOAD_BYTES,
        cost_model: Callable[[Transaction], int] | None = None,
    ):
        self.network = network or NetworkModel()
        self.cpu_budget_us = cpu_budget_us
        self.max_tx_per_block = max_tx_per_block
        self.max_payload_bytes = max_payload_bytes
        self.cost_model = cost_model or linear_cost()
        self.accounts: dict[str, Account] = {}
        self.events: list[tuple[float, str, str]] = []
        self.clock: float = 0.0
        self._pending: list[tuple[float, str, Transaction]] = []
        self._tx_height: dict[str, int] = {}
        self._tx_pending: dict[str, Transaction] = {}
        self.lib_height = 0
        self.create_account(SYSTEM_ACCOUNT, 0.0)
        producers = tuple(producers)
        for p in producers:
            if p not in self.accounts:
                self.create_account(p, 0.0)
        self.schedules: list[ProducerSchedule] = [
            ProducerSchedule(0, producers, slots_per_producer, start_slot=0)
        ]
        self._proposed: _PendingSchedule | None = None
        self.blocks: list[Block] = [Block(0, GENESIS_PARENT, SYSTEM_ACCOUNT, 0)]
        self._by_id = {self.blocks[0].id: 0}

    # -- accounts -----------------------------------------------------------

    def create_account(self, name: str, now: float | None = None) -> Account:
        if not isinstance(name, str) or not valid_account_name(name):
            raise InvalidName(f"invalid account name {name!r}")
        if name in self.accounts:
            raise DuplicateName(f"account {name!r} already exists")
        now = self.clock if now is None else now
        acct = Account(name, now)
        self.accounts[name] = acct
        self.events.append((now, "create_account", name))
        return acct

    def get_account(self, name: str) -> Account:
        try:
            return self.accounts[name]
        except KeyError:
            raise ChainNotFound(f"account {name!r} not found") from None

    # -- schedule -----------------------------------------------------------

    @property
    def schedule(self) -> ProducerSchedule:
        return self.schedules[-1]

    def schedule_for_round(self, round_index: int) -> ProducerSchedule:
        return self.schedules[round_index]

    def scheduled_producer(self, timestamp: int) -> str:
        return self._schedule_at_slot(timestamp // BLOCK_INTERVAL_MS).producer_at(timestamp // BLOCK_INTERVAL_MS)

    def _schedule_at_slot(self, slot: int) -> ProducerSchedule:
        for sched in reversed(self.schedules):
            if slot >= sched.start_slot:
                return sched
        return self.schedules[0]

    def propose_schedule(self, producers: Iterable[str]) -> None:
        """Queue a new producer set.

        It activates at the first round boundary after the head block at
        proposal time has become irreversible.
        """
        producers = tuple(producers)
        ProducerSchedule(0, producers)  # validates
        for p in producers:
            if p not in self.accounts:
                raise UnknownAccount(f"producer {p!r} has no account")
        self._proposed = _PendingSchedule(producers, self.head_height)

    def _maybe_activate_schedule(self, slot: int) -> None:
        prop = self._proposed
        if prop is None or self.lib_height < prop.proposed_at_height:
            return
        cur = self.schedule
        if (slot - cur.start_slot) % cur.round_slots != 0:
            return
        self.schedules.append(ProducerSchedule(cur.round_index + 1, prop.producers,
                                               cur.slots_per_producer, start_slot=slot))
        self._proposed = None

    # -- transactions -------------------------------------------------------

    def submit_transaction(self, tx: Transaction) -> Receipt:
        if tx.actor not in self.accounts:
            raise UnknownAccount(f"actor {tx.actor!r} not registered")
        if len(tx.payload) > self.max_payload_bytes:
            raise OversizedTransaction(f"payload {len(tx.payload)} B > {self.max_payload_bytes} B")
        if not tx.payload:
            return Receipt(tx.id, False, reason="empty payload")
        if tx.id in self._tx_pending or tx.id in self._tx_height:
            return Receipt(tx.id, False, reason="duplicate transaction")
        if self.cost_model(tx) > self.cpu_budget_us:
            raise OversizedTransaction(f"transaction cost exceeds the {self.cpu_budget_us} us block budget")
        arrival = tx.submitted_at + self.network.delivery_ms(tx.size_bytes)
        heapq.heappush(self._pending, (arrival, tx.id, tx))
        self._tx_pending[tx.id] = tx
        return Receipt(tx.id, True, arrival_ms=arrival)

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def pending(self) -> list[Transaction]:
        return [tx for _, _, tx in sorted(self._pending)]

    # -- blocks -------------------------------------------------------------

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def head_height(self) -> int:
        return self.head.height

    def produce_block(self, now: int, producer: str | None = None) -> Block:
        if now % BLOCK_INTERVAL_MS != 0:
            raise NotSlotBoundary(f"t={now} ms is not a {BLOCK_INTERVAL_MS} ms slot boundary")
        expected = self.head.timestamp + BLOCK_INTERVAL_MS
        if now < expected:
            raise SlotOccupied(f"slot t={now} ms is already filled (head at {self.head.timestamp})")
        if now > expected:
            raise MissedSlot(f"next slot is t={expected} ms, got t={now}")
        slot = now // BLOCK_INTERVAL_MS
        self._maybe_activate_schedule(slot)
        sched = self._schedule_at_slot(slot)
        scheduled = sched.producer_at(slot)
        if producer is not None and producer != scheduled:
            raise WrongProducer(f"slot t={now} belongs to {scheduled!r}, not {producer!r}")

        included = []
        cpu = 0
        while self._pending and len(included) < self.max_tx_per_block:
            arrival, _, tx = self._pending[0]
            if arrival > now:
                break
            cost = self.cost_model(tx)
            if cpu + cost > self.cpu_budget_us:
                break
            heapq.heappop(self._pending)
            included.append(tx)
            cpu += cost

        block = Block(self.head_height + 1, self.head.id, scheduled, now, tuple(included), cpu,
                      schedule_round=sched.round_index)
        self.blocks.append(block)
        self._by_id[block.id] = block.height
        for tx in included:
            del self._tx_pending[tx.id]
            self._tx_height[tx.id] = block.height
        self.clock = max(self.clock, now)
        return block

    def producers_for(self, block: Block) -> ProducerSchedule:
        return self.schedules[block.schedule_round]

    def confirm_block(self, height: int, producer: str, stage: int) -> Block:
        block = self.get_block(height)
        if height == 0:
            return block
        sched = self.producers_for(block)
        if producer not in sched.producers:
            raise UnknownProducer(f"{producer!r} is not in the schedule of block {height}")
        if stage == 1:
            block.confirmations.add(producer)
        elif stage == 2:
            if len(block.confirmations) < supermajority(sched.size):
                raise PrematureStage2(
                    f"block {height}: stage 1 has {len(block.confirmations)}/{sched.size}, "
                    f"needs {supermajority(sched.size)}")
            block.second_confirmations.add(producer)
        else:
            raise ValueError(f"stage must be 1 or 2, got {stage!r}")
        return block

    def is_final(self, block: Block) -> bool:
        if block.height == 0:
            return True
        need = supermajority(self.producers_for(block).size)
        return len(block.confirmations) >= need and len(block.second_confirmations) >= need

    def advance_lib(self) -> int:
        h = self.lib_height
        while h + 1 <= self.head_height and self.is_final(self.blocks[h + 1]):
            h += 1
        self.lib_height = h
        return h

    # -- queries ------------------------------------------------------------

    def get_block(self, key: int | str) -> Block:
        if isinstance(key, int):
            if 0 <= key < len(self.blocks):
                return self.blocks[key]
            raise ChainNotFound(f"no block at height {key}")
        try:
            return self.blocks[self._by_id[key]]
        except KeyError:
            raise ChainNotFound(f"no block with id {key!r}") from None

    def get_transaction(self, tx_id: str) -> tuple[Transaction, Block, bool]:
        """Return the transaction, its block, and whether that block is irreversible."""
        try:
            height = self._tx_height[tx_id]
        except KeyError:
            raise ChainNotFound(f"transaction {tx_id!r} not found in any block") from None
        block = self.blocks[height]
        tx = next(t for t in block.transactions if t.id == tx_id)
        return tx, block, height <= self.lib_height

    def transaction_height(self, tx_id: str) -> int | None:
        return self._tx_height.get(tx_id)

    def included_transactions(self) -> Iterable[tuple[Transaction, Block]]:
        for block in self.blocks:
            for tx in block.transactions:
                yield tx, block

    # -- serialization ------------------------------------------------------

    def chain_log(self) -> str:
        return "".join(b.log_line() + "\n" for b in self.blocks)

    def state_digest(self) -> str:
        return sha256_hex(self.chain_log() + f"lib={self.lib_height}")

    def restore_block(self, block: Block) -> None:
        """Append an already-produced block while reloading a persisted chain."""
        if block.height != self.head_height + 1 or block.parent_id != self.head.id:
            raise ValueError(f"block {block.height} does not extend the head")
        self.blocks.append(block)
        self._by_id[block.id] = block.height
        for tx in block.transactions:
            self._tx_height[tx.id] = block.height
        self.clock = max(self.clock, block.timestamp)


# --------------------------------------------------------------------------
# Event-driven driver
# --------------------------------------------------------------------------

_EXTERNAL, _CONFIRM, _SLOT = 0, 1, 2


class Simulator:
    """Drives a :class:`Chain` through simulated time.

    Honest producers confirm every block. The producing node uploads the
    block to its peers one after another over its link, so the k-th peer
    receives it ``propagation + k * transmission(block)`` after production
    and answers with a stage-1 confirmation. Once stage 1 reaches a
    supermajority, every producer learns of it one message delay later and
    sends its stage-2 confirmation, again serialised over the network.
    """

    def __init__(self, chain: Chain):
        self.chain = chain
        self._queue: list = []
        self._seq = itertools.count()
        self.now: float = chain.clock
        self.final_at: dict[int, float] = {0: 0.0}
        self._stage2_sent: set[int] = set()
        self.block_hooks: list[Callable[[Block], None]] = []

    def at(self, time_ms: float, callback: Callable[[float], None]) -> None:
        """Run ``callback(time_ms)`` when the clock reaches ``time_ms``."""
        if time_ms < self.now:
            raise ValueError(f"cannot schedule in the past ({time_ms} < {self.now})")
        heapq.heappush(self._queue, (time_ms, _EXTERNAL, next(self._seq), callback))

    def _push_confirm(self, time_ms: float, height: int, producer: str, stage: int) -> None:
        heapq.heappush(self._queue, (time_ms, _CONFIRM, next(self._seq), (height, producer, stage)))

    def _after_block(self, block: Block) -> None:
        net = self.chain.network
        sched = self.chain.producers_for(block).producers
        i0 = sched.index(block.producer) if block.producer in sched else 0
        order = [sched[(i0 + k) % len(sched)] for k in range(len(sched))]
        conf_delay = net.delivery_ms(CONFIRMATION_BYTES)
        xfer = net.transmission_ms(block.size_bytes)
        # the producer signs its own block at production time
        self._push_confirm(block.timestamp, block.height, order[0], 1)
        for k, peer in enumerate(order[1:], start=1):
            received = block.timestamp + net.propagation_delay_ms + k * xfer
            self._push_confirm(received + conf_delay, block.height, peer, 1)

    def _on_confirm(self, height: int, producer: str, stage: int) -> None:
        chain = self.chain
        block = chain.confirm_block(height, producer, stage)
        sched = chain.producers_for(block).producers
        need = supermajority(len(sched))
        if stage == 1 and len(block.confirmations) >= need and height not in self._stage2_sent:
            self._stage2_sent.add(height)
            net = chain.network
            conf_delay = net.delivery_ms(CONFIRMATION_BYTES)
            xfer = net.transmission_ms(CONFIRMATION_BYTES)
            for k, peer in enumerate(sched):
                self._push_confirm(self.now + 2 * conf_delay + k * xfer, height, peer, 2)
        if stage == 2:
            before = chain.lib_height
            after = chain.advance_lib()
            for h in range(before + 1, after + 1):
                self.final_at[h] = self.now

    def _next_slot(self) -> int:
        return self.chain.head.timestamp + BLOCK_INTERVAL_MS

    def step(self) -> None:
        slot = self._next_slot()
        if self._queue and self._queue[0][0] <= slot:
            t, kind, _, item = heapq.heappop(self._queue)
            self.now = max(self.now, t)
            self.chain.clock = max(self.chain.clock, self.now)
            if kind == _EXTERNAL:
                item(t)
            else:
                self._on_confirm(*item)
            return
        self.now = slot
        block = self.chain.produce_block(slot)
        for hook in self.block_hooks:
            hook(block)
        self._after_block(block)

    def run_until(self, t_end: float) -> None:
        """Process everything up to and including ``t_end``."""
        while True:
            slot = self._next_slot()
            nxt = min(slot, self._queue[0][0]) if self._queue else slot
            if nxt > t_end:
                break
            self.step()
        self.now = max(self.now, t_end)
        self.chain.clock = max(self.chain.clock, self.now)

    def run_blocks(self, n: int) -> None:
        self.run_until(self.chain.head.timestamp + n * BLOCK_INTERVAL_MS)

    def run_until_final(self, max_time_ms: float) -> bool:
        """Advance slot by slot until no work is pending and the head is final.

        Returns False if ``max_time_ms`` was reached first.
        """
        while True:
            slot = self._next_slot()
            while self._queue and self._queue[0][0] < slot and self._queue[0][0] <= max_time_ms:
                self.step()
            idle = not any(k == _EXTERNAL for _, k, _, _ in self._queue)
            if idle and self.chain.pending_count == 0 and self.chain.lib_height == self.chain.head_height:
                return True
            if slot > max_time_ms:
                return False
            self.run_until(slot)
