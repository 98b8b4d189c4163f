import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgechain.chain import (
    BLOCK_INTERVAL_MS,
    Chain,
    NetworkModel,
    Simulator,
    Transaction,
    producer_name,
    supermajority,
    valid_account_name,
)
from bridgechain.errors import (
    ChainNotFound,
    DuplicateName,
    InvalidName,
    NotFound,
    NotSlotBoundary,
    OversizedTransaction,
    PrematureStage2,
    SlotOccupied,
    UnknownAccount,
    UnknownProducer,
    WrongProducer,
)


def producers(n):
    return [producer_name(i) for i in range(n)]


def tx(actor="alice", payload=b"x" * 36, t=0.0, action="note"):
    return Transaction(actor, "c_1", action, payload, t)


def new_chain(n=5, **kw):
    c = Chain(producers(n), **kw)
    c.create_account("alice", 0.0)
    return c


def confirm_all(chain, height, stages=(1, 2), who=None):
    names = who if who is not None else chain.producers_for(chain.get_block(height)).producers
    for stage in stages:
        for p in names:
            chain.confirm_block(height, p, stage)


# -- accounts -------------------------------------------------------------

def test_account_names():
    c = new_chain()
    assert c.create_account("bridgeacct1").name == "bridgeacct1"
    with pytest.raises(InvalidName):
        c.create_account("Bridge_01")
    with pytest.raises(DuplicateName):
        c.create_account("bridgeacct1")
    with pytest.raises(ChainNotFound):
        c.get_account("nobody")
    assert not valid_account_name("a" * 13)
    assert not valid_account_name("abc6")


# -- network and submission ------------------------------------------------

def test_arrival_time_100_bytes():
    net = NetworkModel(5.0, 100e6)
    assert net.delivery_ms(100) == pytest.approx(5.008, abs=1e-12)
    c = new_chain(network=net)
    payload = b"p" * (100 - 64)
    r = c.submit_transaction(tx(payload=payload))
    assert tx(payload=payload).size_bytes == 100
    assert r.accepted and r.arrival_ms == pytest.approx(5.008, abs=1e-12)


def test_empty_payload_rejected():
    c = new_chain()
    r = c.submit_transaction(tx(payload=b""))
    assert not r.accepted
    assert c.pending_count == 0


def test_unknown_actor():
    with pytest.raises(UnknownAccount):
        new_chain().submit_transaction(tx(actor="mallory"))


def test_oversized():
    c = new_chain(max_payload_bytes=10)
    with pytest.raises(OversizedTransaction):
        c.submit_transaction(tx(payload=b"x" * 11))


def test_transaction_id_is_function_of_fields():
    a, b = tx(t=1.0), tx(t=1.0)
    assert a.id == b.id and a.id != tx(t=2.0).id
    assert Transaction.from_dict(a.to_dict()) == a


# -- production -----------------------------------------------------------

def test_empty_block_at_slot():
    c = new_chain()
    b = c.produce_block(500)
    assert b.height == 1 and b.transactions == () and c.head_height == 1


def test_sixty_seconds_is_120_blocks():
    sim = Simulator(new_chain())
    sim.run_until(60_000)
    assert sim.chain.head_height == 120


def test_slot_errors():
    c = new_chain()
    with pytest.raises(NotSlotBoundary):
        c.produce_block(250)
    c.produce_block(500)
    with pytest.raises(SlotOccupied):
        c.produce_block(500)
    with pytest.raises(WrongProducer):
        c.produce_block(1000, producer="nobody")


def test_cpu_budget_caps_block():
    c = new_chain(cost_model=lambda t: 10)
    for i in range(1000):
        assert c.submit_transaction(tx(payload=str(i).encode())).accepted
    b = c.produce_block(500)
    assert len(b.transactions) <= 500
    assert len(b.transactions) == 500 and b.cpu_used_us == 5000
    assert c.pending_count == 500


def test_arrival_order_then_id():
    c = new_chain()
    late = tx(payload=b"late", t=100.0)
    early = [tx(payload=bytes([65 + i]), t=0.0) for i in range(5)]
    c.submit_transaction(late)
    for t in early:
        c.submit_transaction(t)
    b = c.produce_block(500)
    ids = [t.id for t in b.transactions]
    assert ids[-1] == late.id
    assert ids[:-1] == sorted(t.id for t in early)


# -- confirmation and LIB --------------------------------------------------

@pytest.mark.parametrize("n", [4, 5, 10, 21, 50])
def test_supermajority_exactness(n):
    need = 2 * n // 3 + 1
    assert supermajority(n) == need
    c = Chain(producers(n))
    c.produce_block(500)
    names = producers(n)
    confirm_all(c, 1, stages=(1,), who=names[:need - 1])
    with pytest.raises(PrematureStage2):
        c.confirm_block(1, names[0], 2)
    c.confirm_block(1, names[need - 1], 1)
    confirm_all(c, 1, stages=(2,), who=names[:need - 1])
    assert c.advance_lib() == 0
    c.confirm_block(1, names[need - 1], 2)
    assert c.advance_lib() == 1


def test_n21_stage_two_opens_at_15():
    c = Chain(producers(21))
    c.produce_block(500)
    names = producers(21)
    confirm_all(c, 1, stages=(1,), who=names[:14])
    with pytest.raises(PrematureStage2):
        c.confirm_block(1, names[20], 2)
    c.confirm_block(1, names[14], 1)
    c.confirm_block(1, names[20], 2)


def test_duplicate_confirmation_idempotent():
    c = new_chain()
    c.produce_block(500)
    c.confirm_block(1, "bpaa", 1)
    c.confirm_block(1, "bpaa", 1)
    assert c.get_block(1).confirmations == {"bpaa"}


def test_unknown_producer():
    c = new_chain()
    c.produce_block(500)
    with pytest.raises(UnknownProducer):
        c.confirm_block(1, "alice", 1)


def test_lib_examples():
    c = new_chain()
    assert c.advance_lib() == 0
    for h in range(1, 8):
        c.produce_block(h * 500)
    for h in range(1, 6):
        confirm_all(c, h)
    confirm_all(c, 6, stages=(1,))
    assert c.advance_lib() == 5
    confirm_all(c, 6, stages=(2,))
    confirm_all(c, 7)
    assert c.advance_lib() == 7


def test_lib_requires_ancestors():
    c = new_chain()
    c.produce_block(500)
    c.produce_block(1000)
    confirm_all(c, 2)
    assert c.advance_lib() == 0


op = st.one_of(
    st.just(("produce",)),
    st.tuples(st.just("confirm"), st.integers(1, 8), st.integers(0, 4), st.sampled_from([1, 2])),
    st.tuples(st.just("final"), st.integers(1, 8)),
    st.just(("lib",)),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(op, max_size=120))
def test_lib_monotone_and_final_blocks_frozen(ops):
    c = new_chain()
    lib = 0
    final_ids: list[str] = []
    for o in ops:
        if o[0] == "produce":
            c.produce_block(c.head.timestamp + BLOCK_INTERVAL_MS)
        elif o[0] == "confirm":
            _, h, p, stage = o
            if h <= c.head_height:
                try:
                    c.confirm_block(h, producers(5)[p], stage)
                except PrematureStage2:
                    pass
        elif o[0] == "final":
            if o[1] <= c.head_height:
                confirm_all(c, o[1])
        else:
            c.advance_lib()
        assert c.lib_height >= lib
        lib = c.lib_height
        # blocks already final keep their identity
        assert [b.id for b in c.blocks[:len(final_ids)]] == final_ids
        final_ids = [b.id for b in c.blocks[:lib + 1]]
    if c.lib_height < c.head_height:
        assert not c.is_final(c.blocks[c.lib_height + 1]) or c.advance_lib() > lib


# -- simulator ------------------------------------------------------------

def _submit_stream(sim, n, every_ms=37.0):
    c = sim.chain
    for i in range(n):
        sim.at(i * every_ms, lambda t, i=i: c.submit_transaction(tx(payload=f"v{i}".encode(), t=t)))


def test_simulator_finalizes_everything():
    sim = Simulator(new_chain())
    _submit_stream(sim, 200)
    assert sim.run_until_final(120_000)
    c = sim.chain
    assert c.lib_height == c.head_height
    assert c.pending_count == 0
    included = [t.id for t, _ in c.included_transactions()]
    assert len(included) == len(set(included)) == 200


def test_conservation_mid_run():
    sim = Simulator(new_chain())
    ids = []
    c = sim.chain
    for i in range(300):
        t = tx(payload=f"v{i}".encode(), t=0.0)
        if c.submit_transaction(t).accepted:
            ids.append(t.id)
    c.cost_model = lambda t: 1000  # five per block
    sim.run_until(5_000)
    included = [t.id for t, _ in c.included_transactions()]
    pending = [t.id for t in c.pending()]
    assert len(included) == len(set(included))
    assert sorted(included + pending) == sorted(ids)
    assert set(included).isdisjoint(pending)


def test_simulator_deterministic():
    def run():
        sim = Simulator(new_chain())
        _submit_stream(sim, 80)
        sim.run_until_final(60_000)
        return sim.chain.chain_log(), sim.chain.state_digest()

    assert run() == run()


def test_schedule_correctness():
    sim = Simulator(new_chain(7))
    sim.run_until(30_000)
    sched = producers(7)
    for b in sim.chain.blocks[1:]:
        assert b.producer == sched[(b.timestamp // 500) % 7]


def test_schedule_change_waits_for_lib_and_round():
    c = new_chain(4)
    sim = Simulator(c)
    sim.run_until(1_500)
    proposed_at = c.head_height
    c.create_account("bpzz", c.clock)
    c.propose_schedule(["bpzz", "bpaa", "bpab"])
    sim.run_until(20_000)
    assert len(c.schedules) == 2
    new = c.schedules[1]
    first = next(b for b in c.blocks if b.timestamp // 500 >= new.start_slot)
    assert new.start_slot % 4 == 0
    # activation only once the proposing block was irreversible
    assert sim.final_at[proposed_at] <= new.start_slot * BLOCK_INTERVAL_MS
    assert first.producer == ["bpzz", "bpaa", "bpab"][new.start_slot % 3]
    for b in c.blocks[1:]:
        sch = c.schedules[b.schedule_round]
        assert b.producer == sch.producer_at(b.timestamp // 500)


def test_block_cadence_under_load():
    sim = Simulator(new_chain())
    _submit_stream(sim, 2000, every_ms=5.0)
    sim.run_until(10_000)
    assert sim.chain.head_height == 20


# -- queries --------------------------------------------------------------

def test_queries():
    sim = Simulator(new_chain())
    t = tx(payload=b"hello")
    sim.at(0.0, lambda now: sim.chain.submit_transaction(t))
    sim.run_until(500)
    c = sim.chain
    assert c.get_block(0).height == 0
    _, block, final = c.get_transaction(t.id)
    assert block.height == 1 and not final
    sim.run_until(3_000)
    _, block, final = c.get_transaction(t.id)
    assert final and c.lib_height >= 1
    assert c.get_block(block.id) is block
    with pytest.raises(NotFound):
        c.get_transaction("deadbeef")
    with pytest.raises(NotFound):
        c.get_block(10_000)


def test_chain_log_canonical_order():
    c = new_chain()
    c.produce_block(500)
    line = c.chain_log().splitlines()[1]
    keys = list(json.loads(line))
    assert keys[:5] == ["height", "parent_id", "producer", "timestamp", "tx_ids"]
