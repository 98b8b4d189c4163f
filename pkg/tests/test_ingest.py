import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgechain.errors import (
    BadDimensions,
    FrameTooLarge,
    InsufficientFrames,
    MalformedCsv,
    NonFinite,
    RaggedRows,
)
from bridgechain.ingest import (
    DEFAULT_BUFFER_BYTES,
    DamageLevel,
    DamageScenario,
    FrameBuffer,
    buffer_push,
    dataset_filename,
    epoch_batch,
    parse_frame,
    sensor_header,
    serialize_frame,
    split_epochs,
    synthesize_dataset,
    synthesize_frames,
)
from bridgechain.pipeline import NoveltyMonitor
from bridgechain.shm import SensorFrame
from oracles import byte_accounting

LEVELS = [DamageLevel.H, DamageLevel.D1, DamageLevel.D2, DamageLevel.D3]


def csv_bytes(rows, s):
    lines = [sensor_header(s)] + [",".join(str(x) for x in r) for r in rows]
    return ("\n".join(lines) + "\n").encode()


def sized_frame(n_t, s=2, tag="f"):
    return SensorFrame("b", tag, np.zeros((n_t, s)))


# -- parsing --------------------------------------------------------------

def test_parse_full_size_file():
    rng = np.random.default_rng(0)
    rows = np.column_stack([np.arange(4396) / 256, rng.normal(size=(4396, 51))])
    data = sensor_header(51) + "\n" + "\n".join(",".join(f"{x:.6f}" for x in r) for r in rows) + "\n"
    f = parse_frame(data.encode())
    assert (f.n_sensors, f.n_samples) == (51, 4396)


def test_header_only_is_malformed():
    with pytest.raises(MalformedCsv):
        parse_frame((sensor_header(3) + "\n").encode())


@pytest.mark.parametrize("data", [b"", b"x,s001\n0,1\n", b"t\n0\n", b"\xff\xfe\n", b"t,s001,s002\n0,1,abc\n"])
def test_malformed(data):
    with pytest.raises(MalformedCsv):
        parse_frame(data)


def test_nan_row():
    with pytest.raises(NonFinite):
        parse_frame(csv_bytes([[0, 1, 2], [1, "NaN", 3]], 2))


def test_ragged_rows():
    with pytest.raises(RaggedRows):
        parse_frame(csv_bytes([[0, 1, 2], [1, 2]], 2))


def test_round_trip_synthetic():
    frames = synthesize_frames(DamageScenario.for_level("D2", 51), 3, 51, 256, seed=9)
    for f in frames:
        back = parse_frame(serialize_frame(f), f.bridge_id, f.file_id)
        assert np.max(np.abs(back.values - f.values)) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(64, 200), st.integers(0, 2**64 - 1),
       st.sampled_from(LEVELS))
def test_round_trip_property(s, n_t, seed, level):
    (f,) = synthesize_frames(DamageScenario.for_level(level, s), 1, s, n_t, seed)
    back = parse_frame(serialize_frame(f))
    assert np.max(np.abs(back.values - f.values)) <= 1e-9


# -- buffer ---------------------------------------------------------------

def test_default_capacity():
    assert FrameBuffer().capacity_bytes == DEFAULT_BUFFER_BYTES == 150 * 2**20


def test_push_within_capacity():
    buf = FrameBuffer(10_000)
    r = buffer_push(buf, sized_frame(10))
    assert r.accepted and r.eviction_count == 0


def test_fill_then_push_evicts_exactly_enough():
    frame_bytes = sized_frame(10).nbytes
    buf = FrameBuffer(4 * frame_bytes)
    frames = [sized_frame(10, tag=str(i)) for i in range(4)]
    for f in frames:
        assert buf.push(f).eviction_count == 0
    assert buf.used_bytes == buf.capacity_bytes
    big = sized_frame(25, tag="big")  # 2.5 frames worth
    r = buf.push(big)
    assert [f.file_id for f in r.evicted] == ["0", "1", "2"]
    assert [f.file_id for f in buf] == ["3", "big"]


def test_frame_too_large():
    with pytest.raises(FrameTooLarge):
        FrameBuffer(100).push(sized_frame(10))


def test_epoch_batch():
    buf = FrameBuffer(10**6)
    for i in range(5):
        buf.push(sized_frame(4, tag=str(i)))
    assert [f.file_id for f in epoch_batch(buf, 1)] == ["0"]
    assert [f.file_id for f in buf.epoch_batch(3)] == ["1", "2", "3"]
    with pytest.raises(InsufficientFrames):
        buf.epoch_batch(2)


ops = st.lists(st.one_of(st.tuples(st.just("push"), st.integers(2, 40)),
                         st.tuples(st.just("batch"), st.integers(1, 4))), max_size=60)


@settings(max_examples=150, deadline=None)
@given(st.integers(64, 2000), ops)
def test_buffer_matches_byte_accounting_oracle(capacity, seq):
    buf = FrameBuffer(capacity)
    sizes: list[int] = []
    out = 0
    for op, n in seq:
        if op == "push":
            f = sized_frame(n, tag=str(len(sizes)))
            if f.nbytes > capacity:
                with pytest.raises(FrameTooLarge):
                    buf.push(f)
                continue
            sizes.append(f.nbytes)
            buf.push(f)
        elif n <= len(buf):
            out += len(buf.epoch_batch(n))
        assert buf.used_bytes <= capacity
        assert buf.used_bytes == sum(f.nbytes for f in buf)
    # conservation: pushed = batched + resident + evicted
    assert buf.pushed == len(sizes) == out + len(buf) + buf.evicted
    ids = [int(f.file_id) for f in buf]
    assert ids == sorted(ids)


@settings(max_examples=100, deadline=None)
@given(st.integers(64, 2000), st.lists(st.integers(2, 40), max_size=40))
def test_push_only_matches_oracle(capacity, lengths):
    frames = [sized_frame(n, tag=str(i)) for i, n in enumerate(lengths)]
    frames = [f for f in frames if f.nbytes <= capacity]
    resident, evicted = byte_accounting([f.nbytes for f in frames], capacity)
    buf = FrameBuffer(capacity)
    got_evicted = []
    for f in frames:
        got_evicted += [e.file_id for e in buf.push(f).evicted]
    assert [f.file_id for f in buf] == [frames[i].file_id for i in resident]
    assert got_evicted == [frames[i].file_id for i in evicted]


def test_split_epochs():
    frames = [sized_frame(2, tag=str(i)) for i in range(7)]
    assert [len(e) for e in split_epochs(frames, 3)] == [3, 3]


# -- scenarios and generator ------------------------------------------------

def test_scenario_invariants():
    sev = [DamageScenario.for_level(lvl, 51).severity for lvl in LEVELS]
    assert sev == [0.0, 0.3, 0.6, 0.95]
    h = DamageScenario.for_level("H", 51)
    assert h.affected_sensors == frozenset()
    assert DamageScenario.for_level("D1", 51).affected_sensors
    with pytest.raises(ValueError):
        DamageScenario(DamageLevel.H, frozenset({1}))


def test_generator_is_deterministic():
    h = DamageScenario.for_level("H", 8)
    assert synthesize_dataset(h, 3, 8, 128, 42) == synthesize_dataset(h, 3, 8, 128, 42)
    assert synthesize_dataset(h, 1, 8, 128, 42) != synthesize_dataset(h, 1, 8, 128, 43)


@pytest.mark.parametrize("s,n_t", [(1, 256), (8, 63)])
def test_bad_dimensions(s, n_t):
    with pytest.raises(BadDimensions):
        synthesize_dataset(DamageScenario.for_level("H", 2), 1, s, n_t, 0)


def test_filename_convention():
    assert dataset_filename("b01", "D3", 7, 2) == "b01_D3_7_2.csv"


def _monitor(seed, s=16, n_t=128, m=4):
    healthy = [synthesize_frames(DamageScenario.for_level("H", s), m, s, n_t, seed * 100 + i)
               for i in range(3)]
    return NoveltyMonitor.fit(healthy, group_width=s)


def test_d3_vs_d1_vs_h_same_seed():
    s, n_t, m = 16, 128, 4
    mon = _monitor(5, s, n_t, m)
    mon.fit_calibration([synthesize_frames(DamageScenario.for_level("D3", s), m, s, n_t, 999)])
    norm = {}
    for lvl in ("H", "D1", "D3"):
        ep = synthesize_frames(DamageScenario.for_level(lvl, s), m, s, n_t, 77)
        norm[lvl] = min(mon.raw_total(ep) / mon.calibration.n_ref, 1.0)
    assert norm["D3"] > norm["D1"] > norm["H"]


def test_generator_monotonicity_over_20_seeds():
    s, n_t, m = 16, 128, 4
    raws = {lvl: [] for lvl in LEVELS}
    for seed in range(20):
        mon = _monitor(seed, s, n_t, m)
        for lvl in LEVELS:
            ep = synthesize_frames(DamageScenario.for_level(lvl, s), m, s, n_t, 10_000 + seed)
            raws[lvl].append(mon.raw_total(ep))
    medians = [float(np.median(raws[lvl])) for lvl in LEVELS]
    assert all(a < b for a, b in zip(medians, medians[1:])), medians
