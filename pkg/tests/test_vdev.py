import io
import random
import warnings
from collections import Counter
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracesmith.vdev import (BlockDevice, CapacityError, ClockParams, DeviceLayout, Partition,
                             TraceFormatError, TraceRecord, TraceSink, VirtualClock,
                             build_extent_map, clz64, default_layout, entropy_clz, entropy_exact,
                             ilog2, parse_trace, trace_to_string, write_trace)
from tracesmith.vdev.layout import MAX_RECORD_SECTORS


def reference_entropy(data: bytes) -> float:
    """Independent oracle: exact rational counts, logs at high precision."""
    import mpmath
    mpmath.mp.dps = 40
    n = len(data)
    return float(-sum(mpmath.mpf(c) / n * mpmath.log(mpmath.mpf(c) / n, 2)
                      for c in Counter(data).values()) / 8)


def reference_clz_entropy(data: bytes) -> float:
    n = len(data)
    raw = sum(c * (n.bit_length() - c.bit_length()) for c in Counter(data).values()) / (8 * n)
    return min(1.0, raw)   # floor errors can push the raw sum past 1


# -- entropy ----------------------------------------------------------------------

def test_entropy_examples():
    assert entropy_exact(bytes(4096)) == 0.0
    assert entropy_exact(bytes(range(256))) == 1.0
    assert entropy_exact(bytes(2048) + b"\xff" * 2048) == 0.125
    assert entropy_clz(bytes(2048) + b"\xff" * 2048) == 0.125
    assert entropy_clz(bytes(range(256))) == 1.0
    assert entropy_clz(b"aab") == pytest.approx(1 / 24)


def test_entropy_rejects_empty():
    with pytest.raises(ValueError):
        entropy_exact(b"")
    with pytest.raises(ValueError):
        entropy_clz(b"")


@pytest.mark.parametrize("x,expect", [(0, 64), (1, 63), (2, 62), (255, 56), (1 << 63, 0),
                                      ((1 << 64) - 1, 0)])
def test_clz64(x, expect):
    assert clz64(x) == expect


def test_ilog2_is_floor_log2():
    for n in [1, 2, 3, 4, 5, 7, 8, 1023, 1024, 1025, 2**40 + 1]:
        assert ilog2(n) == n.bit_length() - 1
    with pytest.raises(ValueError):
        ilog2(0)


def test_entropy_exact_matches_reference_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 5000))
        alphabet = int(rng.integers(1, 257))
        data = rng.integers(0, alphabet, n, dtype=np.uint8).tobytes()
        assert abs(entropy_exact(data) - reference_entropy(data)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=256, max_size=4096))
def test_clz_close_to_exact(data):
    assert abs(entropy_clz(data) - entropy_exact(data)) <= 0.15
    assert entropy_clz(data) == pytest.approx(reference_clz_entropy(data), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=1, max_size=2000), st.randoms())
def test_entropy_permutation_invariant(data, r):
    shuffled = bytearray(data)
    r.shuffle(shuffled)
    assert entropy_exact(bytes(shuffled)) == pytest.approx(entropy_exact(data), abs=1e-12)


def test_clz_equals_exact_on_power_of_two_histograms():
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = int(rng.integers(0, 9))                 # 2**k symbols
        each = 2 ** int(rng.integers(0, 5))         # equal power-of-two counts
        syms = rng.choice(256, 2 ** k, replace=False).astype(np.uint8)
        data = np.repeat(syms, each).tobytes()
        assert entropy_clz(data) == pytest.approx(entropy_exact(data), abs=1e-12)


# -- layout and extents -------------------------------------------------------------

def test_default_layout_bands():
    lay = default_layout()
    names = [p.name for p in lay.partitions]
    assert names == ["mbr", "boot", "os", "recovery", "data"]
    assert lay.partitions[0].start_lba == 0 and lay.partitions[0].end_lba == 2048
    assert lay.partitions[1].start_lba == 2048 and lay.partitions[1].end_lba == 1050624
    assert lay.total_sectors == 16 * 2**30 // 512
    assert lay.data.length_sectors == max(p.length_sectors for p in lay.partitions)


@pytest.mark.parametrize("parts", [
    [("mbr", 0, 10), ("data", 11, 100)],       # gap
    [("data", 0, 100), ("mbr", 100, 10)],      # data not last
    [("mbr", 0, 100), ("data", 100, 50)],      # data not largest
    [("swap", 0, 10), ("data", 10, 100)],      # unknown name
])
def test_bad_layouts(parts):
    with pytest.raises(ValueError):
        DeviceLayout(tuple(Partition(*p) for p in parts))


def _entries(*sizes):
    return [SimpleNamespace(path=f"f{i:02d}", length=s) for i, s in enumerate(sizes)]


def test_extent_walkthrough_without_journal():
    lay = default_layout()
    D = lay.data.start_lba
    emap = build_extent_map(lay, _entries(2048, 5120), journal_sectors=0)
    assert (emap.extent("f00").start_lba, emap.extent("f00").length_sectors) == (D, 8)
    assert (emap.extent("f01").start_lba, emap.extent("f01").length_sectors) == (D + 8, 16)


def test_extent_walkthrough_with_default_journal():
    lay = default_layout()
    D = lay.data.start_lba + 2048
    emap = build_extent_map(lay, _entries(2048, 5120))
    assert emap.extent("f00").start_lba == D
    assert emap.extent("f01").start_lba == D + 8
    assert emap.journal.start_lba == lay.data.start_lba


def test_empty_manifest_map():
    lay = default_layout()
    emap = build_extent_map(lay, [])
    assert emap.extents == {}
    assert emap.free_sectors == lay.data.end_lba - emap.alloc_start


def test_capacity_error():
    lay = DeviceLayout((Partition("mbr", 0, 8), Partition("data", 8, 4096)))
    build_extent_map(lay, _entries(*[4096] * 100), journal_sectors=8)
    with pytest.raises(CapacityError):
        build_extent_map(lay, _entries(*[4096] * 600), journal_sectors=8)   # no room for 25% slack


def test_allocation_is_path_ordered_and_disjoint():
    emap = build_extent_map(default_layout(), _entries(100, 9000, 4096, 4097)[::-1])
    exts = [emap.extent(f"f{i:02d}") for i in range(4)]
    assert all(a.end_lba == b.start_lba for a, b in zip(exts, exts[1:]))
    assert [e.length_sectors for e in exts] == [8, 24, 8, 16]


def test_release_and_reallocate_coalesces():
    emap = build_extent_map(default_layout(), _entries(4096, 4096, 4096))
    free0 = emap.free_sectors
    emap.release("f01")
    emap.release("f00")
    assert emap.free_sectors == free0 + 16
    assert emap.free[0] == (emap.alloc_start, 16)
    ext = emap.allocate("new", 8192)
    assert ext.start_lba == emap.alloc_start


# -- device I/O ---------------------------------------------------------------------

def _device(*sizes, metadata=False, params=None):
    emap = build_extent_map(default_layout(), _entries(*sizes))
    return BlockDevice(emap, VirtualClock(params), metadata=metadata), emap


def test_zero_write_single_record():
    dev, emap = _device(4096)
    recs = dev.record_io("W", "f00", 0, 4096, bytes(4096))
    assert len(recs) == 1
    r = recs[0]
    assert (r.op, r.lba, r.len, r.entropy) == ("W", emap.extent("f00").start_lba, 8, 0.0)


def test_large_write_splits():
    dev, emap = _device(1 << 20)
    recs = dev.record_io("W", "f00", 0, 1 << 20, np.random.default_rng(0).bytes(1 << 20))
    assert [r.len for r in recs] == [MAX_RECORD_SECTORS] * 4
    x = emap.extent("f00").start_lba
    assert [r.lba for r in recs] == [x, x + 512, x + 1024, x + 1536]
    assert all(r.entropy > 0.99 for r in recs)


def test_read_clock_advance():
    dev, _ = _device(4096)
    dev.record_io("R", "f00", 0, 4096)
    # 50 µs latency + 4096 B at 2 GiB/s
    assert dev.clock.now_ns() == 51907
    assert dev.clock._now == pytest.approx(50000 + 4096 / 2147483648 * 1e9)


def test_crypto_cost_charged_before_first_record():
    dev, _ = _device(4096)
    recs = dev.record_io("W", "f00", 0, 4096, bytes(4096), crypto_bytes=4096)
    assert recs[0].ts_ns == 0
    assert dev.clock._now == pytest.approx(2048 + 50000 + 4096 / 2**30 * 1e9)


def test_io_errors():
    dev, _ = _device(4096)
    with pytest.raises(KeyError):
        dev.record_io("R", "nope", 0, 10)
    with pytest.raises(ValueError):
        dev.record_io("R", "f00", 0, 0)
    with pytest.raises(ValueError):
        dev.record_io("R", "f00", 4000, 200)


def test_overflow_extent_used_for_growth():
    dev, emap = _device(4096, 4096)
    dev.ensure_span("f00", 6000)
    recs = dev.record_io("W", "f00", 0, 6000, bytes(6000))
    assert recs[0].lba == emap.extent("f00").start_lba
    assert recs[1].lba == emap.overflow["f00"][0].start_lba


def test_meta_record_in_journal():
    dev, emap = _device(4096, metadata=True)
    r = dev.meta()
    assert r.tag == "meta" and r.len == 8
    assert emap.journal.start_lba <= r.lba < emap.journal.end_lba
    assert dev.layout.partition_of(r.lba, r.len).name == "data"


def test_virtual_clock_never_goes_back():
    c = VirtualClock()
    with pytest.raises(ValueError):
        c.advance(-1)


def test_clock_params_validation():
    with pytest.raises(ValueError):
        ClockParams(read_bandwidth_Bps=0)
    with pytest.raises(ValueError):
        ClockParams(mode="warp")


# -- traces ---------------------------------------------------------------------------

records_st = st.lists(st.tuples(
    st.integers(0, 10**6), st.sampled_from("RW"), st.integers(0, 2**40), st.integers(1, 512),
    st.integers(0, 10**6), st.integers(0, 15),
    st.sampled_from(["data", "meta", "shred", "keyfile", "benign"])), max_size=60)


def _mk(rows):
    out, t = [], 0
    for dt, op, lba, n, e, tid, tag in rows:
        t += dt
        out.append(TraceRecord(t, op, lba, n, None if op == "R" else e / 10**6, tid, tag))
    return out


@settings(max_examples=100, deadline=None)
@given(records_st)
def test_trace_round_trip_property(rows):
    recs = _mk(rows)
    assert parse_trace(trace_to_string(recs)) == recs


def test_trace_round_trip_10k():
    rng = random.Random(5)
    rows = [(rng.randint(0, 1000), rng.choice("RW"), rng.randint(0, 2**34), rng.randint(1, 512),
             rng.randint(0, 10**6), rng.randint(0, 7), rng.choice(["data", "meta", "shred"]))
            for _ in range(10_000)]
    recs = _mk(rows)
    assert parse_trace(trace_to_string(recs)) == recs


def test_single_record_csv():
    text = trace_to_string([TraceRecord(5, "W", 100, 8, 0.5, 1, "data")])
    assert text == "ts_ns,op,lba,len,entropy,tid,tag\n5,W,100,8,0.500000,1,data\n"


def test_bad_op_names_line():
    bad = "ts_ns,op,lba,len,entropy,tid,tag\n1,R,0,8,,0,data\n2,X,0,8,,0,data\n"
    with pytest.raises(TraceFormatError, match="line 3"):
        parse_trace(bad)


def test_bad_header():
    with pytest.raises(TraceFormatError, match="line 1"):
        parse_trace("a,b\n1,2\n")


def test_native_backwards_time_is_error():
    bad = "ts_ns,op,lba,len,entropy,tid,tag\n5,R,0,8,,0,data\n2,R,0,8,,0,data\n"
    with pytest.raises(TraceFormatError, match="line 3"):
        parse_trace(bad)


def test_foreign_import_warns_on_backwards_time():
    text = "ts_ns,op,lba,len,entropy\n5,R,0,8,\n2,W,0,8,0.9\n"
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        recs = parse_trace(text)
    assert len(recs) == 2 and recs[1].tid == 0 and recs[1].tag == "data"
    assert any("backwards" in str(x.message) for x in w)


def test_write_trace_requires_order():
    recs = [TraceRecord(5, "R", 0, 1, None), TraceRecord(1, "R", 0, 1, None)]
    with pytest.raises(ValueError):
        write_trace(recs, io.StringIO())


def test_record_invariants():
    with pytest.raises(ValueError):
        TraceRecord(0, "R", 0, 1, 0.5)
    with pytest.raises(ValueError):
        TraceRecord(0, "W", 0, 1, None)
    with pytest.raises(ValueError):
        TraceRecord(0, "W", 0, 0, 0.1)
    with pytest.raises(ValueError):
        TraceRecord(0, "W", 0, 1, 0.1, tag="other")


def test_sink_sorts_by_time_then_tid():
    s = TraceSink()
    s.append(TraceRecord(10, "R", 0, 1, None, tid=2))
    s.append(TraceRecord(10, "R", 0, 1, None, tid=1))
    s.append(TraceRecord(3, "R", 0, 1, None, tid=5))
    assert [(r.ts_ns, r.tid) for r in s.records()] == [(3, 5), (10, 1), (10, 2)]
