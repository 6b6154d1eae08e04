import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dma_triple_loop
from sentrysim.bus import BusError
from sentrysim.clic import ClicState
from sentrysim.dma import (DmaDevice, DmaEngineState, DmaJob, DmaSchedule, dma_cycle,
                           gen_addresses, oracle_copy, schedule_tick)


class ByteBus:
    def __init__(self, size=4096, base=0):
        self.mem = bytearray(size)
        self.base = base

    def mapped(self, addr, n):
        return self.base <= addr and addr + n <= self.base + len(self.mem)

    def read(self, addr, width):
        if not self.mapped(addr, width):
            raise BusError(addr)
        o = addr - self.base
        return int.from_bytes(self.mem[o:o + width], "little")

    def write(self, addr, width, value):
        if not self.mapped(addr, width):
            raise BusError(addr)
        o = addr - self.base
        self.mem[o:o + width] = value.to_bytes(width, "little")


def drain(engine, bus, clic=None, start=0, limit=100000):
    t = start
    txn_cycles = 0
    while engine.queue and t < start + limit:
        if dma_cycle(engine, bus, clic, t):
            txn_cycles += 1
        t += 1
    return t, txn_cycles


def test_segments_example():
    job = DmaJob(0x100, 0x200, 4, reps1=2, reps2=2, src_stride1=8, src_stride2=32,
                 dst_stride1=4, dst_stride2=8)
    assert gen_addresses(job) == [(0x100, 0x200, 4), (0x108, 0x204, 4), (0x120, 0x208, 4), (0x128, 0x20C, 4)]


def test_degenerate_is_plain_copy():
    assert gen_addresses(DmaJob(0x10, 0x80, 12)) == [(0x10, 0x80, 12)]


def test_negative_stride_walks_backward():
    bus = ByteBus()
    bus.mem[0x100:0x110] = bytes(range(16))
    job = DmaJob(0x10C, 0x200, 4, reps1=4, src_stride1=-4, dst_stride1=4)
    e = DmaEngineState()
    e.submit(job, 0)
    drain(e, bus)
    assert bytes(bus.mem[0x200:0x210]) == bytes([12, 13, 14, 15, 8, 9, 10, 11, 4, 5, 6, 7, 0, 1, 2, 3])


def test_contiguous_sixteen_bytes_take_four_beats():
    bus = ByteBus()
    bus.mem[0:16] = b"0123456789abcdef"
    e = DmaEngineState()
    e.submit(DmaJob(0, 0x40, 16), 0)
    end, beats = drain(e, bus)
    assert beats == 4 and end == e.setup_cycles + 4
    assert bus.mem[0x40:0x50] == b"0123456789abcdef"


def test_unmapped_destination_aborts():
    bus = ByteBus(0x100)
    bus.mem[0:8] = b"ABCDEFGH"
    clic = ClicState()
    e = DmaEngineState(error_line=12)
    e.submit(DmaJob(0, 0xF8, 4, reps1=3, src_stride1=4, dst_stride1=4), 0)
    drain(e, bus, clic)
    assert e.errors == 1 and e.completed_count == 0
    assert bus.mem[0xF8:0x100] == b"ABCDEFGH"  # the two segments that fit were copied
    assert clic.pending[12]


def test_schedule_launches():
    s = DmaSchedule(DmaJob(0, 8, 4), 1000, 500, 3)
    assert [s.launch_time(k) for k in range(3)] == [1000, 1500, 2000]
    e = DmaEngineState(queue_depth=8)
    e.add_schedule(s)
    launches = [t for t in range(3000) if schedule_tick(e, t)]
    assert launches == [1000, 1500, 2000]


def test_count_one_ignores_period():
    e = DmaEngineState()
    e.add_schedule(DmaSchedule(DmaJob(0, 8, 4), 10, 0, 1))
    assert [t for t in range(100) if schedule_tick(e, t)] == [10]


def test_overrun_drops_job():
    e = DmaEngineState()
    job = DmaJob(0, 8, 4)
    assert all(e.submit(job, 0) for _ in range(4))
    assert not e.submit(job, 0)
    assert e.overruns == 1 and len(e.queue) == 4


def test_completion_interrupts_match_count():
    bus = ByteBus()
    clic = ClicState()
    e = DmaEngineState()
    for k in range(3):
        e.submit(DmaJob(0, 0x100 + 16 * k, 8, completion_line=6), 0)
    drain(e, bus, clic)
    assert e.completed_count == 3 == e.completions_raised
    assert clic.pending[6]


def test_beats_never_cross_word_boundary():
    bus = ByteBus()
    e = DmaEngineState()
    e.submit(DmaJob(0x3, 0x106, 13), 0)
    seen = []
    t = 0
    while e.queue:
        for x in dma_cycle(e, bus, None, t):
            assert x.address // 4 == (x.address + x.width - 1) // 4
            seen.append(x)
        t += 1
    assert sum(x.width for x in seen if x.kind == "store") == 13


jobs = st.builds(
    lambda inner, r1, r2, ss1, ss2, ds1, ds2, src, dst: DmaJob(
        src, dst, inner, r1, r2, ss1 * inner, ss2, ds1 * inner, ds2),
    st.integers(1, 9), st.integers(1, 4), st.integers(1, 3),
    st.integers(1, 3), st.integers(40, 120), st.integers(1, 3), st.integers(40, 120),
    st.integers(0, 200), st.integers(1024, 1300))


@settings(max_examples=150, deadline=None)
@given(jobs, st.binary(min_size=512, max_size=512))
def test_oracle_equivalence(job, payload):
    bus = ByteBus(2048)
    bus.mem[:512] = payload
    ref = bytearray(bus.mem)
    dma_triple_loop(ref, job.src_base, job.dst_base, job.inner_len, job.reps1, job.reps2,
                    job.src_stride1, job.src_stride2, job.dst_stride1, job.dst_stride2)
    e = DmaEngineState()
    e.submit(job, 0)
    drain(e, bus)
    assert bus.mem == ref
    ref2 = bytearray(payload) + bytearray(2048 - 512)
    oracle_copy(ref2, job)
    assert ref2 == ref


def test_gen_addresses_pure():
    job = DmaJob(5, 900, 3, 4, 2, 7, 50, 3, 20)
    a = gen_addresses(job)
    assert a == gen_addresses(job) and len(a) == job.n_segments == 8


def test_register_interface():
    e = DmaEngineState()
    dev = DmaDevice(e, lambda: 77)
    for off, v in [(0x00, 0x20000), (0x04, 0x20100), (0x08, 16), (0x24, 0x80000005)]:
        dev.write(off, 4, v)
    dev.write(0x28, 4, 1)
    assert len(e.queue) == 1 and e.queue[0].launch_cycle == 77
    assert e.queue[0].job.completion_line == 5
    assert dev.read(0x3C, 4) == 1 | (1 << 8)
    dev.write(0x08, 4, 0)
    dev.write(0x28, 4, 1)  # invalid descriptor is counted, not raised
    assert e.errors == 1
    with pytest.raises(BusError):
        dev.write(0x3C, 4, 0)
    with pytest.raises(BusError):
        dev.read(0x01, 1)
