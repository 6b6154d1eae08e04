"""Real-time 3-D DMA engine with timed, periodic launches.

A job copies ``reps2 x reps1`` segments of ``inner_len`` bytes. Segment
``(i2, i1)`` moves from ``src_base + i2*src_stride2 + i1*src_stride1`` to the
matching destination address; segments run in row-major order (i2 outer).
Overlapping source and destination are copied in that generation order; no
memmove semantics are implied.

The engine has one bus port: per cycle it moves at most one beat (up to four
bytes, never crossing a 4-byte boundary on either side) as one read plus one
write.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Deque, List, Optional, Tuple

from .bus import MASK32, BusError, BusTransaction

if TYPE_CHECKING:
    from .clic import ClicState

QUEUE_DEPTH = 4
SETUP_CYCLES = 2


@dataclass(frozen=True)
class DmaJob:
    src_base: int
    dst_base: int
    inner_len: int
    reps1: int = 1
    reps2: int = 1
    src_stride1: int = 0
    src_stride2: int = 0
    dst_stride1: int = 0
    dst_stride2: int = 0
    completion_line: Optional[int] = None

    def __post_init__(self):
        if self.inner_len < 1 or self.reps1 < 1 or self.reps2 < 1:
            raise ValueError("inner_len, reps1 and reps2 must all be >= 1")

    @property
    def n_segments(self) -> int:
        return self.reps1 * self.reps2

    @property
    def n_bytes(self) -> int:
        return self.n_segments * self.inner_len


def gen_addresses(job: DmaJob) -> List[Tuple[int, int, int]]:
    """Ordered ``(src, dst, len)`` segments of a job. Pure."""
    return [((job.src_base + i2 * job.src_stride2 + i1 * job.src_stride1) & MASK32,
             (job.dst_base + i2 * job.dst_stride2 + i1 * job.dst_stride1) & MASK32,
             job.inner_len)
            for i2 in range(job.reps2) for i1 in range(job.reps1)]


@dataclass
class DmaSchedule:
    job: DmaJob
    start_cycle: int
    period: int = 0
    count: int = 1  # 0 = forever
    launched: int = 0

    def __post_init__(self):
        if self.count != 1 and self.period <= 0:
            raise ValueError("periodic schedules need period > 0")

    def launch_time(self, k: int) -> int:
        return self.start_cycle + k * self.period

    def next_due(self) -> Optional[int]:
        if self.count and self.launched >= self.count:
            return None
        return self.launch_time(self.launched)


@dataclass
class Transfer:
    job: DmaJob
    segments: List[Tuple[int, int, int]]
    launch_cycle: int
    setup_left: int
    seg: int = 0
    offset: int = 0
    checked_seg: int = -1


@dataclass
class DmaRecord:
    launch_cycle: int
    complete_cycle: Optional[int]
    status: str  # 'done' | 'error'


@dataclass
class DmaEngineState:
    queue_depth: int = QUEUE_DEPTH
    setup_cycles: int = SETUP_CYCLES
    error_line: Optional[int] = None
    queue: Deque[Transfer] = field(default_factory=deque)
    schedules: List[DmaSchedule] = field(default_factory=list)
    completed_count: int = 0
    completions_raised: int = 0
    overruns: int = 0
    errors: int = 0
    last_error: Optional[str] = None
    log: List[DmaRecord] = field(default_factory=list)

    @property
    def busy(self) -> bool:
        return bool(self.queue)

    def submit(self, job: DmaJob, now: int) -> bool:
        """Enqueue a job; a full queue drops it and counts an overrun."""
        if len(self.queue) >= self.queue_depth:
            self.overruns += 1
            return False
        self.queue.append(Transfer(job, gen_addresses(job), now, self.setup_cycles))
        return True

    def add_schedule(self, sched: DmaSchedule) -> None:
        self.schedules.append(sched)

    def next_launch(self) -> Optional[int]:
        due = [d for d in (s.next_due() for s in self.schedules) if d is not None]
        return min(due) if due else None


def schedule_tick(engine: DmaEngineState, now: int) -> List[DmaJob]:
    """Launch every schedule whose next launch is due at ``now``."""
    launched = []
    for s in engine.schedules:
        due = s.next_due()
        while due is not None and due <= now:
            s.launched += 1
            if engine.submit(s.job, due):
                launched.append(s.job)
            due = s.next_due()
    return launched


def beat_plan(engine: DmaEngineState) -> Optional[Tuple[int, int, int]]:
    """``(src, dst, nbytes)`` of the beat the head transfer would issue now."""
    if not engine.queue:
        return None
    tr = engine.queue[0]
    if tr.setup_left > 0:
        return None
    src, dst, n = tr.segments[tr.seg]
    s, d = (src + tr.offset) & MASK32, (dst + tr.offset) & MASK32
    chunk = min(4, n - tr.offset, 4 - (s & 3), 4 - (d & 3))
    return s, d, chunk


def _widths(a: int, b: int, n: int) -> List[int]:
    if n in (2, 4) and a % n == 0 and b % n == 0:
        return [n]
    return [1] * n


def dma_cycle(engine: DmaEngineState, bus, clic: Optional["ClicState"], now: int,
              granted: bool = True) -> List[BusTransaction]:
    """Advance the head transfer by one engine cycle.

    ``bus`` needs ``read(addr, width)``, ``write(addr, width, value)`` and
    ``mapped(addr, nbytes)``. When ``granted`` is False the beat stalls.
    """
    if not engine.queue:
        return []
    tr = engine.queue[0]
    if tr.setup_left > 0:
        tr.setup_left -= 1
        return []
    if not granted:
        return []
    if tr.checked_seg != tr.seg:
        src, dst, n = tr.segments[tr.seg]
        if not (bus.mapped(src, n) and bus.mapped(dst, n)):
            _abort(engine, clic, now, f"segment {tr.seg} touches unmapped memory")
            return []
        tr.checked_seg = tr.seg
    s, d, chunk = beat_plan(engine)
    txns: List[BusTransaction] = []
    try:
        off = 0
        for w in _widths(s, d, chunk):
            v = bus.read(s + off, w)
            txns.append(BusTransaction("load", s + off, w, None, now))
            bus.write(d + off, w, v)
            txns.append(BusTransaction("store", d + off, w, v, now))
            off += w
    except BusError as e:
        _abort(engine, clic, now, str(e))
        return txns
    tr.offset += chunk
    if tr.offset >= tr.segments[tr.seg][2]:
        tr.seg += 1
        tr.offset = 0
        if tr.seg == len(tr.segments):
            engine.queue.popleft()
            engine.completed_count += 1
            engine.log.append(DmaRecord(tr.launch_cycle, now + 1, "done"))
            line = tr.job.completion_line
            if line is not None and clic is not None:
                clic.pending[line] = True
                engine.completions_raised += 1
    return txns


def _abort(engine: DmaEngineState, clic, now: int, why: str) -> None:
    tr = engine.queue.popleft()
    engine.errors += 1
    engine.last_error = why
    engine.log.append(DmaRecord(tr.launch_cycle, None, "error"))
    if engine.error_line is not None and clic is not None:
        clic.pending[engine.error_line] = True


def oracle_copy(mem: bytearray, job: DmaJob, base: int = 0) -> None:
    """Reference byte copy by triple loop, over a flat ``bytearray`` at ``base``."""
    for i2 in range(job.reps2):
        for i1 in range(job.reps1):
            for k in range(job.inner_len):
                s = job.src_base + i2 * job.src_stride2 + i1 * job.src_stride1 + k
                d = job.dst_base + i2 * job.dst_stride2 + i1 * job.dst_stride1 + k
                mem[d - base] = mem[s - base]


# Memory-mapped descriptor registers
DMA_SRC = 0x00
DMA_DST = 0x04
DMA_INNER_LEN = 0x08
DMA_REPS1 = 0x0C
DMA_REPS2 = 0x10
DMA_SRC_STRIDE1 = 0x14
DMA_SRC_STRIDE2 = 0x18
DMA_DST_STRIDE1 = 0x1C
DMA_DST_STRIDE2 = 0x20
DMA_COMPLETION = 0x24  # bit31 enable, [5:0] line
DMA_LAUNCH = 0x28  # write: enqueue the descriptor now
DMA_SCHED_START = 0x2C
DMA_SCHED_PERIOD = 0x30
DMA_SCHED_COUNT = 0x34
DMA_SCHED_ARM = 0x38  # write: add a schedule for the descriptor
DMA_STATUS = 0x3C  # [0] busy, [15:8] queue length
DMA_COMPLETED = 0x40
DMA_OVERRUNS = 0x44
DMA_ERRORS = 0x48

_DESC_REGS = (DMA_SRC, DMA_DST, DMA_INNER_LEN, DMA_REPS1, DMA_REPS2, DMA_SRC_STRIDE1,
              DMA_SRC_STRIDE2, DMA_DST_STRIDE1, DMA_DST_STRIDE2, DMA_COMPLETION,
              DMA_SCHED_START, DMA_SCHED_PERIOD, DMA_SCHED_COUNT)


def _s32(v: int) -> int:
    return v - (1 << 32) if v & 0x80000000 else v


class DmaDevice:
    size = 0x1000
    word_only = True

    def __init__(self, engine: DmaEngineState, clock):
        self.engine = engine
        self.clock = clock  # callable returning the current cycle
        self.regs = {r: 0 for r in _DESC_REGS}
        self.regs[DMA_REPS1] = self.regs[DMA_REPS2] = 1

    def descriptor(self) -> DmaJob:
        r = self.regs
        comp = r[DMA_COMPLETION]
        return DmaJob(r[DMA_SRC], r[DMA_DST], r[DMA_INNER_LEN], r[DMA_REPS1], r[DMA_REPS2],
                      _s32(r[DMA_SRC_STRIDE1]), _s32(r[DMA_SRC_STRIDE2]),
                      _s32(r[DMA_DST_STRIDE1]), _s32(r[DMA_DST_STRIDE2]),
                      (comp & 0x3F) if comp >> 31 else None)

    def read(self, offset: int, width: int) -> int:
        if width != 4 or offset & 3:
            raise BusError(offset, "DMA registers are word access only")
        e = self.engine
        if offset in self.regs:
            return self.regs[offset]
        if offset == DMA_STATUS:
            return int(e.busy) | (len(e.queue) << 8)
        if offset == DMA_COMPLETED:
            return e.completed_count & MASK32
        if offset == DMA_OVERRUNS:
            return e.overruns & MASK32
        if offset == DMA_ERRORS:
            return e.errors & MASK32
        if offset in (DMA_LAUNCH, DMA_SCHED_ARM):
            return 0
        raise BusError(offset, "undefined DMA register")

    peek = read

    def write(self, offset: int, width: int, value: int) -> None:
        if width != 4 or offset & 3:
            raise BusError(offset, "DMA registers are word access only")
        try:
            if offset in self.regs:
                self.regs[offset] = value & MASK32
            elif offset == DMA_LAUNCH:
                self.engine.submit(self.descriptor(), self.clock())
            elif offset == DMA_SCHED_ARM:
                r = self.regs
                self.engine.add_schedule(DmaSchedule(self.descriptor(), r[DMA_SCHED_START],
                                                     r[DMA_SCHED_PERIOD], r[DMA_SCHED_COUNT]))
            else:
                raise BusError(offset, "undefined or read-only DMA register")
        except ValueError as e:  # invalid descriptor: counted, not launched
            self.engine.errors += 1
            self.engine.last_error = str(e)

    def check_write(self, offset: int, width: int) -> None:
        if width != 4 or offset & 3 or not (offset in self.regs or offset in (DMA_LAUNCH, DMA_SCHED_ARM)):
            raise BusError(offset, "undefined or read-only DMA register")
