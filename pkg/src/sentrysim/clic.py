"""CLIC-style interrupt controller, fastirq register banking and the platform timer.

Latency constants here are calibration targets for the timing model: a banked
entry costs ``ENTRY_CYCLES`` (6) and a spilled entry additionally moves the
16-word context frame through the memory system, one word per ``1 + mem_latency``
cycles. With the default ``mem_latency = 1`` a spilled entry or exit costs 38
cycles and a spilled round trip 76, under the 110-cycle context-switch target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Tuple

from . import csrs
from .bus import MASK32, BusError, BusTransaction

if TYPE_CHECKING:
    from .bus import MemoryPort
    from .isa import CoreState

ENTRY_CYCLES = 6
EXIT_CYCLES = 6
N_LINES = 64
MAX_LEVEL = 255

# Auto-saved frame: pc, status word, then the caller-saved integer subset
# ra, t0-t2, a0-a5, t3-t6. Handlers must preserve a6/a7 and callee-saved regs.
FRAME_REGS = (1, 5, 6, 7, 10, 11, 12, 13, 14, 15, 28, 29, 30, 31)
FRAME_WORDS = 2 + len(FRAME_REGS)
assert FRAME_WORDS == 16


@dataclass(frozen=True)
class InterruptRequest:
    line: int
    level: int
    vector_addr: Optional[int]  # table slot to read; None for non-vectored lines


@dataclass
class ClicState:
    n_lines: int = N_LINES
    threshold: int = 0
    vector_table_base: int = 0
    pending: List[bool] = field(default_factory=list)
    enabled: List[bool] = field(default_factory=list)
    level: List[int] = field(default_factory=list)
    vectored: List[bool] = field(default_factory=list)

    def __post_init__(self):
        n = self.n_lines
        self.pending = self.pending or [False] * n
        self.enabled = self.enabled or [False] * n
        self.level = self.level or [0] * n
        self.vectored = self.vectored or [True] * n

    def set_pending(self, line: int, value: bool = True) -> None:
        self.pending[line] = value

    def set_enable(self, line: int, value: bool = True) -> None:
        self.enabled[line] = value

    def set_level(self, line: int, level: int) -> None:
        if not 0 <= level <= MAX_LEVEL:
            raise ValueError(f"level {level} out of range")
        self.level[line] = level

    def set_threshold(self, threshold: int) -> None:
        if not 0 <= threshold <= MAX_LEVEL:
            raise ValueError(f"threshold {threshold} out of range")
        self.threshold = threshold

    def any_pending(self) -> bool:
        return any(p and e for p, e in zip(self.pending, self.enabled))


def clic_arbitrate(clic: ClicState, running_level: int) -> Optional[InterruptRequest]:
    """Pick the pending, enabled line with the highest level above the floor.

    The floor is ``max(threshold, running_level)`` and must be strictly
    exceeded. Equal levels resolve to the lowest line id.
    """
    floor = max(clic.threshold, running_level)
    best = -1
    best_level = floor
    for i in range(clic.n_lines):
        if clic.pending[i] and clic.enabled[i] and clic.level[i] > best_level:
            best, best_level = i, clic.level[i]
    if best < 0:
        return None
    vec = (clic.vector_table_base + 4 * best) & MASK32 if clic.vectored[best] else None
    return InterruptRequest(best, best_level, vec)


@dataclass
class BankState:
    """fastirq shadow register bank plus the stack of live interrupt contexts.

    ``saved_contexts`` holds one entry per nesting level, innermost last:
    ``('bank', frame_words)`` for banked entries or ``('mem', addr, n_words)``
    for frames spilled to the stack.
    """

    depth: int = 1
    in_use: int = 0
    saved_contexts: list = field(default_factory=list)

    def copy(self) -> "BankState":
        ctx = [(c[0], list(c[1])) if c[0] == "bank" else c for c in self.saved_contexts]
        return BankState(self.depth, self.in_use, ctx)

    def banked_words(self) -> List[int]:
        return [w for c in self.saved_contexts if c[0] == "bank" for w in c[1]]

    def key(self) -> tuple:
        return (self.in_use, tuple((c[0], tuple(c[1])) if c[0] == "bank" else c
                                   for c in self.saved_contexts))


@dataclass
class EntryDescriptor:
    cycles: int
    banked: bool
    handler_pc: int
    transactions: List[BusTransaction]
    trap: Optional[Tuple[int, int]] = None


def interrupt_cost(banked: bool, mem_latency: int = 1, extra_words: int = 0) -> int:
    """Cycle cost of one interrupt entry or exit under the timing model."""
    if banked:
        return ENTRY_CYCLES
    return ENTRY_CYCLES + (FRAME_WORDS + extra_words) * (1 + mem_latency)


def _status_word(core: "CoreState") -> int:
    return (core.csrs[csrs.MSTATUS] & 0xFFFF) | (core.priv_irq_level << 16)


def take_interrupt(core: "CoreState", bank: BankState, irq: InterruptRequest,
                   mem: "MemoryPort", *, mem_latency: int = 1, extra_words: int = 0,
                   now: int = 0) -> EntryDescriptor:
    """Enter the handler for ``irq``.

    Reads the vector table slot, saves the context frame (to the shadow bank
    if one is free, otherwise to ``sp - 4*n``), and switches the running
    level. A failing vector read raises an instruction access fault instead.
    """
    txns: List[BusTransaction] = []
    if irq.vector_addr is not None:
        txns.append(BusTransaction("load", irq.vector_addr, 4, None, now))
        try:
            handler = mem.load(irq.vector_addr, 4) & ~3 & MASK32
        except BusError:
            return EntryDescriptor(ENTRY_CYCLES, False, core.pc, txns, (1, irq.vector_addr))
    else:
        handler = core.csrs[csrs.MTVEC] & ~3 & MASK32

    x = core.xregs
    frame = [core.pc, _status_word(core)] + [x[r] for r in FRAME_REGS] + list(core.fpu[:extra_words])
    if bank.in_use < bank.depth:
        bank.saved_contexts.append(("bank", frame))
        bank.in_use += 1
        banked = True
    else:
        addr = (x[2] - 4 * len(frame)) & MASK32
        for i, w in enumerate(frame):
            txns.append(BusTransaction("store", (addr + 4 * i) & MASK32, 4, w, now))
            try:
                mem.store((addr + 4 * i) & MASK32, 4, w)
            except BusError:
                return EntryDescriptor(interrupt_cost(False, mem_latency, extra_words), False,
                                       core.pc, txns, (7, (addr + 4 * i) & MASK32))
        x[2] = addr
        bank.saved_contexts.append(("mem", addr, len(frame)))
        banked = False

    st = core.csrs[csrs.MSTATUS]
    mie = (st >> 3) & 1
    core.csrs[csrs.MSTATUS] = (st & ~(csrs.MSTATUS_MIE | csrs.MSTATUS_MPIE)) | (mie << 7)
    core.csrs[csrs.MEPC] = core.pc
    core.csrs[csrs.MCAUSE] = 0x80000000 | (mie << 27) | (core.priv_irq_level << 16) | irq.line
    core.priv_irq_level = irq.level
    core.pc = handler
    return EntryDescriptor(interrupt_cost(banked, mem_latency, extra_words), banked, handler, txns)


def complete_interrupt(core: "CoreState", bank: BankState, mem: "MemoryPort", *,
                       mem_latency: int = 1, now: int = 0
                       ) -> Tuple[int, List[BusTransaction], Optional[Tuple[int, int]]]:
    """Return from the innermost interrupt context (LIFO).

    Restores pc, mstatus, the running level and the frame registers exactly as
    they were when the context was pre-empted. Returns ``(cycles, txns, trap)``.
    """
    ctx = bank.saved_contexts.pop()
    txns: List[BusTransaction] = []
    if ctx[0] == "bank":
        frame = ctx[1]
        bank.in_use -= 1
        cycles = EXIT_CYCLES
    else:
        _, addr, n = ctx
        frame = []
        for i in range(n):
            a = (addr + 4 * i) & MASK32
            txns.append(BusTransaction("load", a, 4, None, now))
            try:
                frame.append(mem.load(a, 4))
            except BusError:
                bank.saved_contexts.append(ctx)
                return interrupt_cost(False, mem_latency, n - FRAME_WORDS), txns, (5, a)
        core.xregs[2] = (addr + 4 * n) & MASK32
        cycles = interrupt_cost(False, mem_latency, n - FRAME_WORDS)
    core.pc = frame[0]
    core.csrs[csrs.MSTATUS] = (frame[1] & 0xFFFF) | csrs.MSTATUS_MPP
    core.priv_irq_level = (frame[1] >> 16) & 0xFF
    for r, w in zip(FRAME_REGS, frame[2:2 + len(FRAME_REGS)]):
        core.xregs[r] = w
    extra = frame[2 + len(FRAME_REGS):]
    core.fpu[:len(extra)] = extra
    return cycles, txns, None


# ---------------------------------------------------------------------------
# Memory-mapped register blocks
# ---------------------------------------------------------------------------

CLIC_THRESHOLD = 0x000
CLIC_VECTOR_BASE = 0x004
CLIC_INFO = 0x008
CLIC_LINES = 0x100  # one word per line: [0] pending, [8] enable, [16] vectored, [31:24] level


def _merge(old: int, offset: int, width: int, value: int) -> Tuple[int, int]:
    """Merge a sub-word write into the containing register word."""
    shift = (offset & 3) * 8
    mask = ((1 << (8 * width)) - 1) << shift
    return offset & ~3, (old & ~mask) | ((value << shift) & mask)


class ClicDevice:
    size = 0x1000

    def __init__(self, state: ClicState):
        self.state = state

    def _read_reg(self, reg: int) -> int:
        s = self.state
        if reg == CLIC_THRESHOLD:
            return s.threshold
        if reg == CLIC_VECTOR_BASE:
            return s.vector_table_base
        if reg == CLIC_INFO:
            return s.n_lines
        line = (reg - CLIC_LINES) >> 2
        if CLIC_LINES <= reg and line < s.n_lines:
            return (int(s.pending[line]) | int(s.enabled[line]) << 8
                    | int(s.vectored[line]) << 16 | s.level[line] << 24)
        raise BusError(reg, "undefined CLIC register")

    def read(self, offset: int, width: int) -> int:
        word = self._read_reg(offset & ~3)
        return (word >> ((offset & 3) * 8)) & ((1 << (8 * width)) - 1)

    peek = read

    def check_write(self, offset: int, width: int) -> None:
        self._read_reg(offset & ~3)
        if offset & ~3 == CLIC_INFO:
            raise BusError(offset, "read-only CLIC register")

    def write(self, offset: int, width: int, value: int) -> None:
        self.check_write(offset, width)
        reg, word = _merge(self._read_reg(offset & ~3), offset, width, value)
        s = self.state
        if reg == CLIC_THRESHOLD:
            s.set_threshold(word & 0xFF)
        elif reg == CLIC_VECTOR_BASE:
            s.vector_table_base = word & ~3 & MASK32
        elif reg == CLIC_INFO:
            raise BusError(offset, "read-only CLIC register")
        else:
            line = (reg - CLIC_LINES) >> 2
            s.pending[line] = bool(word & 1)
            s.enabled[line] = bool(word & 0x100)
            s.vectored[line] = bool(word & 0x10000)
            s.level[line] = (word >> 24) & 0xFF


@dataclass
class TimerState:
    counter: int = 0
    compare: int = (1 << 64) - 1
    line: int = 7
    periodic: bool = False
    period: int = 0
    enabled: bool = False


def timer_tick(t: TimerState) -> Optional[int]:
    """Evaluate the compare at the current count, then advance one cycle.

    Returns the interrupt line to pend, or None. Periodic timers re-arm with
    ``compare += period``.
    """
    fired = None
    if t.enabled and t.counter == t.compare:
        fired = t.line
        if t.periodic and t.period > 0:
            t.compare += t.period
    t.counter += 1
    return fired


def set_compare(t: TimerState, compare: int) -> None:
    t.compare = compare & ((1 << 64) - 1)


TIMER_COUNTER_LO = 0x00
TIMER_COUNTER_HI = 0x04
TIMER_COMPARE_LO = 0x08
TIMER_COMPARE_HI = 0x0C
TIMER_CTRL = 0x10  # bit0 enable, bit1 periodic
TIMER_PERIOD = 0x14
TIMER_LINE = 0x18


class TimerDevice:
    size = 0x1000

    def __init__(self, state: TimerState):
        self.state = state

    def _read_reg(self, reg: int) -> int:
        t = self.state
        regs = {
            TIMER_COUNTER_LO: t.counter & MASK32,
            TIMER_COUNTER_HI: (t.counter >> 32) & MASK32,
            TIMER_COMPARE_LO: t.compare & MASK32,
            TIMER_COMPARE_HI: (t.compare >> 32) & MASK32,
            TIMER_CTRL: int(t.enabled) | int(t.periodic) << 1,
            TIMER_PERIOD: t.period & MASK32,
            TIMER_LINE: t.line,
        }
        if reg not in regs:
            raise BusError(reg, "undefined timer register")
        return regs[reg]

    def read(self, offset: int, width: int) -> int:
        word = self._read_reg(offset & ~3)
        return (word >> ((offset & 3) * 8)) & ((1 << (8 * width)) - 1)

    peek = read

    def check_write(self, offset: int, width: int) -> None:
        self._read_reg(offset & ~3)

    def write(self, offset: int, width: int, value: int) -> None:
        reg, word = _merge(self._read_reg(offset & ~3), offset, width, value)
        t = self.state
        if reg == TIMER_COUNTER_LO:
            t.counter = (t.counter & ~MASK32) | word
        elif reg == TIMER_COUNTER_HI:
            t.counter = (t.counter & MASK32) | word << 32
        elif reg == TIMER_COMPARE_LO:
            set_compare(t, (t.compare & ~MASK32) | word)
        elif reg == TIMER_COMPARE_HI:
            set_compare(t, (t.compare & MASK32) | word << 32)
        elif reg == TIMER_CTRL:
            t.enabled, t.periodic = bool(word & 1), bool(word & 2)
        elif reg == TIMER_PERIOD:
            t.period = word
        elif reg == TIMER_LINE:
            t.line = word % N_LINES
