"""System composition: memory map, crossbar, global cycle loop, loader, traces.

Default memory map::

    0x0000_0000  boot ROM          4 KiB   (jump-to-entry stub)
    0x0001_0000  instruction bank  64 KiB  (SEC-DED)
    0x0002_0000  data bank         64 KiB  (SEC-DED; top 512 B is the resync region)
    0x0003_0000  CLIC registers    4 KiB
    0x0003_1000  timer             4 KiB
    0x0003_2000  DMA registers     4 KiB
    0x0003_3000  platform control  4 KiB
    0x4000_0000  external window   256 MiB (host callback)

Each cycle is processed in a fixed order: fault injection, timer, CLIC
arbitration and core step, DMA, scrubbers. Cycles where nothing can happen are
skipped, which does not change any observable timing.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from . import clic, csrs, dma
from .asm import Program, assemble
from .bus import MASK32, BusError, BusTransaction, EccUncorrectable
from .ecc import MemoryBank
from .isa import CoreState, Timing, decode, disasm
from .tcls import (FPU_WORDS, LockstepEnsemble, UnrecoverableFault, VotedStep,
                   advance_resync, begin_resync, lockstep_step, resync_cost, single_step)

KIB = 1024


@dataclass
class SimConfig:
    rom_base: int = 0x0000_0000
    rom_size: int = 4 * KIB
    instr_base: int = 0x0001_0000
    instr_size: int = 64 * KIB
    data_base: int = 0x0002_0000
    data_size: int = 64 * KIB
    periph_base: int = 0x0003_0000
    ext_base: int = 0x4000_0000
    ext_size: int = 0x1000_0000
    ext_latency: int = 4
    mem_latency: int = 1
    scrub_interval: int = 64
    scrub_enabled: bool = True
    resync_reset_overhead: int = 20
    resync_fpu_words: int = FPU_WORDS
    resync_region_size: int = 512
    clic_lines: int = clic.N_LINES
    irq_bank_depth: int = 1
    irq_fpu_words: int = 0
    alu_cycles: int = 1
    mul_cycles: int = 1
    div_cycles: int = 3
    trap_cycles: int = 1
    dma_queue_depth: int = dma.QUEUE_DEPTH
    dma_setup_cycles: int = dma.SETUP_CYCLES
    lockstep: bool = True
    halt_on_uncorrectable: bool = True
    max_cycles: int = 2_000_000
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                continue
            nonneg = f.name in ("rom_base", "seed", "irq_fpu_words", "resync_fpu_words", "mem_latency",
                                "ext_latency", "dma_setup_cycles", "irq_bank_depth")
            if not isinstance(v, int) or v < 0 or (v == 0 and not nonneg):
                raise ValueError(f"config {f.name} must be a positive integer, got {v!r}")
        for name in ("rom_size", "instr_size", "data_size", "resync_region_size"):
            if getattr(self, name) % 4:
                raise ValueError(f"config {name} must be a multiple of 4")
        if self.resync_region_size > self.data_size:
            raise ValueError("resync region larger than the data bank")

    @property
    def resync_state_words(self) -> int:
        """Words saved by a recovery with no live interrupt context (74 by default)."""
        return 1 + 31 + len(csrs.RESYNC_SET) + self.resync_fpu_words

    @property
    def resync_region_base(self) -> int:
        return self.data_base + self.data_size - self.resync_region_size

    @property
    def stack_top(self) -> int:
        return self.resync_region_base

    def timing(self) -> Timing:
        return Timing(self.alu_cycles, self.mul_cycles, self.div_cycles, self.mem_latency,
                      self.trap_cycles, self.irq_fpu_words)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path: Union[str, Path, None], **overrides) -> SimConfig:
    """Read a JSON (or YAML, by extension) config file; missing keys take defaults."""
    d: dict = {}
    if path is not None:
        text = Path(path).read_text()
        if str(path).endswith((".yaml", ".yml")):
            import yaml
            d = yaml.safe_load(text) or {}
        else:
            d = json.loads(text)
        if not isinstance(d, dict):
            raise ValueError("config file must hold a mapping")
    d.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig.from_dict(d)


# ---------------------------------------------------------------------------
# Memory map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    base: int
    size: int
    device: str


class MemoryMap:
    def __init__(self, regions: Iterable[Region]):
        self.regions = sorted(regions, key=lambda r: r.base)
        prev_end = 0
        for r in self.regions:
            if r.base % 4 or r.size % 4 or r.size <= 0:
                raise ValueError(f"region {r.device} not 4-byte aligned")
            if r.base < prev_end:
                raise ValueError(f"region {r.device} overlaps its predecessor")
            if r.base + r.size > 1 << 32:
                raise ValueError(f"region {r.device} exceeds the address space")
            prev_end = r.base + r.size
        self._bases = [r.base for r in self.regions]

    @classmethod
    def from_config(cls, c: SimConfig) -> "MemoryMap":
        p = c.periph_base
        return cls([
            Region(c.rom_base, c.rom_size, "rom"),
            Region(c.instr_base, c.instr_size, "instr"),
            Region(c.data_base, c.data_size, "data"),
            Region(p, 0x1000, "clic"),
            Region(p + 0x1000, 0x1000, "timer"),
            Region(p + 0x2000, 0x1000, "dma"),
            Region(p + 0x3000, 0x1000, "ctrl"),
            Region(c.ext_base, c.ext_size, "ext"),
        ])

    def region(self, name: str) -> Region:
        return next(r for r in self.regions if r.device == name)


def decode_addr(mem_map: MemoryMap, addr: int) -> Optional[Tuple[str, int]]:
    """``(device, offset)`` for ``addr``, or None (bus error) if unmapped."""
    i = bisect.bisect_right(mem_map._bases, addr & MASK32) - 1
    if i < 0:
        return None
    r = mem_map.regions[i]
    off = addr - r.base
    if off >= r.size:
        return None
    return r.device, off


# ---------------------------------------------------------------------------
# Crossbar
# ---------------------------------------------------------------------------

REQUESTERS = ("core", "dma", "ext")
_PORT = {"rom": "periph", "clic": "periph", "timer": "periph", "dma": "periph", "ctrl": "periph",
         "instr": "instr", "data": "data", "ext": "ext"}


@dataclass
class CrossbarState:
    requesters: Tuple[str, ...] = REQUESTERS
    cursor: Dict[str, int] = field(default_factory=dict)  # per target: preferred requester index
    age: Dict[str, int] = field(default_factory=dict)  # consecutive stalled cycles
    stalls: Dict[str, int] = field(default_factory=dict)
    max_stall: Dict[str, int] = field(default_factory=dict)


def crossbar_arbitrate(xbar: CrossbarState, requests: Dict[str, Set[str]]) -> Set[str]:
    """Grant requesters whose target sets are free this cycle.

    Requesters that waited longer go first; equal waits are ordered round-robin
    from the cursor of the contested target. Losers stall one cycle.
    """
    n = len(xbar.requesters)
    idx = {r: i for i, r in enumerate(xbar.requesters)}

    def key(r):
        targets = requests[r] or {""}
        rr = min((idx[r] - xbar.cursor.get(t, 0)) % n for t in targets)
        return (-xbar.age.get(r, 0), rr)

    busy: Set[str] = set()
    granted: Set[str] = set()
    for r in sorted(requests, key=key):
        if busy.isdisjoint(requests[r]):
            busy |= requests[r]
            granted.add(r)
            xbar.age[r] = 0
            for t in requests[r]:
                xbar.cursor[t] = (idx[r] + 1) % n
        else:
            xbar.age[r] = xbar.age.get(r, 0) + 1
            xbar.stalls[r] = xbar.stalls.get(r, 0) + 1
            xbar.max_stall[r] = max(xbar.max_stall.get(r, 0), xbar.age[r])
    return granted


# ---------------------------------------------------------------------------
# Simple devices
# ---------------------------------------------------------------------------

class RomDevice:
    def __init__(self, size: int):
        self.data = bytearray(size)

    def read(self, offset: int, width: int) -> int:
        return int.from_bytes(self.data[offset:offset + width], "little")

    peek = read

    def write(self, offset: int, width: int, value: int) -> None:
        raise BusError(offset, "boot ROM is read-only")

    def check_write(self, offset: int, width: int) -> None:
        raise BusError(offset, "boot ROM is read-only")


CTRL_EXIT = 0x00
CTRL_SCRATCH = 0x04
CTRL_CYCLE_LO = 0x08
CTRL_CYCLE_HI = 0x0C
CTRL_MISMATCHES = 0x10
CTRL_RESYNCS = 0x14
CTRL_ECC_CORRECTED = 0x18
CTRL_ECC_UNCORRECTABLE = 0x1C


class ControlDevice:
    """Platform control registers: exit, scratch and read-only status counters."""

    def __init__(self, soc: "Soc"):
        self.soc = soc
        self.scratch = 0

    def _reg(self, offset: int) -> int:
        s = self.soc
        c = s.counters()
        regs = {
            CTRL_EXIT: 0,
            CTRL_SCRATCH: self.scratch,
            CTRL_CYCLE_LO: s.cycle & MASK32,
            CTRL_CYCLE_HI: (s.cycle >> 32) & MASK32,
            CTRL_MISMATCHES: c["mismatch_count"],
            CTRL_RESYNCS: c["resync_count"],
            CTRL_ECC_CORRECTED: c["ecc_corrected"] + c["ecc_scrubbed"],
            CTRL_ECC_UNCORRECTABLE: c["ecc_uncorrectable"],
        }
        if offset not in regs:
            raise BusError(offset, "undefined control register")
        return regs[offset] & MASK32

    def read(self, offset: int, width: int) -> int:
        if width != 4:
            raise BusError(offset, "control registers are word access only")
        return self._reg(offset)

    peek = read

    def check_write(self, offset: int, width: int) -> None:
        if width != 4 or offset not in (CTRL_EXIT, CTRL_SCRATCH):
            raise BusError(offset, "undefined or read-only control register")

    def write(self, offset: int, width: int, value: int) -> None:
        self.check_write(offset, width)
        if offset == CTRL_EXIT:
            self.soc.exit_request = value & MASK32
        else:
            self.scratch = value & MASK32


class ExternalPort:
    """Window onto the surrounding system; the host supplies the behaviour."""

    def __init__(self):
        self.read_cb: Optional[Callable[[int, int], int]] = None
        self.write_cb: Optional[Callable[[int, int, int], None]] = None

    def read(self, offset: int, width: int) -> int:
        if self.read_cb is None:
            raise BusError(offset, "no external read callback")
        return self.read_cb(offset, width) & ((1 << (8 * width)) - 1)

    peek = read

    def check_write(self, offset: int, width: int) -> None:
        if self.write_cb is None:
            raise BusError(offset, "no external write callback")

    def write(self, offset: int, width: int, value: int) -> None:
        self.check_write(offset, width)
        self.write_cb(offset, width, value)


# ---------------------------------------------------------------------------
# Run results
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    status: str  # 'exit' | 'timeout' | 'uncorrectable'
    exit_code: Optional[int]
    cycles: int
    instret: int
    counters: dict
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


class LoadError(ValueError):
    pass


class Soc:
    def __init__(self, config: Optional[SimConfig] = None):
        self.config = c = config or SimConfig()
        self.timing = c.timing()
        self.map = MemoryMap.from_config(c)
        self.rom = RomDevice(c.rom_size)
        self.instr = MemoryBank(c.instr_base, c.instr_size, "instr")
        self.data = MemoryBank(c.data_base, c.data_size, "data")
        self.clic = clic.ClicState(c.clic_lines)
        self.timer = clic.TimerState()
        self.dma = dma.DmaEngineState(c.dma_queue_depth, c.dma_setup_cycles)
        self.ctrl = ControlDevice(self)
        self.ext = ExternalPort()
        self.devices = {
            "rom": self.rom, "instr": self.instr, "data": self.data,
            "clic": clic.ClicDevice(self.clic), "timer": clic.TimerDevice(self.timer),
            "dma": dma.DmaDevice(self.dma, lambda: self.cycle), "ctrl": self.ctrl, "ext": self.ext,
        }
        self.crossbar = CrossbarState()
        self.cycle = 0
        core = CoreState(pc=c.rom_base)
        core.bank.depth = c.irq_bank_depth
        if c.lockstep:
            self.ensemble: Optional[LockstepEnsemble] = LockstepEnsemble.from_core(core, c.rom_base)
            self.ensemble.fpu_words = c.resync_fpu_words
            self.cores = self.ensemble.cores
        else:
            self.ensemble = None
            self.cores = [core]
        self.exit_request: Optional[int] = None
        self.entry: Optional[int] = None
        self.trace: Optional[List[str]] = None
        self.fault_queue: list = []
        self.faults_applied = 0
        self.on_step: Optional[Callable[["Soc", VotedStep], None]] = None
        self.on_resync: Optional[Callable[["Soc"], None]] = None
        self.host_queue: List[Tuple[int, int, int, int]] = []  # (cycle, addr, width, value)
        self.vote_uncorrectable = 0
        self.resync_failures = 0
        self.irq_log: List[Tuple[int, int, int, bool]] = []  # (accept cycle, line, level, banked)
        self._timer_cycle = 0

    # -- bus ---------------------------------------------------------------
    def _dev(self, addr: int, width: int):
        hit = decode_addr(self.map, addr)
        if hit is None:
            raise BusError(addr)
        name, off = hit
        if off + width > self.map.region(name).size:
            raise BusError(addr, "access crosses region end")
        return name, self.devices[name], off

    def peek(self, addr: int, width: int) -> int:
        _, dev, off = self._dev(addr, width)
        return dev.peek(off, width)

    def read(self, addr: int, width: int) -> int:
        _, dev, off = self._dev(addr, width)
        return dev.read(off, width)

    def commit_read(self, addr: int, width: int) -> None:
        name, dev, off = self._dev(addr, width)
        if name in ("instr", "data"):
            dev.read(off, width)

    def write(self, addr: int, width: int, value: int) -> None:
        _, dev, off = self._dev(addr, width)
        dev.write(off, width, value)

    def check_write(self, addr: int, width: int) -> None:
        _, dev, off = self._dev(addr, width)
        dev.check_write(off, width)

    def mapped(self, addr: int, nbytes: int) -> bool:
        hit = decode_addr(self.map, addr)
        return hit is not None and hit[1] + nbytes <= self.map.region(hit[0]).size

    def read_word_status(self, addr: int) -> Tuple[int, str]:
        name, dev, off = self._dev(addr, 4)
        if isinstance(dev, MemoryBank):
            w, st = dev.read_word(addr)
            return w, st.kind
        return dev.read(off, 4), "ok"

    def port_of(self, addr: int) -> Optional[str]:
        hit = decode_addr(self.map, addr)
        return _PORT[hit[0]] if hit else None

    def register_external(self, read_cb=None, write_cb=None) -> None:
        self.ext.read_cb, self.ext.write_cb = read_cb, write_cb

    def host_write(self, cycle: int, addr: int, width: int, value: int) -> None:
        """Queue a write arriving on the subordinate port at ``cycle``."""
        self.host_queue.append((cycle, addr, width, value))
        self.host_queue.sort(key=lambda h: h[0])

    # -- loading -----------------------------------------------------------
    def load_program(self, prog: Program) -> int:
        self._place(prog.text_base, prog.text)
        if prog.data:
            self._place(prog.data_base, prog.data)
        return self._boot(prog.entry)

    def _place(self, addr: int, data: bytes) -> None:
        for bank in (self.instr, self.data):
            if bank.base <= addr and addr + len(data) <= bank.base + bank.size_bytes:
                bank.load_bytes(addr, data)
                return
        hit = decode_addr(self.map, addr)
        where = hit[0] if hit else "unmapped space"
        raise LoadError(f"segment {addr:#010x}+{len(data):#x} does not fit a memory bank ({where})")

    def _boot(self, entry: int) -> int:
        stub = assemble(f"""
            li sp, {self.config.stack_top}
            li t0, {entry}
            jr t0
        """, text_base=self.config.rom_base)
        self.rom.data[:len(stub.text)] = stub.text
        self.entry = entry
        return entry

    # -- fault hooks -------------------------------------------------------
    def inject_fault(self, ev) -> None:
        """Apply a fault event (duck-typed, see :class:`sentrysim.campaign.FaultEvent`)."""
        if ev.target == "mem_bit":
            bank = self.instr if ev.bank == "instr" else self.data
            bank.inject_bit_flip(ev.addr, ev.bit)
        else:
            core = self.cores[ev.core if self.ensemble else 0]
            if ev.target == "core_pc":
                core.pc ^= ev.mask
            elif ev.reg != 0:
                core.xregs[ev.reg] ^= ev.mask
        self.faults_applied += 1

    def schedule_faults(self, events: Sequence) -> None:
        self.fault_queue = sorted(events, key=lambda e: e.at_cycle)

    # -- counters ------------------------------------------------------------
    def counters(self) -> dict:
        ens = self.ensemble
        return {
            "mismatch_count": ens.mismatch_count if ens else 0,
            "resync_count": ens.resync_count if ens else 0,
            "resync_durations": list(ens.resync_durations) if ens else [],
            "vote_uncorrectable": self.vote_uncorrectable,
            "resync_failures": self.resync_failures,
            "ecc_corrected": self.instr.corrected_count + self.data.corrected_count,
            "ecc_scrubbed": self.instr.scrubbed_corrections + self.data.scrubbed_corrections,
            "ecc_uncorrectable": (self.instr.detected_uncorrectable_count
                                  + self.data.detected_uncorrectable_count),
            "dma_completed": self.dma.completed_count,
            "dma_completion_irqs": self.dma.completions_raised,
            "dma_overruns": self.dma.overruns,
            "dma_errors": self.dma.errors,
            "crossbar_stalls": dict(sorted(self.crossbar.stalls.items())),
            "faults_applied": self.faults_applied,
        }

    # -- trace -------------------------------------------------------------
    def _trace_step(self, t: int, v: VotedStep) -> None:
        r = v.result
        ev = []
        if r.irq is not None:
            kind = "banked" if self.irq_log and self.irq_log[-1][3] else "spilled"
            line = f"{t} {r.pc:08x} -------- irq line={r.irq.line} level={r.irq.level} {kind}"
        else:
            raw = f"{r.retired.raw:08x}" if r.retired else "--------"
            text = disasm(r.retired) if r.retired else "fetch-fault"
            line = f"{t} {r.pc:08x} {raw} {text}"
        if r.trap is not None:
            ev.append(f"trap cause={r.trap[0]} tval={r.trap[1]:#x}")
        if r.exit_code is not None:
            ev.append(f"exit {r.exit_code}")
        for o in v.outcomes:
            ev.append(f"vote {o}")
        if ev:
            line += " [" + "; ".join(ev) + "]"
        self.trace.append(line)

    # -- main loop -----------------------------------------------------------
    def run(self, max_cycles: Optional[int] = None, trace: bool = False) -> RunResult:
        c = self.config
        limit = max_cycles if max_cycles is not None else c.max_cycles
        if trace and self.trace is None:
            self.trace = []
        ens = self.ensemble
        timing = self.timing
        core_ready = self.cycle  # next cycle the core can issue
        core_req: Optional[Set[str]] = None  # outstanding crossbar request of an issued step
        core_cost = 0
        issued_at = 0
        resync_pending = False
        sleeping = False
        finish: Optional[Tuple[str, int]] = None  # (status, end cycle)
        dma_ready = self.cycle
        detail = ""
        lead = self.cores[0]
        t = self.cycle

        while True:
            if t >= limit:
                self.cycle = limit
                return self._result("timeout", limit, "max_cycles reached")
            self.cycle = t

            while self.fault_queue and self.fault_queue[0].at_cycle <= t:
                self.inject_fault(self.fault_queue.pop(0))

            # timer
            tm = self.timer
            tm.counter += t - self._timer_cycle
            fired = clic.timer_tick(tm)
            self._timer_cycle = t + 1
            if fired is not None:
                self.clic.pending[fired] = True

            requests: Dict[str, Set[str]] = {}
            # core
            if core_req is None and t >= core_ready and finish is None:
                if ens is not None and ens.mode == "resyncing":
                    try:
                        if advance_resync(ens, self, t):
                            core_ready = t
                            if self.trace is not None:
                                self.trace.append(f"{t} -------- -------- resync words={ens.resync_words} "
                                                  f"cycles={ens.resync_durations[-1]}")
                            if self.on_resync:
                                self.on_resync(self)
                        else:
                            core_ready = ens.phase_end_cycle
                    except UnrecoverableFault as e:
                        self.resync_failures += 1
                        return self._result("uncorrectable", t, str(e))
                elif resync_pending:
                    resync_pending = False
                    try:
                        begin_resync(ens, self, t, c.resync_region_base, c.mem_latency,
                                     c.resync_reset_overhead, c.resync_region_size)
                    except (UnrecoverableFault, EccUncorrectable) as e:
                        self.resync_failures += 1
                        return self._result("uncorrectable", t, str(e))
                    core_ready = ens.phase_end_cycle
                elif sleeping:
                    level = max(lead.priv_irq_level, lead.csrs[csrs.MINTTHRESH])
                    if True in self.clic.pending and clic.clic_arbitrate(self.clic, level) is not None:
                        sleeping = False
                if (t >= core_ready and not sleeping and (ens is None or ens.mode == "lockstep")
                        and not resync_pending):
                    try:
                        voted = self._core_step(t)
                    except EccUncorrectable as e:
                        if not e.counted:
                            self.read_word_status(e.addr & ~3)
                        return self._result("uncorrectable", t, str(e))
                    if voted is None:
                        return self._result("uncorrectable", t, "vote without majority")
                    r = voted.result
                    core_cost = r.cycles + self._ext_stall(r.transactions)
                    core_req = {p for p in (self.port_of(x.address) for x in r.transactions) if p}
                    issued_at = t
                    resync_pending = voted.mismatch
                    if r.exit_code is not None or self.exit_request is not None:
                        code = r.exit_code if r.exit_code is not None else self.exit_request
                        finish = ("exit", code)
                    sleeping = r.wfi
            if core_req is not None:
                requests["core"] = core_req

            # DMA
            dma_plan = None
            if t >= dma_ready:
                dma.schedule_tick(self.dma, t)
                if self.dma.queue:
                    dma_plan = dma.beat_plan(self.dma)
                    if dma_plan is not None:
                        s, d, _ = dma_plan
                        requests["dma"] = {p for p in (self.port_of(s), self.port_of(d)) if p}
            host = None
            if self.host_queue and self.host_queue[0][0] <= t:
                host = self.host_queue[0]
                requests["ext"] = {self.port_of(host[1]) or "none"}

            granted = crossbar_arbitrate(self.crossbar, requests) if len(requests) > 1 else set(requests)

            if "core" in granted:
                stall = t - issued_at
                if stall:
                    for core in self.cores:
                        core.csrs[csrs.MCYCLE] = (core.csrs[csrs.MCYCLE] + stall) & MASK32
                core_ready = t + core_cost
                core_req = None
                if finish is not None:
                    self.cycle = core_ready
                    return self._result("exit", core_ready, "", finish[1])
            if t >= dma_ready and self.dma.queue:
                try:
                    txns = dma.dma_cycle(self.dma, self, self.clic, t,
                                         granted="dma" in granted or dma_plan is None)
                except EccUncorrectable as e:
                    if c.halt_on_uncorrectable:
                        return self._result("uncorrectable", t, str(e))
                    txns = []
                if txns and any(self.port_of(x.address) == "ext" for x in txns):
                    dma_ready = t + 1 + c.ext_latency
            if host is not None and "ext" in granted:
                self.host_queue.pop(0)
                try:
                    self.write(host[1], host[2], host[3])
                except BusError:
                    pass

            # scrubbers
            if c.scrub_enabled and t and t % c.scrub_interval == 0:
                for bank in (self.instr, self.data):
                    ev = bank.scrub_step()
                    if ev is not None and ev.status.kind == "uncorrectable" and c.halt_on_uncorrectable:
                        return self._result("uncorrectable", t, f"scrubber found uncorrectable word in {bank.name}")

            # next cycle with something to do
            nxt = limit
            if core_req is not None or self.host_queue and self.host_queue[0][0] <= t + 1:
                nxt = t + 1
            else:
                if not sleeping and finish is None:
                    nxt = min(nxt, max(core_ready, t + 1))
                if self.dma.queue:
                    nxt = min(nxt, max(dma_ready, t + 1))
                else:
                    nl = self.dma.next_launch()
                    if nl is not None:
                        nxt = min(nxt, max(nl, dma_ready, t + 1))
                if tm.enabled and tm.compare >= tm.counter:
                    nxt = min(nxt, t + 1 + (tm.compare - tm.counter))
                if c.scrub_enabled:
                    nxt = min(nxt, (t // c.scrub_interval + 1) * c.scrub_interval)
                if self.fault_queue:
                    nxt = min(nxt, max(self.fault_queue[0].at_cycle, t + 1))
                if self.host_queue:
                    nxt = min(nxt, max(self.host_queue[0][0], t + 1))
            t = max(nxt, t + 1)

    def _core_step(self, t: int) -> Optional[VotedStep]:
        ens = self.ensemble
        lead = self.cores[0]
        irq = None
        if True in self.clic.pending:
            if ens is not None:
                mie = _majority([x.csrs[csrs.MSTATUS] & csrs.MSTATUS_MIE for x in ens.cores])
                level = _majority([max(x.priv_irq_level, x.csrs[csrs.MINTTHRESH]) for x in ens.cores])
            else:
                mie = lead.csrs[csrs.MSTATUS] & csrs.MSTATUS_MIE
                level = max(lead.priv_irq_level, lead.csrs[csrs.MINTTHRESH])
            if mie:
                irq = clic.clic_arbitrate(self.clic, level)
        if ens is not None:
            voted = lockstep_step(ens, self, irq, self.timing, now=t)
            if voted.uncorrectable:
                self.vote_uncorrectable += 1
                if self.trace is not None:
                    self._trace_step(t, voted)
                return None
        else:
            voted = single_step(lead, self, irq, self.timing, now=t)
        r = voted.result
        if r.irq is not None:
            self.clic.pending[r.irq.line] = False
            banked = bool(self.cores[0].bank.saved_contexts) and self.cores[0].bank.saved_contexts[-1][0] == "bank"
            self.irq_log.append((t, r.irq.line, r.irq.level, banked and r.trap is None))
        if self.trace is not None:
            self._trace_step(t, voted)
        if self.on_step is not None:
            self.on_step(self, voted)
        return voted

    def _ext_stall(self, txns: List[BusTransaction]) -> int:
        if not txns:
            return 0
        c = self.config
        return sum(c.ext_latency for x in txns if c.ext_base <= x.address < c.ext_base + c.ext_size)

    def _result(self, status: str, cycles: int, detail: str = "", code: Optional[int] = None) -> RunResult:
        self.cycle = cycles
        if status == "exit" and code is None:
            code = self.exit_request
        return RunResult(status, code, cycles, self.cores[0].csrs[csrs.MINSTRET], self.counters(), detail)

    def write_trace(self, path: Union[str, Path]) -> None:
        Path(path).write_text("\n".join(self.trace or []) + "\n")

    def memory_image(self) -> Dict[str, bytes]:
        """Decoded contents of both banks (read out through the ECC decoder)."""
        out = {}
        for bank in (self.instr, self.data):
            words, _ = bank.image()
            out[bank.name] = words.astype("<u4").tobytes()
        return out


def _majority(vals: List[int]) -> int:
    a, b, c = vals
    return a if a == b or a == c else b


def run(soc: Soc, config: Optional[SimConfig] = None, **kw) -> RunResult:
    """Run a loaded SoC to exit, timeout or an uncorrectable fault."""
    if config is not None and config is not soc.config:
        raise ValueError("run() config must match the SoC it was built with")
    return soc.run(**kw)


# ---------------------------------------------------------------------------
# Image loading
# ---------------------------------------------------------------------------

EM_RISCV = 243


def load_image(soc: Soc, path: Union[str, Path, Program], fmt: Optional[str] = None) -> int:
    """Load a flat binary, an ELF32 little-endian RISC-V file, or an assembled Program.

    Flat binaries go to the instruction-bank base. Returns the entry point and
    installs the boot stub that jumps there.
    """
    if isinstance(path, Program):
        return soc.load_program(path)
    raw = Path(path).read_bytes()
    if fmt is None:
        fmt = "elf" if raw[:4] == b"\x7fELF" else "flat"
    if fmt == "flat":
        if len(raw) > soc.config.instr_size:
            raise LoadError("flat image larger than the instruction bank")
        soc._place(soc.config.instr_base, raw)
        return soc._boot(soc.config.instr_base)
    if fmt != "elf":
        raise LoadError(f"unknown image format {fmt!r}")
    from io import BytesIO

    from elftools.common.exceptions import ELFError
    from elftools.elf.elffile import ELFFile
    try:
        elf = ELFFile(BytesIO(raw))
        if elf.elfclass != 32 or not elf.little_endian:
            raise LoadError("ELF must be 32-bit little-endian")
        if elf["e_machine"] not in ("EM_RISCV", EM_RISCV):
            raise LoadError(f"ELF machine {elf['e_machine']} is not RISC-V")
        segs = [s for s in elf.iter_segments() if s["p_type"] == "PT_LOAD" and s["p_memsz"] > 0]
        for seg in segs:
            data = seg.data() + bytes(seg["p_memsz"] - seg["p_filesz"])
            soc._place(seg["p_paddr"], data)
        entry = elf["e_entry"]
    except ELFError as e:
        raise LoadError(f"malformed ELF: {e}") from None
    except (KeyError, ValueError, IndexError) as e:
        if isinstance(e, LoadError):
            raise
        raise LoadError(f"malformed ELF: {e}") from None
    return soc._boot(entry)
