"""Triple-core lockstep: per-step majority voting and microcoded resynchronisation.

Each step the three harts execute against a shared read view of the bus
(identical responses, no side effects). Their outbound transactions, post-step
pc, written-back register, cycle cost and a digest of the full architectural
state are then voted; only the voted transactions are committed to the bus.

Recovery after a single dissent is a fixed sequence: the voted state is written
word by word to a reserved stack region in ECC memory, all cores are reset,
and the words are read back into every core. Its cost is

    resync_cost = n_words * (1 + mem_latency) * 2 + reset_overhead

which is 316 cycles for the default 74-word state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from . import clic, csrs
from .bus import MASK32, BusError, BusTransaction
from .isa import DEFAULT_TIMING, CoreState, StepResult, Timing, execute_step, reset_core

N_CORES = 3
FPU_WORDS = 32
RESET_OVERHEAD = 20
RESYNC_BUDGET = 600
BASE_STATE_WORDS = 1 + 31 + len(csrs.RESYNC_SET) + FPU_WORDS  # 74


@dataclass(frozen=True)
class VoteOutcome:
    value: Any
    status: str  # 'unanimous' | 'corrected' | 'uncorrectable'
    dissenting_core: Optional[int] = None
    vote_site: str = ""

    def __str__(self) -> str:
        if self.status == "corrected":
            return f"corrected({self.dissenting_core})@{self.vote_site}"
        return f"{self.status}@{self.vote_site}"


def _bitwise_majority(a, b, c):
    if all(isinstance(v, int) for v in (a, b, c)):
        return (a & b) | (a & c) | (b & c)
    return None


def vote3(a, b, c, site: str = "") -> VoteOutcome:
    """Majority of three replicas. All-distinct inputs are uncorrectable."""
    if a == b:
        if b == c:
            return VoteOutcome(a, "unanimous", None, site)
        return VoteOutcome(a, "corrected", 2, site)
    if a == c:
        return VoteOutcome(a, "corrected", 1, site)
    if b == c:
        return VoteOutcome(b, "corrected", 0, site)
    return VoteOutcome(_bitwise_majority(a, b, c), "uncorrectable", None, site)


def resync_cost(n_state_words: int, mem_latency: int = 1, reset_overhead: int = RESET_OVERHEAD) -> int:
    """Cycles for save + reset + restore of ``n_state_words`` words."""
    if n_state_words <= 0:
        raise ValueError("n_state_words must be positive")
    return n_state_words * (1 + mem_latency) * 2 + reset_overhead


# ---------------------------------------------------------------------------
# Shared read view for one lockstep step
# ---------------------------------------------------------------------------

class StepBus:
    """Per-step view of the system bus shared by the replicas.

    Reads are served from ``bus.peek`` and cached, so every replica issuing the
    same request sees the same response and nothing changes in the system.
    Stores are only validated; the voted ones are committed afterwards.
    """

    def __init__(self, bus):
        self.bus = bus
        self.cache: Dict[Tuple[int, int], Any] = {}

    def _read(self, addr: int, width: int) -> int:
        key = (addr, width)
        v = self.cache.get(key)
        if v is None:
            try:
                v = self.bus.peek(addr, width)
            except BusError as e:
                v = e
            self.cache[key] = v
        if isinstance(v, BusError):
            raise v
        return v

    def fetch(self, addr: int) -> int:
        return self._read(addr, 4)

    def load(self, addr: int, width: int) -> int:
        return self._read(addr, width)

    def store(self, addr: int, width: int, value: int) -> None:
        self.bus.check_write(addr, width)


def commit(bus, txns: Sequence[BusTransaction]) -> None:
    """Apply voted transactions to the real bus, once each."""
    for t in txns:
        if t.kind == "store":
            bus.write(t.address, t.width, t.data)
        else:
            bus.commit_read(t.address, t.width)


# ---------------------------------------------------------------------------
# Ensemble
# ---------------------------------------------------------------------------

@dataclass
class VotedStep:
    result: StepResult
    outcomes: List[VoteOutcome]
    mismatch: bool = False
    dissenter: Optional[int] = None
    uncorrectable: bool = False
    results: List[StepResult] = field(default_factory=list)

    @property
    def transactions(self) -> List[BusTransaction]:
        return self.result.transactions


@dataclass
class LockstepEnsemble:
    cores: List[CoreState] = field(default_factory=lambda: [CoreState() for _ in range(N_CORES)])
    mode: str = "lockstep"  # 'lockstep' | 'resyncing'
    resync_phase: str = "idle"  # 'idle' | 'save' | 'reset' | 'restore'
    resync_start_cycle: int = 0
    phase_end_cycle: int = 0
    mismatch_count: int = 0
    resync_count: int = 0
    resync_durations: List[int] = field(default_factory=list)
    resync_words: int = 0
    boot_addr: int = 0
    region_base: int = 0
    mem_latency: int = 1
    reset_overhead: int = RESET_OVERHEAD
    fpu_words: int = FPU_WORDS

    @classmethod
    def from_core(cls, core: CoreState, boot_addr: int = 0) -> "LockstepEnsemble":
        return cls([core.copy() for _ in range(N_CORES)], boot_addr=boot_addr)


def _signature(core: CoreState, r: StepResult) -> tuple:
    return (core.pc, r.writeback, r.cycles, r.trap, r.exit_code, r.wfi, r.irq,
            tuple(t.fields() for t in r.transactions), core.fingerprint())


def _vote_results(ens: LockstepEnsemble, results: List[StepResult]) -> VotedStep:
    cores = ens.cores
    sigs = [_signature(c, r) for c, r in zip(cores, results)]
    if sigs[0] == sigs[1] == sigs[2]:
        return VotedStep(results[0], [], results=results)

    outcomes: List[VoteOutcome] = []
    t0, t1, t2 = (r.transactions for r in results)
    if len(t0) == len(t1) == len(t2):
        for i, (a, b, c) in enumerate(zip(t0, t1, t2)):
            for name, fa, fb, fc in zip(("kind", "address", "width", "data"), a.fields(), b.fields(), c.fields()):
                outcomes.append(vote3(fa, fb, fc, f"txn{i}.{name}"))
    else:
        outcomes.append(vote3(*(len(t) for t in (t0, t1, t2)), site="txn.count"))
    names = ("pc", "writeback", "cycles", "trap", "exit", "wfi", "irq")
    for k, name in enumerate(names):
        outcomes.append(vote3(sigs[0][k], sigs[1][k], sigs[2][k], name))
    outcomes.append(vote3(sigs[0][-1], sigs[1][-1], sigs[2][-1], "state"))

    bad = [o for o in outcomes if o.status != "unanimous"]
    dissenters = {o.dissenting_core for o in bad if o.status == "corrected"}
    uncorrectable = any(o.status == "uncorrectable" for o in bad) or len(dissenters) > 1
    # the whole-step signature decides which replica supplies the voted result
    whole = vote3(sigs[0], sigs[1], sigs[2], "step")
    if whole.status == "uncorrectable" or uncorrectable:
        return VotedStep(results[0], bad, True, None, True, results)
    good = 0 if whole.dissenting_core != 0 else 1
    return VotedStep(results[good], bad, True, whole.dissenting_core, False, results)


def lockstep_step(ens: LockstepEnsemble, bus, pending_irq: Optional[clic.InterruptRequest] = None,
                  timing: Timing = DEFAULT_TIMING, now: Optional[int] = None,
                  do_commit: bool = True) -> VotedStep:
    """Step all three replicas on identical inputs, vote, commit the voted effects."""
    if ens.mode != "lockstep":
        raise RuntimeError("ensemble is resynchronising")
    view = StepBus(bus)
    results = [execute_step(c, view, pending_irq, timing, now) for c in ens.cores]
    voted = _vote_results(ens, results)
    if voted.mismatch:
        ens.mismatch_count += 1
    if do_commit and not voted.uncorrectable:
        commit(bus, voted.transactions)
    return voted


def single_step(core: CoreState, bus, pending_irq=None, timing: Timing = DEFAULT_TIMING,
                now: Optional[int] = None, do_commit: bool = True) -> VotedStep:
    """Unreplicated counterpart of :func:`lockstep_step` (same bus discipline)."""
    r = execute_step(core, StepBus(bus), pending_irq, timing, now)
    if do_commit:
        commit(bus, r.transactions)
    return VotedStep(r, [], results=[r])


# ---------------------------------------------------------------------------
# State (de)serialisation for recovery
# ---------------------------------------------------------------------------

def state_words(core: CoreState, fpu_words: int = FPU_WORDS) -> List[int]:
    """pc, x1..x31, the ten resync CSRs, 32 FPU words, then live interrupt contexts.

    Each live context adds a header word (tag << 16 | payload length) and its
    payload: the banked frame words, or the stack address of a spilled frame
    plus its word count.
    """
    c = core.csrs
    words = [core.pc] + core.xregs[1:]
    for n in csrs.RESYNC_SET:
        words.append(core.priv_irq_level if n == csrs.MINTSTATUS else c[n])
    words += core.fpu[:fpu_words]
    for ctx in core.bank.saved_contexts:
        if ctx[0] == "bank":
            words.append((1 << 16) | len(ctx[1]))
            words += ctx[1]
        else:
            words += [(2 << 16) | 2, ctx[1], ctx[2]]
    return [w & MASK32 for w in words]


def load_state_words(core: CoreState, words: Sequence[int], depth: int,
                     fpu_words: int = FPU_WORDS) -> CoreState:
    core.pc = words[0]
    core.xregs[1:] = list(words[1:32])
    k = 32
    for n in csrs.RESYNC_SET:
        if n == csrs.MINTSTATUS:
            core.priv_irq_level = words[k]
        else:
            core.csrs[n] = words[k]
        k += 1
    core.fpu[:fpu_words] = list(words[k:k + fpu_words])
    k += fpu_words
    bank = clic.BankState(depth)
    while k < len(words):
        tag, n = words[k] >> 16, words[k] & 0xFFFF
        payload = list(words[k + 1:k + 1 + n])
        if tag == 1:
            bank.saved_contexts.append(("bank", payload))
            bank.in_use += 1
        else:
            bank.saved_contexts.append(("mem", payload[0], payload[1]))
        k += 1 + n
    core.bank = bank
    return core


def vote_state(ens: LockstepEnsemble) -> Tuple[Optional[List[int]], List[VoteOutcome]]:
    """Word-wise majority of the three serialized states (None if unvotable)."""
    ws = [state_words(c, ens.fpu_words) for c in ens.cores]
    if not (len(ws[0]) == len(ws[1]) == len(ws[2])):
        o = vote3(*(tuple(w) for w in ws), site="state.layout")
        return (list(o.value) if o.status != "uncorrectable" else None), [o]
    outs = [vote3(a, b, c, f"state[{i}]") for i, (a, b, c) in enumerate(zip(*ws))]
    if any(o.status == "uncorrectable" for o in outs):
        return None, outs
    return [o.value for o in outs], outs


class UnrecoverableFault(Exception):
    """Recovery cannot produce a trustworthy state."""


def begin_resync(ens: LockstepEnsemble, bus, now: int, region_base: int,
                 mem_latency: int = 1, reset_overhead: int = RESET_OVERHEAD,
                 region_size: int = 512) -> int:
    """Start recovery: vote the state and save it through ``bus`` to the region.

    Returns the total cycle cost. Raises :class:`UnrecoverableFault` if the
    state cannot be voted or does not fit in the region.
    """
    if ens.mode != "lockstep":
        raise RuntimeError("already resynchronising")
    words, _ = vote_state(ens)
    if words is None:
        raise UnrecoverableFault("no majority over core state")
    if 4 * len(words) > region_size:
        raise UnrecoverableFault("resync region too small")
    for i, w in enumerate(words):
        bus.write(region_base + 4 * i, 4, w)
    ens.mode = "resyncing"
    ens.resync_phase = "save"
    ens.resync_start_cycle = now
    ens.resync_words = len(words)
    ens.phase_end_cycle = now + len(words) * (1 + mem_latency)
    ens.region_base = region_base
    ens.mem_latency, ens.reset_overhead = mem_latency, reset_overhead
    return resync_cost(len(words), mem_latency, reset_overhead)


def advance_resync(ens: LockstepEnsemble, bus, now: int) -> bool:
    """Move to the next recovery phase once its end cycle is reached.

    Returns True when the ensemble is back in lockstep.
    """
    if ens.mode != "resyncing" or now < ens.phase_end_cycle:
        return False
    lat, overhead = ens.mem_latency, ens.reset_overhead
    n = ens.resync_words
    if ens.resync_phase == "save":
        depth = ens.cores[0].bank.depth
        for core in ens.cores:
            reset_core(core, ens.boot_addr)
            core.bank.depth = depth
        ens.resync_phase = "reset"
        ens.phase_end_cycle = now + overhead
        return False
    if ens.resync_phase == "reset":
        words = []
        for i in range(n):
            addr = ens.region_base + 4 * i
            w, status = bus.read_word_status(addr)
            if status == "uncorrectable":
                raise UnrecoverableFault(f"uncorrectable word in resync region at {addr:#x}")
            words.append(w)
        depth = ens.cores[0].bank.depth
        total = resync_cost(n, lat, overhead)
        for core in ens.cores:
            load_state_words(core, words, depth, ens.fpu_words)
            core.csrs[csrs.MCYCLE] = (core.csrs[csrs.MCYCLE] + total) & MASK32
        ens.resync_phase = "restore"
        ens.phase_end_cycle = now + n * (1 + lat)
        return False
    # restore finished
    ens.mode = "lockstep"
    ens.resync_phase = "idle"
    ens.resync_count += 1
    ens.resync_durations.append(now - ens.resync_start_cycle)
    return True


def run_resync(ens: LockstepEnsemble, bus, now: int, region_base: int, **kw) -> int:
    """Drive a whole recovery synchronously; returns the completion cycle."""
    begin_resync(ens, bus, now, region_base, **kw)
    t = ens.phase_end_cycle
    while not advance_resync(ens, bus, t):
        t = ens.phase_end_cycle
    return t
