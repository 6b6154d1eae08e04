"""RV32IM + Zicsr hart model (machine mode only).

Timing model, in cycles per step: 1 for ALU/branch/jump/CSR/mul, 3 for
div/rem, plus ``1 + mem_latency`` instead of 1 for loads and stores (so a load
costs 2 with the default latency). Exceptions cost 1. Interrupt entry and the
interrupt-returning ``mret`` are costed by :mod:`sentrysim.clic`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Tuple

from . import clic, csrs
from .bus import MASK32, BusError, BusTransaction, EccUncorrectable, MemoryPort

EXIT_MAGIC = 93  # a7 value that turns ecall into "exit with a0"

# trap causes
CAUSE_MISALIGNED_FETCH = 0
CAUSE_FETCH_ACCESS = 1
CAUSE_ILLEGAL = 2
CAUSE_BREAKPOINT = 3
CAUSE_MISALIGNED_LOAD = 4
CAUSE_LOAD_ACCESS = 5
CAUSE_MISALIGNED_STORE = 6
CAUSE_STORE_ACCESS = 7
CAUSE_ECALL = 11

ABI = ("zero ra sp gp tp t0 t1 t2 s0 s1 a0 a1 a2 a3 a4 a5 a6 a7 "
       "s2 s3 s4 s5 s6 s7 s8 s9 s10 s11 t3 t4 t5 t6").split()


@dataclass(frozen=True)
class Timing:
    alu: int = 1
    mul: int = 1
    div: int = 3
    mem_latency: int = 1
    trap: int = 1
    irq_extra_words: int = 0  # FPU context words added to spilled frames


DEFAULT_TIMING = Timing()


def _fresh_csrs() -> Dict[int, int]:
    return dict(csrs.RESET_VALUES)


@dataclass
class CoreState:
    pc: int = 0
    xregs: List[int] = field(default_factory=lambda: [0] * 32)
    csrs: Dict[int, int] = field(default_factory=_fresh_csrs)
    priv_irq_level: int = 0
    halted: bool = False
    exit_code: Optional[int] = None
    bank: clic.BankState = field(default_factory=clic.BankState)
    fpu: List[int] = field(default_factory=lambda: [0] * 32)  # save/restore placeholders only

    def copy(self) -> "CoreState":
        return CoreState(self.pc, list(self.xregs), dict(self.csrs), self.priv_irq_level,
                         self.halted, self.exit_code, self.bank.copy(), list(self.fpu))

    def fingerprint(self) -> int:
        """Compact digest of the full architectural state, used for voting."""
        return hash((self.pc, tuple(self.xregs), tuple(self.csrs.values()),
                     self.priv_irq_level, self.halted, self.bank.key(), tuple(self.fpu)))


class Instruction(NamedTuple):
    op: str  # mnemonic; 'illegal' for undefined encodings
    rd: int
    rs1: int
    rs2: int
    imm: int  # sign-extended (csr number for Zicsr ops)
    raw: int


@dataclass
class StepResult:
    retired: Optional[Instruction]
    transactions: List[BusTransaction]
    cycles: int
    trap: Optional[Tuple[int, int]] = None
    irq: Optional[clic.InterruptRequest] = None
    writeback: Optional[Tuple[int, int]] = None
    exit_code: Optional[int] = None
    wfi: bool = False
    pc: int = 0  # pc the step started at


def _sext(v: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (v & (sign - 1)) - (v & sign)


def _illegal(w: int) -> Instruction:
    return Instruction("illegal", 0, 0, 0, 0, w)


_BRANCH = {0: "beq", 1: "bne", 4: "blt", 5: "bge", 6: "bltu", 7: "bgeu"}
_LOAD = {0: "lb", 1: "lh", 2: "lw", 4: "lbu", 5: "lhu"}
_STORE = {0: "sb", 1: "sh", 2: "sw"}
_OPIMM = {0: "addi", 2: "slti", 3: "sltiu", 4: "xori", 6: "ori", 7: "andi"}
_OP = {
    (0, 0): "add", (0x20, 0): "sub", (0, 1): "sll", (0, 2): "slt", (0, 3): "sltu",
    (0, 4): "xor", (0, 5): "srl", (0x20, 5): "sra", (0, 6): "or", (0, 7): "and",
    (1, 0): "mul", (1, 1): "mulh", (1, 2): "mulhsu", (1, 3): "mulhu",
    (1, 4): "div", (1, 5): "divu", (1, 6): "rem", (1, 7): "remu",
}
_CSR = {1: "csrrw", 2: "csrrs", 3: "csrrc", 5: "csrrwi", 6: "csrrsi", 7: "csrrci"}
_SYSTEM = {0x00000073: "ecall", 0x00100073: "ebreak", 0x30200073: "mret", 0x10500073: "wfi"}


@lru_cache(maxsize=1 << 16)
def decode(word: int) -> Instruction:
    """Decode a 32-bit word. Total: undefined encodings give op 'illegal'."""
    w = word & MASK32
    opc = w & 0x7F
    rd = (w >> 7) & 0x1F
    f3 = (w >> 12) & 7
    rs1 = (w >> 15) & 0x1F
    rs2 = (w >> 20) & 0x1F
    f7 = w >> 25
    imm_i = _sext(w >> 20, 12)
    if opc == 0x37:
        return Instruction("lui", rd, 0, 0, _sext(w & 0xFFFFF000, 32), w)
    if opc == 0x17:
        return Instruction("auipc", rd, 0, 0, _sext(w & 0xFFFFF000, 32), w)
    if opc == 0x6F:
        imm = ((w >> 31) << 20) | (((w >> 12) & 0xFF) << 12) | (((w >> 20) & 1) << 11) | (((w >> 21) & 0x3FF) << 1)
        return Instruction("jal", rd, 0, 0, _sext(imm, 21), w)
    if opc == 0x67:
        return Instruction("jalr", rd, rs1, 0, imm_i, w) if f3 == 0 else _illegal(w)
    if opc == 0x63:
        if f3 not in _BRANCH:
            return _illegal(w)
        imm = ((w >> 31) << 12) | (((w >> 7) & 1) << 11) | (((w >> 25) & 0x3F) << 5) | (((w >> 8) & 0xF) << 1)
        return Instruction(_BRANCH[f3], 0, rs1, rs2, _sext(imm, 13), w)
    if opc == 0x03:
        return Instruction(_LOAD[f3], rd, rs1, 0, imm_i, w) if f3 in _LOAD else _illegal(w)
    if opc == 0x23:
        if f3 not in _STORE:
            return _illegal(w)
        imm = (f7 << 5) | rd
        return Instruction(_STORE[f3], 0, rs1, rs2, _sext(imm, 12), w)
    if opc == 0x13:
        if f3 == 1:
            return Instruction("slli", rd, rs1, 0, rs2, w) if f7 == 0 else _illegal(w)
        if f3 == 5:
            if f7 == 0:
                return Instruction("srli", rd, rs1, 0, rs2, w)
            if f7 == 0x20:
                return Instruction("srai", rd, rs1, 0, rs2, w)
            return _illegal(w)
        return Instruction(_OPIMM[f3], rd, rs1, 0, imm_i, w)
    if opc == 0x33:
        op = _OP.get((f7, f3))
        return Instruction(op, rd, rs1, rs2, 0, w) if op else _illegal(w)
    if opc == 0x0F:
        return Instruction("fence", 0, 0, 0, 0, w) if f3 == 0 else _illegal(w)
    if opc == 0x73:
        if f3 == 0:
            op = _SYSTEM.get(w)
            return Instruction(op, 0, 0, 0, 0, w) if op else _illegal(w)
        if f3 in _CSR:
            return Instruction(_CSR[f3], rd, rs1, 0, w >> 20, w)
    return _illegal(w)


def disasm(ins: Instruction) -> str:
    """Human-readable rendering (ABI register names, decimal immediates)."""
    op, rd, rs1, rs2, imm = ins.op, ABI[ins.rd], ABI[ins.rs1], ABI[ins.rs2], ins.imm
    if op == "illegal":
        return f"illegal {ins.raw:#010x}"
    if op in ("lui", "auipc"):
        return f"{op} {rd}, {(imm >> 12) & 0xFFFFF:#x}"
    if op == "jal":
        return f"jal {rd}, {imm}"
    if op == "jalr" or op in _LOAD.values():
        return f"{op} {rd}, {imm}({rs1})"
    if op in _STORE.values():
        return f"{op} {rs2}, {imm}({rs1})"
    if op in _BRANCH.values():
        return f"{op} {rs1}, {rs2}, {imm}"
    if op in _OPIMM.values() or op in ("slli", "srli", "srai"):
        return f"{op} {rd}, {rs1}, {imm}"
    if op.startswith("csr"):
        name = csrs.NAMES.get(imm, f"{imm:#x}")
        src = str(ins.rs1) if op.endswith("i") else rs1
        return f"{op} {rd}, {name}, {src}"
    if op in ("ecall", "ebreak", "mret", "wfi", "fence"):
        return op
    return f"{op} {rd}, {rs1}, {rs2}"


def reset_core(state: CoreState, boot_addr: int) -> CoreState:
    """Return ``state`` to power-on values, in place. Nothing survives."""
    fresh = CoreState(pc=boot_addr & MASK32)
    state.__dict__.update(fresh.__dict__)
    return state


def raise_trap(state: CoreState, cause: int, tval: int) -> CoreState:
    """Synchronous exception entry (or program exit for the magic ecall)."""
    if cause == CAUSE_ECALL and state.xregs[17] == EXIT_MAGIC:
        state.halted = True
        state.exit_code = state.xregs[10]
        return state
    c = state.csrs
    st = c[csrs.MSTATUS]
    c[csrs.MSTATUS] = (st & ~(csrs.MSTATUS_MIE | csrs.MSTATUS_MPIE)) | ((st & csrs.MSTATUS_MIE) << 4)
    c[csrs.MEPC] = state.pc
    c[csrs.MCAUSE] = cause & MASK32
    c[csrs.MTVAL] = tval & MASK32
    state.pc = c[csrs.MTVEC] & ~3 & MASK32
    return state


class _Trap(Exception):
    def __init__(self, cause: int, tval: int):
        self.cause, self.tval = cause, tval


def _csr_read(state: CoreState, n: int) -> int:
    if n == csrs.MINTSTATUS:
        return state.priv_irq_level << 24
    if n == csrs.MISA:
        return csrs.MISA_RV32IM
    if n == csrs.MHARTID:
        return 0
    if n == csrs.CYCLE:
        return state.csrs[csrs.MCYCLE]
    if n == csrs.INSTRET:
        return state.csrs[csrs.MINSTRET]
    return state.csrs[n]


def _csr_write(state: CoreState, n: int, v: int) -> None:
    v &= MASK32
    if n == csrs.MSTATUS:
        v = (v & csrs.MSTATUS_WMASK) | csrs.MSTATUS_MPP
    elif n == csrs.MEPC:
        v &= ~3
    elif n == csrs.MINTTHRESH:
        v &= 0xFF
    state.csrs[n] = v


def _alu(op: str, a: int, b: int) -> int:
    if op == "add":
        return (a + b) & MASK32
    if op == "sub":
        return (a - b) & MASK32
    if op == "xor":
        return a ^ b
    if op == "or":
        return a | b
    if op == "and":
        return a & b
    if op == "sll":
        return (a << (b & 31)) & MASK32
    if op == "srl":
        return a >> (b & 31)
    if op == "sra":
        return (_sext(a, 32) >> (b & 31)) & MASK32
    if op == "slt":
        return int(_sext(a, 32) < _sext(b, 32))
    if op == "sltu":
        return int(a < b)
    sa, sb = _sext(a, 32), _sext(b, 32)
    if op == "mul":
        return (a * b) & MASK32
    if op == "mulh":
        return ((sa * sb) >> 32) & MASK32
    if op == "mulhsu":
        return ((sa * b) >> 32) & MASK32
    if op == "mulhu":
        return (a * b) >> 32
    if op == "div":
        if b == 0:
            return MASK32
        if sa == -(1 << 31) and sb == -1:
            return a
        q = abs(sa) // abs(sb)
        return (-q if (sa < 0) != (sb < 0) else q) & MASK32
    if op == "divu":
        return MASK32 if b == 0 else a // b
    if op == "rem":
        if b == 0:
            return a
        if sa == -(1 << 31) and sb == -1:
            return 0
        r = abs(sa) % abs(sb)
        return (-r if sa < 0 else r) & MASK32
    if op == "remu":
        return a if b == 0 else a % b
    raise AssertionError(op)


_IMM_ALU = {"addi": "add", "slti": "slt", "sltiu": "sltu", "xori": "xor", "ori": "or",
            "andi": "and", "slli": "sll", "srli": "srl", "srai": "sra"}
_BR = {
    "beq": lambda a, b: a == b, "bne": lambda a, b: a != b,
    "blt": lambda a, b: _sext(a, 32) < _sext(b, 32), "bge": lambda a, b: _sext(a, 32) >= _sext(b, 32),
    "bltu": lambda a, b: a < b, "bgeu": lambda a, b: a >= b,
}
_LOAD_W = {"lb": (1, True), "lh": (2, True), "lw": (4, False), "lbu": (1, False), "lhu": (2, False)}
_STORE_W = {"sb": 1, "sh": 2, "sw": 4}
_DIVS = {"div", "divu", "rem", "remu"}


def execute_step(state: CoreState, mem: MemoryPort,
                 pending_irq: Optional[clic.InterruptRequest] = None,
                 timing: Timing = DEFAULT_TIMING, now: Optional[int] = None) -> StepResult:
    """Advance ``state`` by one retired instruction, one trap, or one interrupt entry.

    ``pending_irq`` is taken unconditionally: the caller has already arbitrated
    and checked ``mstatus.MIE``. All memory effects go through ``mem``.
    """
    if state.halted:
        raise RuntimeError("core is halted")
    c = state.csrs
    if now is None:
        now = c[csrs.MCYCLE]
    start_pc = state.pc

    if pending_irq is not None:
        entry = clic.take_interrupt(state, state.bank, pending_irq, mem,
                                    mem_latency=timing.mem_latency,
                                    extra_words=timing.irq_extra_words, now=now)
        if entry.trap is not None:
            raise_trap(state, *entry.trap)
        c[csrs.MCYCLE] = (c[csrs.MCYCLE] + entry.cycles) & MASK32
        return StepResult(None, entry.transactions, entry.cycles, entry.trap, pending_irq, pc=start_pc)

    x = state.xregs
    pc = state.pc
    txns: List[BusTransaction] = []
    ins: Optional[Instruction] = None
    wb = None
    cycles = timing.alu
    next_pc = (pc + 4) & MASK32
    wfi = False
    try:
        if pc & 3:
            raise _Trap(CAUSE_MISALIGNED_FETCH, pc)
        try:
            word = mem.fetch(pc)
        except EccUncorrectable:
            raise
        except BusError:
            raise _Trap(CAUSE_FETCH_ACCESS, pc)
        txns.append(BusTransaction("fetch", pc, 4, None, now))
        ins = decode(word)
        op = ins.op
        rd = ins.rd
        val = None
        if op in _IMM_ALU:
            b = ins.imm & MASK32 if op not in ("slli", "srli", "srai") else ins.imm
            val = _alu(_IMM_ALU[op], x[ins.rs1], b)
        elif op in _BR:
            if _BR[op](x[ins.rs1], x[ins.rs2]):
                next_pc = (pc + ins.imm) & MASK32
        elif op in _LOAD_W:
            width, signed = _LOAD_W[op]
            addr = (x[ins.rs1] + ins.imm) & MASK32
            if addr & (width - 1):
                raise _Trap(CAUSE_MISALIGNED_LOAD, addr)
            try:
                v = mem.load(addr, width)
            except EccUncorrectable:
                raise
            except BusError:
                raise _Trap(CAUSE_LOAD_ACCESS, addr)
            txns.append(BusTransaction("load", addr, width, None, now))
            val = _sext(v, 8 * width) & MASK32 if signed else v
            cycles += timing.mem_latency
        elif op in _STORE_W:
            width = _STORE_W[op]
            addr = (x[ins.rs1] + ins.imm) & MASK32
            if addr & (width - 1):
                raise _Trap(CAUSE_MISALIGNED_STORE, addr)
            data = x[ins.rs2] & ((1 << (8 * width)) - 1)
            try:
                mem.store(addr, width, data)
            except BusError:
                raise _Trap(CAUSE_STORE_ACCESS, addr)
            txns.append(BusTransaction("store", addr, width, data, now))
            cycles += timing.mem_latency
        elif op in _OP_SET:
            val = _alu(op, x[ins.rs1], x[ins.rs2])
            if op in _DIVS:
                cycles = timing.div
            elif op.startswith("mul"):
                cycles = timing.mul
        elif op == "lui":
            val = ins.imm & MASK32
        elif op == "auipc":
            val = (pc + ins.imm) & MASK32
        elif op == "jal" or op == "jalr":
            base = pc if op == "jal" else x[ins.rs1]
            target = (base + ins.imm) & MASK32
            if op == "jalr":
                target &= ~1
            if target & 3:
                raise _Trap(CAUSE_MISALIGNED_FETCH, target)
            val = next_pc
            next_pc = target
        elif op.startswith("csr"):
            n = ins.imm
            if n not in csrs.NAMES:
                raise _Trap(CAUSE_ILLEGAL, ins.raw)
            imm_form = op.endswith("i")
            src = ins.rs1 if imm_form else x[ins.rs1]
            kind = op[:5]
            writes = kind == "csrrw" or ins.rs1 != 0
            if writes and (n in csrs.READ_ONLY):
                raise _Trap(CAUSE_ILLEGAL, ins.raw)
            old = _csr_read(state, n) if (kind != "csrrw" or rd != 0) else 0
            if writes:
                new = src if kind == "csrrw" else (old | src if kind == "csrrs" else old & ~src)
                _csr_write(state, n, new)
            val = old
        elif op == "ecall":
            raise _Trap(CAUSE_ECALL, 0)
        elif op == "ebreak":
            raise _Trap(CAUSE_BREAKPOINT, pc)
        elif op == "mret":
            if state.bank.saved_contexts and c[csrs.MCAUSE] >> 31:
                cycles, more, trap = clic.complete_interrupt(state, state.bank, mem,
                                                             mem_latency=timing.mem_latency, now=now)
                txns.extend(more)
                if trap is not None:
                    raise _Trap(*trap)
                next_pc = state.pc
            else:
                st = c[csrs.MSTATUS]
                c[csrs.MSTATUS] = ((st & ~csrs.MSTATUS_MIE) | ((st >> 4) & csrs.MSTATUS_MIE)
                                   | csrs.MSTATUS_MPIE)
                next_pc = c[csrs.MEPC]
        elif op == "wfi":
            wfi = True
        elif op == "fence":
            pass
        else:  # illegal
            raise _Trap(CAUSE_ILLEGAL, ins.raw)
    except _Trap as t:
        raise_trap(state, t.cause, t.tval)
        c[csrs.MCYCLE] = (c[csrs.MCYCLE] + timing.trap) & MASK32
        if state.halted:  # exit ecall retires
            c[csrs.MINSTRET] = (c[csrs.MINSTRET] + 1) & MASK32
            return StepResult(ins, txns, timing.trap, None, exit_code=state.exit_code, pc=start_pc)
        return StepResult(ins, txns, timing.trap, (t.cause, t.tval & MASK32), pc=start_pc)

    if val is not None and rd != 0:
        x[rd] = val
        wb = (rd, val)
    state.pc = next_pc
    c[csrs.MCYCLE] = (c[csrs.MCYCLE] + cycles) & MASK32
    c[csrs.MINSTRET] = (c[csrs.MINSTRET] + 1) & MASK32
    return StepResult(ins, txns, cycles, None, None, wb, wfi=wfi, pc=start_pc)


_OP_SET = set(_OP.values())
