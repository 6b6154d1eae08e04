"""Tiny two-pass RV32IM/Zicsr assembler for the built-in programs.

Supports labels, ``.text``/``.data`` sections, ``.word``, ``.space``,
``.align``, ``.equ``, ``%hi``/``%lo`` and the common pseudo-instructions.
It exists so the corpus and bench firmware need no external toolchain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from . import csrs
from .isa import ABI

_REGS: Dict[str, int] = {f"x{i}": i for i in range(32)}
_REGS.update({n: i for i, n in enumerate(ABI)})
_REGS["fp"] = 8
_CSRS = {name: num for num, name in csrs.NAMES.items()}

_R = {  # funct7, funct3
    "add": (0, 0), "sub": (0x20, 0), "sll": (0, 1), "slt": (0, 2), "sltu": (0, 3),
    "xor": (0, 4), "srl": (0, 5), "sra": (0x20, 5), "or": (0, 6), "and": (0, 7),
    "mul": (1, 0), "mulh": (1, 1), "mulhsu": (1, 2), "mulhu": (1, 3),
    "div": (1, 4), "divu": (1, 5), "rem": (1, 6), "remu": (1, 7),
}
_I = {"addi": 0, "slti": 2, "sltiu": 3, "xori": 4, "ori": 6, "andi": 7}
_SH = {"slli": (0, 1), "srli": (0, 5), "srai": (0x20, 5)}
_LD = {"lb": 0, "lh": 1, "lw": 2, "lbu": 4, "lhu": 5}
_ST = {"sb": 0, "sh": 1, "sw": 2}
_BR = {"beq": 0, "bne": 1, "blt": 4, "bge": 5, "bltu": 6, "bgeu": 7}
_CS = {"csrrw": 1, "csrrs": 2, "csrrc": 3, "csrrwi": 5, "csrrsi": 6, "csrrci": 7}
_SYS = {"ecall": 0x73, "ebreak": 0x00100073, "mret": 0x30200073, "wfi": 0x10500073, "fence": 0x0FF0000F,
        "nop": 0x13}


class AsmError(ValueError):
    pass


def enc_r(f7, rs2, rs1, f3, rd, opc):
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc


def enc_i(imm, rs1, f3, rd, opc):
    return ((imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc


def enc_s(imm, rs2, rs1, f3, opc=0x23):
    return (((imm >> 5) & 0x7F) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((imm & 0x1F) << 7) | opc


def enc_b(imm, rs2, rs1, f3):
    return ((((imm >> 12) & 1) << 31) | (((imm >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15)
            | (f3 << 12) | (((imm >> 1) & 0xF) << 8) | (((imm >> 11) & 1) << 7) | 0x63)


def enc_u(imm, rd, opc):
    return (imm & 0xFFFFF000) | (rd << 7) | opc


def enc_j(imm, rd):
    return ((((imm >> 20) & 1) << 31) | (((imm >> 1) & 0x3FF) << 21) | (((imm >> 11) & 1) << 20)
            | (((imm >> 12) & 0xFF) << 12) | (rd << 7) | 0x6F)


def _hi(v: int) -> int:
    return ((v + 0x800) >> 12) & 0xFFFFF


def _lo(v: int) -> int:
    v &= 0xFFF
    return v - 0x1000 if v & 0x800 else v


@dataclass
class Program:
    text_base: int
    text: bytes
    data_base: int
    data: bytes
    symbols: Dict[str, int] = field(default_factory=dict)

    @property
    def entry(self) -> int:
        return self.symbols.get("_start", self.text_base)

    def words(self) -> List[int]:
        return [int.from_bytes(self.text[i:i + 4], "little") for i in range(0, len(self.text), 4)]


class _Asm:
    def __init__(self, src: str, text_base: int, data_base: int, symbols: Dict[str, int]):
        self.lines = []
        for n, line in enumerate(src.splitlines(), 1):
            line = line.split("#")[0].strip()
            while True:
                m = re.match(r"^([A-Za-z_.$][\w.$]*):\s*(.*)$", line)
                if not m:
                    break
                self.lines.append((n, m.group(1) + ":"))
                line = m.group(2)
            if line:
                self.lines.append((n, line))
        self.bases = {"text": text_base, "data": data_base}
        self.syms = dict(symbols)

    # -- operand helpers ----------------------------------------------------
    def reg(self, s: str) -> int:
        s = s.strip()
        if s not in _REGS:
            raise AsmError(f"bad register {s!r}")
        return _REGS[s]

    def value(self, s: str, final: bool) -> int:
        s = s.strip()
        m = re.match(r"^%(hi|lo)\((.*)\)$", s)
        if m:
            v = self.value(m.group(2), final)
            return _hi(v) if m.group(1) == "hi" else _lo(v)
        if s.startswith("'") and s.endswith("'") and len(s) == 3:
            return ord(s[1])
        total, sign = 0, 1
        for tok in re.findall(r"[+-]|[^+\-\s]+", s):
            if tok in "+-":
                sign = 1 if tok == "+" else -1
                continue
            if re.match(r"^(0x[0-9a-fA-F_]+|0b[01_]+|\d[\d_]*)$", tok):
                v = int(tok, 0)
            elif tok in self.syms:
                v = self.syms[tok]
            elif final:
                raise AsmError(f"undefined symbol {tok!r}")
            else:
                v = 0
            total += sign * v
            sign = 1
        return total

    def mem(self, s: str, final: bool) -> Tuple[int, int]:
        m = re.match(r"^(.*)\((\w+)\)$", s.strip())
        if not m:
            raise AsmError(f"bad memory operand {s!r}")
        off = self.value(m.group(1), final) if m.group(1).strip() else 0
        return off, self.reg(m.group(2))

    def csr(self, s: str, final: bool) -> int:
        s = s.strip()
        return _CSRS[s] if s in _CSRS else self.value(s, final)

    # -- instruction sizing / encoding ------------------------------------
    def size(self, op: str, args: List[str]) -> int:
        if op == "li":
            try:
                v = self.value(args[1], True)
            except AsmError:
                return 8
            return 4 if -2048 <= _signed32(v) < 2048 else 8
        if op in ("la", "call_far"):
            return 8
        return 4

    def encode(self, op: str, a: List[str], pc: int, nbytes: int) -> List[int]:
        f = True
        v = lambda s: self.value(s, f)
        if op in _R:
            f7, f3 = _R[op]
            return [enc_r(f7, self.reg(a[2]), self.reg(a[1]), f3, self.reg(a[0]), 0x33)]
        if op in _I:
            return [enc_i(_check_imm(v(a[2]), 12), self.reg(a[1]), _I[op], self.reg(a[0]), 0x13)]
        if op in _SH:
            f7, f3 = _SH[op]
            return [enc_r(f7, v(a[2]) & 31, self.reg(a[1]), f3, self.reg(a[0]), 0x13)]
        if op in _LD:
            off, base = self.mem(a[1], f)
            return [enc_i(_check_imm(off, 12), base, _LD[op], self.reg(a[0]), 0x03)]
        if op in _ST:
            off, base = self.mem(a[1], f)
            return [enc_s(_check_imm(off, 12), self.reg(a[0]), base, _ST[op])]
        if op in _BR:
            return [enc_b(_check_imm(v(a[2]) - pc, 13), self.reg(a[1]), self.reg(a[0]), _BR[op])]
        if op in ("lui", "auipc"):
            return [enc_u(v(a[1]) << 12, self.reg(a[0]), 0x37 if op == "lui" else 0x17)]
        if op == "jal":
            rd, tgt = (1, a[0]) if len(a) == 1 else (self.reg(a[0]), a[1])
            return [enc_j(_check_imm(v(tgt) - pc, 21), rd)]
        if op == "jalr":
            if len(a) == 1:
                return [enc_i(0, self.reg(a[0]), 0, 1, 0x67)]
            if "(" in a[1]:
                off, base = self.mem(a[1], f)
            else:
                base, off = self.reg(a[1]), v(a[2]) if len(a) > 2 else 0
            return [enc_i(off, base, 0, self.reg(a[0]), 0x67)]
        if op in _CS:
            src = v(a[2]) & 31 if op.endswith("i") else self.reg(a[2])
            return [enc_i(self.csr(a[1], f), src, _CS[op], self.reg(a[0]), 0x73)]
        if op in _SYS:
            return [_SYS[op]]
        # pseudo-instructions
        if op == "li":
            rd, val = self.reg(a[0]), _signed32(v(a[1]))
            if nbytes == 4:
                return [enc_i(val, 0, 0, rd, 0x13)]
            return [enc_u(_hi(val) << 12, rd, 0x37), enc_i(_lo(val), rd, 0, rd, 0x13)]
        if op == "la":
            rd, val = self.reg(a[0]), v(a[1])
            return [enc_u(_hi(val) << 12, rd, 0x37), enc_i(_lo(val), rd, 0, rd, 0x13)]
        simple = {
            "mv": lambda: ["addi", a[0], a[1], "0"],
            "not": lambda: ["xori", a[0], a[1], "-1"],
            "neg": lambda: ["sub", a[0], "zero", a[1]],
            "seqz": lambda: ["sltiu", a[0], a[1], "1"],
            "snez": lambda: ["sltu", a[0], "zero", a[1]],
            "j": lambda: ["jal", "zero", a[0]],
            "call": lambda: ["jal", "ra", a[0]],
            "jr": lambda: ["jalr", "zero", a[0], "0"],
            "ret": lambda: ["jalr", "zero", "ra", "0"],
            "beqz": lambda: ["beq", a[0], "zero", a[1]],
            "bnez": lambda: ["bne", a[0], "zero", a[1]],
            "bltz": lambda: ["blt", a[0], "zero", a[1]],
            "bgez": lambda: ["bge", a[0], "zero", a[1]],
            "blez": lambda: ["bge", "zero", a[0], a[1]],
            "bgtz": lambda: ["blt", "zero", a[0], a[1]],
            "bgt": lambda: ["blt", a[1], a[0], a[2]],
            "ble": lambda: ["bge", a[1], a[0], a[2]],
            "bgtu": lambda: ["bltu", a[1], a[0], a[2]],
            "bleu": lambda: ["bgeu", a[1], a[0], a[2]],
            "csrr": lambda: ["csrrs", a[0], a[1], "zero"],
            "csrw": lambda: ["csrrw", "zero", a[0], a[1]],
            "csrs": lambda: ["csrrs", "zero", a[0], a[1]],
            "csrc": lambda: ["csrrc", "zero", a[0], a[1]],
            "csrwi": lambda: ["csrrwi", "zero", a[0], a[1]],
            "csrsi": lambda: ["csrrsi", "zero", a[0], a[1]],
            "csrci": lambda: ["csrrci", "zero", a[0], a[1]],
        }
        if op in simple:
            parts = simple[op]()
            return self.encode(parts[0], parts[1:], pc, 4)
        raise AsmError(f"unknown instruction {op!r}")

    # -- passes ---------------------------------------------------------------
    def run(self) -> Program:
        self._pass(final=False)
        return self._pass(final=True)

    def _pass(self, final: bool) -> Program:
        out = {"text": bytearray(), "data": bytearray()}
        sec = "text"
        seen = set()
        for n, line in self.lines:
            try:
                here = self.bases[sec] + len(out[sec])
                self.syms["."] = here
                if line.endswith(":"):
                    name = line[:-1]
                    if name in seen or not final and name in self.syms and self.syms[name] != here:
                        raise AsmError(f"duplicate label {name!r}")
                    seen.add(name)
                    self.syms[name] = here
                    continue
                parts = line.split(None, 1)
                op = parts[0].lower()
                args = _split_args(parts[1]) if len(parts) > 1 else []
                if op in (".text", ".data"):
                    sec = op[1:]
                elif op in (".section",):
                    sec = "data" if "data" in args[0] or "bss" in args[0] else "text"
                elif op in (".globl", ".global", ".type", ".size"):
                    pass
                elif op in (".equ", ".set"):
                    self.syms[args[0]] = self.value(args[1], final)
                elif op == ".word":
                    for s in args:
                        out[sec] += (self.value(s, final) & 0xFFFFFFFF).to_bytes(4, "little")
                elif op == ".half":
                    for s in args:
                        out[sec] += (self.value(s, final) & 0xFFFF).to_bytes(2, "little")
                elif op == ".byte":
                    for s in args:
                        out[sec] += (self.value(s, final) & 0xFF).to_bytes(1, "little")
                elif op in (".space", ".zero"):
                    out[sec] += bytes(self.value(args[0], True))
                elif op in (".align", ".p2align"):
                    al = 1 << self.value(args[0], True)
                    while (self.bases[sec] + len(out[sec])) % al:
                        out[sec] += b"\0"
                else:
                    nbytes = self.size(op, args) if not final else self._sizes[(n, line)]
                    if not final:
                        self._sizes = getattr(self, "_sizes", {})
                        self._sizes[(n, line)] = nbytes
                        out[sec] += bytes(nbytes)
                    else:
                        words = self.encode(op, args, here, nbytes)
                        if 4 * len(words) != nbytes:
                            raise AsmError("size changed between passes")
                        for w in words:
                            out[sec] += (w & 0xFFFFFFFF).to_bytes(4, "little")
            except AsmError as e:
                raise AsmError(f"line {n}: {line!r}: {e}") from None
            except (IndexError, KeyError) as e:
                raise AsmError(f"line {n}: {line!r}: malformed ({e})") from None
        return Program(self.bases["text"], bytes(out["text"]), self.bases["data"], bytes(out["data"]),
                       dict(self.syms))


def _split_args(s: str) -> List[str]:
    args, depth, cur = [], 0, ""
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            args.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        args.append(cur.strip())
    return args


def _signed32(v: int) -> int:
    v &= 0xFFFFFFFF
    return v - (1 << 32) if v & 0x80000000 else v


def _check_imm(v: int, bits: int) -> int:
    if not -(1 << (bits - 1)) <= v < (1 << (bits - 1)):
        raise AsmError(f"immediate {v} does not fit in {bits} bits")
    return v


def assemble(src: str, text_base: int = 0x0001_0000, data_base: int = 0x0002_0000,
             symbols: Dict[str, int] | None = None) -> Program:
    return _Asm(src, text_base, data_base, symbols or {}).run()
