"""Bus-level primitives shared by the cores, memories and peripherals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol

MASK32 = 0xFFFFFFFF


class BusError(Exception):
    """An access that no device answered (unmapped, read-only, bad offset)."""

    def __init__(self, addr: int, reason: str = "unmapped"):
        super().__init__(f"bus error at {addr:#010x}: {reason}")
        self.addr = addr
        self.reason = reason


class EccUncorrectable(BusError):
    """A demand read hit a codeword with a detected double-bit error."""

    def __init__(self, addr: int, counted: bool = True):
        super().__init__(addr, "ECC uncorrectable")
        self.counted = counted  # False when raised by a side-effect-free peek


@dataclass(frozen=True)
class BusTransaction:
    kind: str  # 'fetch' | 'load' | 'store'
    address: int
    width: int
    data: Optional[int]  # stores only
    cycle: int

    def fields(self) -> tuple:
        return (self.kind, self.address, self.width, self.data)


class MemoryPort(Protocol):
    """What a hart needs from the memory system.

    Reads return zero-extended values. Any failure raises :class:`BusError`.
    """

    def fetch(self, addr: int) -> int: ...

    def load(self, addr: int, width: int) -> int: ...

    def store(self, addr: int, width: int, value: int) -> None: ...


class FlatMemory:
    """Plain little-endian byte memory, handy for unit tests and golden runs."""

    def __init__(self, size: int = 1 << 16, base: int = 0):
        self.base = base
        self.data = bytearray(size)

    def _off(self, addr: int, width: int) -> int:
        off = addr - self.base
        if off < 0 or off + width > len(self.data):
            raise BusError(addr)
        return off

    def fetch(self, addr: int) -> int:
        return self.load(addr, 4)

    def load(self, addr: int, width: int) -> int:
        off = self._off(addr, width)
        return int.from_bytes(self.data[off:off + width], "little")

    def store(self, addr: int, width: int, value: int) -> None:
        off = self._off(addr, width)
        self.data[off:off + width] = (value & ((1 << (8 * width)) - 1)).to_bytes(width, "little")

    def write_words(self, addr: int, words) -> None:
        for i, w in enumerate(words):
            self.store(addr + 4 * i, 4, w)
