"""SEC-DED (39,32) extended Hamming code and ECC-protected memory banks.

Codeword layout (bit index = classic Hamming position):

* bit 0: overall even parity over bits 1..38
* bits 1, 2, 4, 8, 16, 32: Hamming parity p0..p5; p_k covers every position
  whose index has bit k set
* the remaining 32 positions (3, 5, 6, 7, 9, ..., 31, 33, ..., 38) hold data
  bits d0..d31 in ascending order

A single flip gives a syndrome equal to its position and odd overall parity;
a double flip gives a non-zero syndrome with even overall parity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .bus import MASK32, BusError, EccUncorrectable

CODE_BITS = 39
PARITY_POSITIONS = (1, 2, 4, 8, 16, 32)
DATA_POSITIONS = tuple(p for p in range(1, CODE_BITS) if p not in PARITY_POSITIONS)
assert len(DATA_POSITIONS) == 32


@dataclass(frozen=True)
class DecodeStatus:
    kind: str  # 'ok' | 'corrected' | 'uncorrectable'
    bit: Optional[int] = None

    @classmethod
    def corrected(cls, bit: int) -> "DecodeStatus":
        return cls("corrected", bit)

    def __str__(self) -> str:
        return f"corrected({self.bit})" if self.kind == "corrected" else self.kind


OK = DecodeStatus("ok")
UNCORRECTABLE = DecodeStatus("uncorrectable")
_CORRECTED = tuple(DecodeStatus.corrected(i) for i in range(CODE_BITS))


def _build_tables():
    # The code is linear, so per-byte contribution tables compose by XOR.
    enc = np.zeros((4, 256), dtype=np.uint64)
    for j, pos in enumerate(DATA_POSITIONS):
        cw = 1 << pos
        for k, ppos in enumerate(PARITY_POSITIONS):
            if pos & (1 << k):
                cw |= 1 << ppos
        cw |= bin(cw).count("1") & 1  # overall parity
        byte, bit = divmod(j, 8)
        for v in range(256):
            if v >> bit & 1:
                enc[byte, v] ^= np.uint64(cw)
    syn = np.zeros((5, 256), dtype=np.int64)  # syndrome | parity << 6
    dat = np.zeros((5, 256), dtype=np.int64)
    data_index = {pos: j for j, pos in enumerate(DATA_POSITIONS)}
    for byte in range(5):
        for v in range(256):
            s = p = d = 0
            for bit in range(8):
                pos = 8 * byte + bit
                if pos < CODE_BITS and v >> bit & 1:
                    s ^= pos
                    p ^= 1
                    if pos in data_index:
                        d |= 1 << data_index[pos]
            syn[byte, v] = s | p << 6
            dat[byte, v] = d
    return enc, syn, dat


_ENC_NP, _SYN_NP, _DAT_NP = _build_tables()
_ENC = [[int(v) for v in row] for row in _ENC_NP]
_SYN = [[int(v) for v in row] for row in _SYN_NP]
_DAT = [[int(v) for v in row] for row in _DAT_NP]


def ecc_encode(word: int) -> int:
    """Encode a 32-bit word into a 39-bit codeword."""
    e = _ENC
    return e[0][word & 255] ^ e[1][(word >> 8) & 255] ^ e[2][(word >> 16) & 255] ^ e[3][(word >> 24) & 255]


def _extract(cw: int) -> int:
    d = _DAT
    return (d[0][cw & 255] | d[1][(cw >> 8) & 255] | d[2][(cw >> 16) & 255]
            | d[3][(cw >> 24) & 255] | d[4][(cw >> 32) & 127])


def ecc_decode(cw: int) -> Tuple[int, DecodeStatus]:
    """Decode a codeword to ``(word, status)``.

    Uncorrectable words return the raw (possibly wrong) data bits; the caller
    decides what to do with them.
    """
    s = _SYN
    sp = (s[0][cw & 255] ^ s[1][(cw >> 8) & 255] ^ s[2][(cw >> 16) & 255]
          ^ s[3][(cw >> 24) & 255] ^ s[4][(cw >> 32) & 127])
    syndrome, parity = sp & 63, sp >> 6
    if parity:
        if syndrome >= CODE_BITS:
            return _extract(cw), UNCORRECTABLE
        return _extract(cw ^ (1 << syndrome)), _CORRECTED[syndrome]
    if syndrome:
        return _extract(cw), UNCORRECTABLE
    return _extract(cw), OK


def encode_array(words) -> np.ndarray:
    w = np.asarray(words, dtype=np.uint64)
    e = _ENC_NP
    return (e[0][w & 255] ^ e[1][(w >> 8) & 255] ^ e[2][(w >> 16) & 255] ^ e[3][(w >> 24) & 255])


def decode_array(cws) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised decode: returns ``(words, kind, bit)``.

    ``kind`` is 0 ok, 1 corrected, 2 uncorrectable; ``bit`` is the corrected
    position or -1.
    """
    c = np.asarray(cws, dtype=np.uint64)
    b = [((c >> np.uint64(8 * i)) & np.uint64(255)).astype(np.intp) for i in range(5)]
    sp = _SYN_NP[0][b[0]] ^ _SYN_NP[1][b[1]] ^ _SYN_NP[2][b[2]] ^ _SYN_NP[3][b[3]] ^ _SYN_NP[4][b[4] & 127]
    syndrome, parity = sp & 63, sp >> 6
    single = (parity == 1) & (syndrome < CODE_BITS)
    kind = np.where(single, 1, np.where((parity == 1) | (syndrome != 0), 2, 0))
    bit = np.where(single, syndrome, -1)
    fixed = np.where(single, c ^ (np.uint64(1) << syndrome.astype(np.uint64)), c)
    fb = [((fixed >> np.uint64(8 * i)) & np.uint64(255)).astype(np.intp) for i in range(5)]
    words = (_DAT_NP[0][fb[0]] | _DAT_NP[1][fb[1]] | _DAT_NP[2][fb[2]]
             | _DAT_NP[3][fb[3]] | _DAT_NP[4][fb[4] & 127])
    return words.astype(np.uint32), kind, bit


@dataclass(frozen=True)
class ScrubEvent:
    index: int
    status: DecodeStatus


class MemoryBank:
    """Word-addressed SEC-DED memory with inline and background scrubbing."""

    def __init__(self, base: int, size_bytes: int, name: str = "bank"):
        if size_bytes <= 0 or size_bytes % 4:
            raise ValueError("bank size must be a positive multiple of 4")
        self.name = name
        self.base = base
        self.size_bytes = size_bytes
        self.words: List[int] = [0] * (size_bytes // 4)  # encode(0) == 0
        self.scrub_ptr = 0
        self.corrected_count = 0
        self.detected_uncorrectable_count = 0
        self.scrubbed_corrections = 0
        self.scrub_uncorrectable = 0

    @property
    def n_words(self) -> int:
        return len(self.words)

    def _index(self, addr: int, width: int = 4) -> int:
        off = addr - self.base
        if off < 0 or off + width > self.size_bytes:
            raise BusError(addr, f"outside {self.name}")
        if off & (width - 1):
            raise BusError(addr, "misaligned")
        return off >> 2

    def peek_word(self, addr: int) -> Tuple[int, DecodeStatus]:
        """Decode without side effects (no counters, no write-back)."""
        return ecc_decode(self.words[self._index(addr & ~3)])

    def read_word(self, addr: int) -> Tuple[int, DecodeStatus]:
        i = self._index(addr)
        word, status = ecc_decode(self.words[i])
        if status.kind == "corrected":
            self.words[i] = ecc_encode(word)
            self.corrected_count += 1
        elif status.kind == "uncorrectable":
            self.detected_uncorrectable_count += 1
        return word, status

    def write_word(self, addr: int, word: int) -> None:
        self.words[self._index(addr)] = ecc_encode(word & MASK32)

    def write_subword(self, addr: int, width: int, value: int) -> None:
        """Read-modify-write of a byte or halfword lane."""
        if width == 4:
            return self.write_word(addr, value)
        self._index(addr, width)
        waddr = addr & ~3
        old, status = self.read_word(waddr)
        if status.kind == "uncorrectable":
            raise EccUncorrectable(waddr)
        shift = (addr & 3) * 8
        mask = ((1 << (8 * width)) - 1) << shift
        self.write_word(waddr, (old & ~mask) | ((value << shift) & mask))

    # device interface (offsets relative to base)
    def read(self, offset: int, width: int) -> int:
        word, status = self.read_word(self.base + (offset & ~3))
        if status.kind == "uncorrectable":
            raise EccUncorrectable(self.base + offset)
        return (word >> ((offset & 3) * 8)) & ((1 << (8 * width)) - 1)

    def peek(self, offset: int, width: int) -> int:
        word, status = self.peek_word(self.base + offset)
        if status.kind == "uncorrectable":
            raise EccUncorrectable(self.base + offset, counted=False)
        return (word >> ((offset & 3) * 8)) & ((1 << (8 * width)) - 1)

    def write(self, offset: int, width: int, value: int) -> None:
        self.write_subword(self.base + offset, width, value)

    def check_write(self, offset: int, width: int) -> None:
        self._index(self.base + offset, width)

    def scrub_step(self) -> Optional[ScrubEvent]:
        i = self.scrub_ptr
        self.scrub_ptr = (i + 1) % len(self.words)
        word, status = ecc_decode(self.words[i])
        if status.kind == "ok":
            return None
        if status.kind == "corrected":
            self.words[i] = ecc_encode(word)
            self.scrubbed_corrections += 1
        else:
            self.scrub_uncorrectable += 1
            self.detected_uncorrectable_count += 1
        return ScrubEvent(i, status)

    def inject_bit_flip(self, addr: int, bit_index: int) -> None:
        if not 0 <= bit_index < CODE_BITS:
            raise ValueError(f"bit index {bit_index} outside codeword")
        off = addr - self.base
        if off < 0 or off >= self.size_bytes:
            raise ValueError(f"address {addr:#x} outside {self.name}")
        self.words[off >> 2] ^= 1 << bit_index

    def load_bytes(self, addr: int, data: bytes) -> None:
        """Bulk initialisation (program loading); partial words are merged."""
        off = addr - self.base
        if off < 0 or off + len(data) > self.size_bytes:
            raise BusError(addr, f"image does not fit in {self.name}")
        k = 0
        while k < len(data):
            a = addr + k
            if a % 4 == 0 and len(data) - k >= 4:
                self.write_word(a, int.from_bytes(data[k:k + 4], "little"))
                k += 4
            else:
                self.write_subword(a, 1, data[k])
                k += 1

    def codewords(self) -> np.ndarray:
        return np.array(self.words, dtype=np.uint64)

    def image(self) -> Tuple[np.ndarray, np.ndarray]:
        """Decoded word array and per-word status kind (0/1/2), side-effect free."""
        words, kind, _ = decode_array(self.codewords())
        return words, kind

    def residual_errors(self) -> int:
        return int(np.count_nonzero(self.image()[1]))
