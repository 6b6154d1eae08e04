import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hamming_decode, hamming_encode
from sentrysim.bus import BusError, EccUncorrectable
from sentrysim.ecc import (CODE_BITS, MemoryBank, decode_array, ecc_decode, ecc_encode,
                           encode_array)

VECTORS = [(int(w, 16), int(c, 16))
           for w, c in json.loads((Path(__file__).parent / "data" / "ecc_vectors.json").read_text())]
words32 = st.integers(0, 2**32 - 1)


def test_known_codewords():
    assert ecc_encode(0) == 0
    assert ecc_encode(0xFFFFFFFF) == 0x7EFFFFFFE8
    assert ecc_encode(0xDEADBEEF) == 0x6FAB6EDCEF


@pytest.mark.parametrize("word,cw", VECTORS)
def test_frozen_vectors(word, cw):
    assert ecc_encode(word) == cw
    assert ecc_decode(cw) == (word, ecc_decode(cw)[1])
    assert ecc_decode(cw)[1].kind == "ok"


@given(words32)
def test_encode_matches_oracle(w):
    assert ecc_encode(w) == hamming_encode(w)


@given(words32, st.integers(0, CODE_BITS - 1))
def test_single_flip_corrected(w, bit):
    data, status = ecc_decode(ecc_encode(w) ^ (1 << bit))
    assert data == w
    assert status.kind == "corrected" and status.bit == bit
    assert hamming_decode(ecc_encode(w) ^ (1 << bit)) == (w, "corrected")


@given(words32, st.integers(0, CODE_BITS - 1), st.integers(0, CODE_BITS - 1))
def test_double_flip_detected(w, a, b):
    if a == b:
        return
    _, status = ecc_decode(ecc_encode(w) ^ (1 << a) ^ (1 << b))
    assert status.kind == "uncorrectable"


def test_every_double_flip_of_one_word():
    w = 0x1234ABCD
    cw = ecc_encode(w)
    n = 0
    for a in range(CODE_BITS):
        for b in range(a + 1, CODE_BITS):
            assert ecc_decode(cw ^ (1 << a) ^ (1 << b))[1].kind == "uncorrectable"
            n += 1
    assert n == 741


def test_vectorised_agrees_with_scalar():
    rng = np.random.default_rng(5)
    ws = rng.integers(0, 2**32, 500, dtype=np.uint64)
    cws = encode_array(ws)
    assert [int(c) for c in cws] == [ecc_encode(int(w)) for w in ws]
    flips = rng.integers(0, CODE_BITS, 500).astype(np.uint64)
    bad = cws ^ (np.uint64(1) << flips)
    out, kind, bit = decode_array(bad)
    assert (out == ws).all() and (kind == 1).all() and (bit == flips).all()


# -- memory bank -------------------------------------------------------------

def test_bank_read_corrects_and_writes_back():
    b = MemoryBank(0x1000, 64)
    b.write_word(0x1004, 0xCAFEF00D)
    b.inject_bit_flip(0x1004, 17)
    assert b.read(4, 4) == 0xCAFEF00D
    assert b.corrected_count == 1
    assert b.residual_errors() == 0


def test_bank_double_flip_raises_on_read():
    b = MemoryBank(0x1000, 64)
    b.write_word(0x1008, 7)
    b.inject_bit_flip(0x1008, 3)
    b.inject_bit_flip(0x1008, 30)
    with pytest.raises(EccUncorrectable):
        b.read(8, 4)
    assert b.detected_uncorrectable_count == 1
    with pytest.raises(EccUncorrectable):
        b.write(9, 1, 0xFF)  # read-modify-write cannot proceed either


def test_subword_write_is_read_modify_write():
    b = MemoryBank(0, 16)
    b.write(0, 4, 0x11223344)
    b.write(1, 1, 0xAA)
    b.write(2, 2, 0xBEEF)
    assert b.read(0, 4) == 0xBEEFAA44
    assert b.read(2, 2) == 0xBEEF


def test_scrubber_sweeps_and_repairs():
    b = MemoryBank(0, 32)
    for i in range(8):
        b.write_word(4 * i, i * 0x01010101)
    b.inject_bit_flip(12, 0)
    b.inject_bit_flip(28, 38)
    events = [b.scrub_step() for _ in range(8)]
    assert [e.index for e in events if e] == [3, 7]
    assert b.scrubbed_corrections == 2 and b.residual_errors() == 0
    assert b.scrub_ptr == 0


def test_bank_bounds():
    b = MemoryBank(0x100, 16)
    with pytest.raises(BusError):
        b.read_word(0x110)
    with pytest.raises(ValueError):
        b.inject_bit_flip(0x100, 39)
    with pytest.raises(ValueError):
        b.inject_bit_flip(0x200, 0)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 15), words32), max_size=30))
def test_bank_roundtrip(writes):
    b = MemoryBank(0, 64)
    ref = [0] * 16
    for i, w in writes:
        b.write_word(4 * i, w)
        ref[i] = w
    assert [b.read_word(4 * i)[0] for i in range(16)] == ref
