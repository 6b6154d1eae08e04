import pytest

from sentrysim.asm import AsmError, assemble
from sentrysim.isa import decode


def ops(src, **kw):
    return [decode(w).op for w in assemble(src, **kw).words()]


def test_li_sizes():
    assert ops("li a0, 5") == ["addi"]
    assert ops("li a0, 0x12345678") == ["lui", "addi"]
    assert ops("li a0, 0x1000")[0] == "lui"


def test_li_values_roundtrip():
    for v in (0, -1, 2047, -2048, 2048, 0x7FFFFFFF, 0x80000000, 0x12345FFF):
        words = assemble(f"li a0, {v}").words()
        x = 0
        for w in words:
            d = decode(w)
            x = d.imm & 0xFFFFFFFF if d.op == "lui" else (x + d.imm) & 0xFFFFFFFF
        assert x == v & 0xFFFFFFFF


def test_labels_and_data():
    p = assemble("""
    start:
        la a0, table
        j start
    .data
    table: .word 1, 2
    b: .byte 7
    .align 2
    h: .half 0x1234
    """)
    assert p.symbols["table"] == p.data_base
    assert p.symbols["h"] == p.data_base + 12
    assert bytes(p.data[:4]) == b"\x01\0\0\0" and p.data[8] == 7


def test_dot_is_current_location():
    w = assemble("nop\nbeq a0, a1, .").words()[1]
    assert decode(w).imm == 0


def test_equ_and_hi_lo():
    p = assemble(".equ BASE, 0x30000\nlui t0, %hi(BASE + 4)\naddi t0, t0, %lo(BASE + 4)")
    a, b = (decode(w) for w in p.words())
    assert (a.imm + b.imm) & 0xFFFFFFFF == 0x30004


@pytest.mark.parametrize("bad", ["frob a0", "addi a0, a1", "addi a0, a1, 5000", "add q1, a0, a0",
                                 "j nowhere", "x:\nx:\nnop"])
def test_errors(bad):
    with pytest.raises(AsmError):
        assemble(bad)
