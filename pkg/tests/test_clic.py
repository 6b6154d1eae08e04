import pytest
from hypothesis import given
from hypothesis import strategies as st

from sentrysim import csrs
from sentrysim.bus import BusError, FlatMemory
from sentrysim.clic import (FRAME_REGS, FRAME_WORDS, BankState, ClicDevice, ClicState,
                            InterruptRequest, TimerDevice, TimerState, clic_arbitrate,
                            complete_interrupt, interrupt_cost, take_interrupt, timer_tick)
from sentrysim.isa import CoreState, execute_step


def clic_with(levels, threshold=0):
    c = ClicState()
    for line, lvl in levels.items():
        c.set_level(line, lvl)
        c.set_enable(line)
        c.set_pending(line)
    c.set_threshold(threshold)
    return c


def test_highest_level_wins():
    assert clic_arbitrate(clic_with({5: 100, 9: 200}), 0).line == 9


def test_running_level_is_strict():
    assert clic_arbitrate(clic_with({5: 100, 9: 200}), 200) is None
    assert clic_arbitrate(clic_with({5: 100, 9: 200}), 199).line == 9


def test_tie_goes_to_lowest_line():
    assert clic_arbitrate(clic_with({7: 50, 3: 50}), 0).line == 3


def test_disabled_and_threshold():
    c = clic_with({4: 255})
    c.set_enable(4, False)
    assert clic_arbitrate(c, 0) is None
    assert clic_arbitrate(clic_with({1: 255, 2: 17}, threshold=255), 0) is None


def test_vector_address():
    c = clic_with({10: 3})
    c.vector_table_base = 0x2000
    assert clic_arbitrate(c, 0).vector_addr == 0x2000 + 40
    c.vectored[10] = False
    assert clic_arbitrate(c, 0).vector_addr is None


@given(st.dictionaries(st.integers(0, 63), st.integers(0, 255), max_size=12),
       st.integers(0, 255), st.integers(0, 255))
def test_arbitration_soundness(levels, threshold, running):
    c = clic_with(levels, threshold)
    got = clic_arbitrate(c, running)
    assert got == clic_arbitrate(c, running)  # pure
    floor = max(threshold, running)
    eligible = {ln: lv for ln, lv in levels.items() if lv > floor}
    if not eligible:
        assert got is None
    else:
        top = max(eligible.values())
        assert got.level == top > floor
        assert got.line == min(ln for ln, lv in eligible.items() if lv == top)


def test_cost_model():
    assert interrupt_cost(True) == 6
    assert interrupt_cost(False) == 6 + 16 * 2 == 38
    assert 2 * interrupt_cost(False) == 76 < 110
    assert interrupt_cost(False, mem_latency=4) == 6 + 16 * 5
    assert FRAME_WORDS == 16


def _core():
    core = CoreState(pc=0x500)
    core.xregs = [0] + [0x1000 + i for i in range(1, 32)]
    core.xregs[2] = 0x4000
    core.csrs[csrs.MSTATUS] |= csrs.MSTATUS_MIE
    return core


def test_nested_entry_and_lifo_exit_restore_exact_state():
    mem = FlatMemory(0x8000, 0)
    mem.write_words(0x100, [0x600, 0x700])
    core = _core()
    before = core.copy()

    e1 = take_interrupt(core, core.bank, InterruptRequest(0, 5, 0x100), mem)
    assert e1.banked and e1.cycles == 6 and core.pc == 0x600 and core.priv_irq_level == 5
    assert core.csrs[csrs.MCAUSE] >> 31 == 1
    for r in FRAME_REGS:
        core.xregs[r] ^= 0xFFFF  # handler clobbers caller-saved registers
    core.csrs[csrs.MSTATUS] |= csrs.MSTATUS_MIE
    mid = core.copy()

    e2 = take_interrupt(core, core.bank, InterruptRequest(1, 9, 0x104), mem)
    assert not e2.banked and e2.cycles == 38
    assert core.xregs[2] == mid.xregs[2] - 4 * FRAME_WORDS
    assert len([t for t in e2.transactions if t.kind == "store"]) == FRAME_WORDS

    cyc, _, trap = complete_interrupt(core, core.bank, mem)
    assert (cyc, trap) == (38, None)
    assert (core.pc, core.xregs, core.priv_irq_level) == (mid.pc, mid.xregs, mid.priv_irq_level)
    assert core.csrs[csrs.MSTATUS] == mid.csrs[csrs.MSTATUS]

    cyc, _, _ = complete_interrupt(core, core.bank, mem)
    assert cyc == 6
    assert (core.pc, core.xregs, core.priv_irq_level) == (before.pc, before.xregs, before.priv_irq_level)
    assert core.csrs[csrs.MSTATUS] == before.csrs[csrs.MSTATUS]
    assert core.bank.in_use == 0 and not core.bank.saved_contexts


def test_handler_first_instruction_six_cycles_after_accept():
    mem = FlatMemory(0x8000, 0)
    mem.write_words(0x100, [0x600])
    mem.write_words(0x600, [0x00500093])
    core = _core()
    r = execute_step(core, mem, InterruptRequest(0, 200, 0x100))
    assert r.cycles == 6 and r.irq.level == 200 and r.retired is None
    assert execute_step(core, mem).retired.op == "addi"


def test_vector_fetch_fault_becomes_access_trap():
    core = _core()
    core.csrs[csrs.MTVEC] = 0x40
    e = take_interrupt(core, core.bank, InterruptRequest(0, 1, 0x9000_0000), FlatMemory(0x100, 0))
    assert e.trap == (1, 0x9000_0000)


def test_bank_depth_two_keeps_second_level_banked():
    mem = FlatMemory(0x8000, 0)
    core = _core()
    core.bank = BankState(depth=2)
    assert take_interrupt(core, core.bank, InterruptRequest(0, 1, None), mem).banked
    assert take_interrupt(core, core.bank, InterruptRequest(1, 2, None), mem).banked
    assert not take_interrupt(core, core.bank, InterruptRequest(2, 3, None), mem).banked


def test_periodic_timer():
    t = TimerState(compare=100, periodic=True, period=100, enabled=True)
    fired = [cyc for cyc in range(350) if timer_tick(t) is not None]
    assert fired == [100, 200, 300]


def test_one_shot_timer_and_disable():
    t = TimerState(compare=5, enabled=True)
    assert [c for c in range(20) if timer_tick(t) is not None] == [5]
    t = TimerState(compare=5)
    assert all(timer_tick(t) is None for _ in range(20))


def test_clic_registers():
    s = ClicState()
    dev = ClicDevice(s)
    dev.write(0x100 + 4 * 9, 4, 0x05_01_01_01)
    assert s.pending[9] and s.enabled[9] and s.vectored[9] and s.level[9] == 5
    dev.write(0x100 + 4 * 9 + 3, 1, 0x80)  # byte write into the level lane
    assert s.level[9] == 0x80 and s.pending[9]
    dev.write(0, 4, 77)
    assert s.threshold == 77 and dev.read(0, 4) == 77
    assert dev.read(8, 4) == 64
    with pytest.raises(BusError):
        dev.write(8, 4, 1)
    with pytest.raises(BusError):
        dev.read(0x100 + 4 * 64, 4)
    with pytest.raises(BusError):
        dev.check_write(0x50, 4)


def test_timer_registers():
    t = TimerState()
    dev = TimerDevice(t)
    dev.write(0x0C, 4, 0)
    dev.write(0x08, 4, 300)
    dev.write(0x10, 4, 3)
    dev.write(0x14, 4, 50)
    assert (t.compare, t.enabled, t.periodic, t.period) == (300, True, True, 50)
    with pytest.raises(BusError):
        dev.write(0x40, 4, 1)
