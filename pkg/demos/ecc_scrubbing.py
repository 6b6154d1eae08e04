"""
Why scrub
=========

Two single-bit upsets land in the same memory word, far apart in time.
Without scrubbing they accumulate into a double error; with scrubbing the
first one is repaired before the second arrives.
"""

from sentrysim import SimConfig, Soc
from sentrysim.asm import assemble
from sentrysim.campaign import FaultEvent
from sentrysim.ecc import ecc_decode, ecc_encode

# one codeword, by hand
cw = ecc_encode(0xDEADBEEF)
print(f"codeword {cw:#012x}")
print("one flip: ", ecc_decode(cw ^ (1 << 4)))
print("two flips:", ecc_decode(cw ^ (1 << 4) ^ (1 << 20)))

# a guest that sleeps until a timer wakes it, then reads the word
src = """
    li   t0, 0x01000100
    li   t1, 0x30000
    sw   t0, 0x11c(t1)        # timer line enabled, interrupts stay off
    li   t1, 0x31000
    sw   zero, 12(t1)
    li   t0, 200000
    sw   t0, 8(t1)
    li   t0, 1
    sw   t0, 0x10(t1)
    wfi
    la   t0, val
    lw   a0, 0(t0)
    li   a7, 93
    ecall
.data
val: .word 42
"""
prog = assemble(src)
for scrub in (True, False):
    cfg = SimConfig(data_size=4096, scrub_enabled=scrub)   # small bank: one sweep is 65536 cycles
    soc = Soc(cfg)
    soc.load_program(prog)
    a = prog.symbols["val"]
    soc.schedule_faults([FaultEvent(1_000, "mem_bit", bank="data", addr=a, bit=3),
                         FaultEvent(100_000, "mem_bit", bank="data", addr=a, bit=30)])
    r = soc.run()
    print(f"scrub={scrub}: {r.status} exit={r.exit_code} "
          f"scrubbed={r.counters['ecc_scrubbed']} uncorrectable={r.counters['ecc_uncorrectable']}")
