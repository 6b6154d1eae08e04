"""
Outvoting a faulty core
=======================

Run the matrix-multiply program on three cores in lockstep, flip one bit in
one core's register file halfway through, and watch the vote and the
resynchronization put things right.
"""

from sentrysim import SimConfig, Soc
from sentrysim.campaign import FaultEvent
from sentrysim.corpus import corpus_program

prog = corpus_program("matmul")

# a clean run first, for reference
soc = Soc(SimConfig())
soc.load_program(prog)
clean = soc.run()
print("clean run:", clean.status, clean.exit_code, clean.cycles, "cycles")

# flip bit 7 of s1 (x9) in core 1 at cycle 300
soc = Soc(SimConfig())
soc.load_program(prog)
soc.schedule_faults([FaultEvent(300, "core_reg", core=1, reg=9, mask=1 << 7)])
faulty = soc.run(trace=True)

print("faulty run:", faulty.status, faulty.exit_code, faulty.cycles, "cycles")
print("mismatches", faulty.counters["mismatch_count"], "resyncs", faulty.counters["resync_durations"])

# the extra cycles are the recovery
print("overhead:", faulty.cycles - clean.cycles)

# trace lines mentioning the vote and the resync
for line in soc.trace:
    if "resync" in line or "mismatch" in line:
        print("  ", line)
