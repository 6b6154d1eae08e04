"""
Interrupt entry and context switch cost
=======================================

The bench firmware takes a timer interrupt on the banked path and, from
inside that handler, a higher-level software interrupt that must spill its
frame to the stack.
"""

from sentrysim import SimConfig
from sentrysim.bench import format_irq_report, run_irq_bench

print(format_irq_report(run_irq_bench(SimConfig())))

# Slower memory makes the spilled path more expensive; the banked path does not care.
for lat in (1, 2, 3, 4):
    rep = run_irq_bench(SimConfig(mem_latency=lat))
    print(f"mem_latency={lat}: entry {rep.entry_latency}, spilled round trip {rep.spilled_round_trip}")
