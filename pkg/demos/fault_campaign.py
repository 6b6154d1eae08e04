"""
A small fault-injection campaign
================================

Inject one random bit flip per run into the core registers or program
counter and tally the outcomes against a golden run.
"""

from collections import Counter

from sentrysim import SimConfig
from sentrysim.campaign import run_campaign
from sentrysim.corpus import corpus

for name, prog in sorted(corpus().items()):
    stats = run_campaign(SimConfig(), prog, 50, seed=1)
    print(f"--- {name} (golden exit {stats.golden_exit_code}, {stats.golden_cycles} cycles)")
    print(stats.summary())

# memory faults take a different path: ECC, not the vote
stats = run_campaign(SimConfig(), corpus()["sortdiv"], 50, seed=2, targets=["mem_bit"], mode="free", n_faults=3)
print(Counter(r.outcome for r in stats.runs))
