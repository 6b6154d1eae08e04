"""
Periodic 3-D DMA
================

The guest programs one strided job and asks the engine to relaunch it every
150 cycles, then idles in ``wfi`` until the completion interrupts have all
arrived.
"""

import numpy as np

from sentrysim import SimConfig
from sentrysim.bench import format_dma_report, run_dma_demo

rep = run_dma_demo(SimConfig(), start=200, period=150, count=4)
print(format_dma_report(rep))

# Launch jitter should be zero; latency is setup plus beats.
launches = np.array(rep.launches)
print("launch - expected:", launches - np.array(rep.expected_launches))
print("launch to completion:", np.array(rep.completions) - launches)

# The tile as a 2 x 3 x 4 byte block
print(np.frombuffer(rep.tile, dtype=np.uint8).reshape(2, 3, 4))
