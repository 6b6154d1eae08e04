"""Cycle-level simulator of a fault-tolerant RV32IM system-on-chip.

Three lockstepped cores with majority voting and state resynchronisation,
SEC-DED protected memory banks with scrubbing, a level-based interrupt
controller with a banked fast-interrupt context, and a scheduled 3-D DMA
engine, plus a fault-injection campaign driver.
"""

from .asm import Program, assemble
from .campaign import CampaignStats, FaultEvent, classify_outcome, gen_schedule, run_campaign
from .ecc import MemoryBank, ecc_decode, ecc_encode
from .isa import CoreState, decode, execute_step
from .soc import MemoryMap, RunResult, SimConfig, Soc, decode_addr, load_image, run
from .tcls import LockstepEnsemble, lockstep_step, resync_cost, vote3

__version__ = "0.1.0"

__all__ = [
    "CampaignStats", "CoreState", "FaultEvent", "LockstepEnsemble", "MemoryBank", "MemoryMap",
    "Program", "RunResult", "SimConfig", "Soc", "assemble", "classify_outcome", "decode",
    "decode_addr", "ecc_decode", "ecc_encode", "execute_step", "gen_schedule", "load_image",
    "lockstep_step", "resync_cost", "run", "run_campaign", "vote3",
]
