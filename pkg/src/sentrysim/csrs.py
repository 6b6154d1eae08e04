"""Implemented machine-mode CSR subset.

Anything not listed here traps as an illegal instruction.
"""

MSTATUS = 0x300
MISA = 0x301
MTVEC = 0x305
MINTTHRESH = 0x347
MSCRATCH = 0x340
MEPC = 0x341
MCAUSE = 0x342
MTVAL = 0x343
MCYCLE = 0xB00
MINSTRET = 0xB02
CYCLE = 0xC00
INSTRET = 0xC02
MHARTID = 0xF14
MINTSTATUS = 0xFB1

MSTATUS_MIE = 1 << 3
MSTATUS_MPIE = 1 << 7
MSTATUS_MPP = 3 << 11
MSTATUS_WMASK = MSTATUS_MIE | MSTATUS_MPIE

MISA_RV32IM = (1 << 30) | (1 << 8) | (1 << 12)

NAMES = {
    MSTATUS: "mstatus", MISA: "misa", MTVEC: "mtvec", MINTTHRESH: "mintthresh",
    MSCRATCH: "mscratch", MEPC: "mepc", MCAUSE: "mcause", MTVAL: "mtval",
    MCYCLE: "mcycle", MINSTRET: "minstret", CYCLE: "cycle", INSTRET: "instret",
    MHARTID: "mhartid", MINTSTATUS: "mintstatus",
}

# Stored (writable) CSRs and their reset values. mintstatus is derived from the
# core's running interrupt level; misa/mhartid are constants; cycle/instret alias.
RESET_VALUES = {
    MSTATUS: MSTATUS_MPP,
    MTVEC: 0,
    MINTTHRESH: 0,
    MSCRATCH: 0,
    MEPC: 0,
    MCAUSE: 0,
    MTVAL: 0,
    MCYCLE: 0,
    MINSTRET: 0,
}

READ_ONLY = {MISA, MHARTID, MINTSTATUS, CYCLE, INSTRET}

# The ten CSR words the lockstep recovery sequence saves and restores.
# Index 1 (mintstatus) carries the running interrupt level.
RESYNC_SET = (MSTATUS, MINTSTATUS, MINTTHRESH, MTVEC, MEPC, MCAUSE, MTVAL, MSCRATCH, MCYCLE, MINSTRET)
