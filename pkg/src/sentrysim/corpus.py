"""Built-in firmware: the three-program test corpus plus bench and demo images.

Corpus programs are interrupt-free and leave their result both in a ``result``
word of the data bank and in the exit code, so a run can be judged by its final
memory image as well as its exit status.
"""

from __future__ import annotations

from typing import Dict

from .asm import Program, assemble

CRC32 = """
# bitwise CRC-32 (reflected, poly 0xEDB88320) over 16 bytes of data
    la   s0, msg
    li   s1, 16
    li   a0, -1
    li   s2, 0xEDB88320
byte:
    lbu  t0, 0(s0)
    xor  a0, a0, t0
    li   t1, 8
bit:
    andi t2, a0, 1
    srli a0, a0, 1
    beqz t2, skip
    xor  a0, a0, s2
skip:
    addi t1, t1, -1
    bnez t1, bit
    addi s0, s0, 1
    addi s1, s1, -1
    bnez s1, byte
    not  a0, a0
    la   t0, result
    sw   a0, 0(t0)
    andi a0, a0, 0xff
    li   a7, 93
    ecall
.data
msg:    .byte 0x31, 0x32, 0x33, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x61, 0x62, 0x63, 0x64, 0x65, 0x66, 0x67
result: .word 0
"""

MATMUL = """
# C = A * B for 4x4 signed words, then fold C into a checksum
    la   s0, mat_a
    la   s1, mat_b
    la   s2, mat_c
    li   s3, 0              # i
row:
    li   s4, 0              # j
col:
    li   t0, 0              # acc
    li   t1, 0              # k
dot:
    slli t2, s3, 4
    slli t3, t1, 2
    add  t2, t2, t3
    add  t2, t2, s0
    lw   t4, 0(t2)          # A[i][k]
    slli t2, t1, 4
    slli t3, s4, 2
    add  t2, t2, t3
    add  t2, t2, s1
    lw   t5, 0(t2)          # B[k][j]
    mul  t6, t4, t5
    add  t0, t0, t6
    addi t1, t1, 1
    li   t2, 4
    blt  t1, t2, dot
    slli t2, s3, 4
    slli t3, s4, 2
    add  t2, t2, t3
    add  t2, t2, s2
    sw   t0, 0(t2)
    addi s4, s4, 1
    li   t2, 4
    blt  s4, t2, col
    addi s3, s3, 1
    blt  s3, t2, row
    li   a0, 0
    li   t1, 16
    mv   t2, s2
fold:
    lw   t3, 0(t2)
    slli t4, a0, 5
    srli a0, a0, 27
    or   a0, a0, t4
    xor  a0, a0, t3
    addi t2, t2, 4
    addi t1, t1, -1
    bnez t1, fold
    la   t0, result
    sw   a0, 0(t0)
    andi a0, a0, 0x7f
    li   a7, 93
    ecall
.data
mat_a:  .word 3, -1, 4, 1, 5, 9, -2, 6, 5, 3, 5, -8, 9, 7, 9, 3
mat_b:  .word 2, 7, 1, -8, 2, 8, 1, 8, -2, 8, 4, 5, 9, 0, 4, 5
mat_c:  .space 64
result: .word 0
"""

SORTDIV = """
# insertion sort of 12 words, then a division/remainder digest
    la   s0, arr
    li   s1, 12
    li   t0, 1
outer:
    bge  t0, s1, sorted
    slli t1, t0, 2
    add  t1, t1, s0
    lw   t2, 0(t1)          # key
    addi t3, t0, -1
inner:
    bltz t3, place
    slli t4, t3, 2
    add  t4, t4, s0
    lw   t5, 0(t4)
    ble  t5, t2, place
    sw   t5, 4(t4)
    addi t3, t3, -1
    j    inner
place:
    slli t4, t3, 2
    add  t4, t4, s0
    sw   t2, 4(t4)
    addi t0, t0, 1
    j    outer
sorted:
    li   a0, 7
    li   t0, 0
digest:
    slli t1, t0, 2
    add  t1, t1, s0
    lw   t2, 0(t1)
    addi t3, t0, 3
    div  t4, t2, t3
    rem  t5, t2, t3
    mul  a0, a0, t3
    add  a0, a0, t4
    sub  a0, a0, t5
    addi t0, t0, 1
    blt  t0, s1, digest
    la   t0, result
    sw   a0, 0(t0)
    srai t1, a0, 16
    xor  a0, a0, t1
    andi a0, a0, 0x3f
    li   a7, 93
    ecall
.data
arr:    .word 901, -44, 17, 65000, -3, 250, 250, 0, -77777, 12, 8, 31337
result: .word 0
"""

CORPUS: Dict[str, str] = {"crc32": CRC32, "matmul": MATMUL, "sortdiv": SORTDIV}


def corpus_program(name: str) -> Program:
    return assemble(CORPUS[name])


def corpus() -> Dict[str, Program]:
    return {name: assemble(src) for name, src in CORPUS.items()}


# ---------------------------------------------------------------------------
# Interrupt bench: timer interrupts at level 1 (banked) nested by a level-2
# software-pended line while the bank is occupied (spilled to the stack).
# ---------------------------------------------------------------------------

IRQ_BENCH = """
.equ CLIC, 0x30000
.equ TIMER, 0x31000
    la   t0, trap
    csrw mtvec, t0
    li   s0, CLIC
    la   t0, vectors
    sw   t0, 4(s0)                  # vector table base
    li   t0, 0x01010100             # line 7: level 1, vectored, enabled
    sw   t0, 0x11c(s0)
    li   t0, 0x02010100             # line 9: level 2, vectored, enabled
    sw   t0, 0x124(s0)
    li   s1, TIMER
    sw   zero, 12(s1)               # compare hi
    li   t0, COMPARE
    sw   t0, 8(s1)                  # compare lo
    li   t0, 1
    sw   t0, 0x10(s1)               # enable
    csrsi mstatus, 8
wait:
    la   t0, done
    lw   t1, 0(t0)
    beqz t1, wait
    li   a0, 0
    li   a7, 93
    ecall

timer_isr:
    csrsi mstatus, 8                # allow nesting
    li   t0, 0x02010101             # pend line 9 from inside the level-1 handler
    li   t1, CLIC
    sw   t0, 0x124(t1)
    nop
    mret

soft_isr:
    la   t0, done
    li   t1, 1
    sw   t1, 0(t0)
    mret

trap:
    li   a0, 99
    li   a7, 93
    ecall

.data
.align 2
vectors:
    .word trap, trap, trap, trap, trap, trap, trap, timer_isr, trap, soft_isr
done: .word 0
"""


BENCH_COMPARE = 200


def irq_bench_program(compare: int = BENCH_COMPARE) -> Program:
    return assemble(IRQ_BENCH, symbols={"COMPARE": compare})


# ---------------------------------------------------------------------------
# DMA demo: a periodic 3-D job gathering a 4x3 tile out of a 8-word-wide
# frame, with a completion interrupt counting finished launches.
# ---------------------------------------------------------------------------

DMA_DEMO = """
.equ CLIC, 0x30000
.equ DMA, 0x32000
    la   t0, trap
    csrw mtvec, t0
    li   s0, CLIC
    la   t0, vectors
    sw   t0, 4(s0)
    li   t0, 0x01010100             # line 3: level 1, vectored, enabled
    sw   t0, 0x10c(s0)
    li   s1, DMA
    la   t0, frame
    sw   t0, 0x00(s1)               # src
    la   t0, tile
    sw   t0, 0x04(s1)               # dst
    li   t0, 4
    sw   t0, 0x08(s1)               # inner: 4 bytes
    li   t0, 3
    sw   t0, 0x0c(s1)               # reps1: 3 rows
    li   t0, 2
    sw   t0, 0x10(s1)               # reps2: 2 planes
    li   t0, 32
    sw   t0, 0x14(s1)               # src stride1: one frame row
    li   t0, 16
    sw   t0, 0x18(s1)               # src stride2: next tile column
    li   t0, 4
    sw   t0, 0x1c(s1)               # dst stride1
    li   t0, 12
    sw   t0, 0x20(s1)               # dst stride2
    li   t0, 0x80000003             # completion irq on line 3
    sw   t0, 0x24(s1)
    li   t0, START
    sw   t0, 0x2c(s1)
    li   t0, PERIOD
    sw   t0, 0x30(s1)
    li   t0, COUNT
    sw   t0, 0x34(s1)
    sw   zero, 0x38(s1)             # arm
    csrsi mstatus, 8
idle:
    wfi
    la   t0, count
    lw   t1, 0(t0)
    li   t2, COUNT
    blt  t1, t2, idle
    lw   a0, 0(t0)
    li   a7, 93
    ecall

done_isr:
    la   t0, count
    lw   t1, 0(t0)
    addi t1, t1, 1
    sw   t1, 0(t0)
    mret

trap:
    li   a0, 99
    li   a7, 93
    ecall

.data
.align 2
vectors: .word trap, trap, trap, done_isr
count:   .word 0
tile:    .space 24
frame:   .word 0x00010203, 0x04050607, 0x08090a0b, 0x0c0d0e0f, 0x10111213, 0x14151617, 0x18191a1b, 0x1c1d1e1f
         .word 0x20212223, 0x24252627, 0x28292a2b, 0x2c2d2e2f, 0x30313233, 0x34353637, 0x38393a3b, 0x3c3d3e3f
         .word 0x40414243, 0x44454647, 0x48494a4b, 0x4c4d4e4f, 0x50515253, 0x54555657, 0x58595a5b, 0x5c5d5e5f
         .word 0x60616263, 0x64656667, 0x68696a6b, 0x6c6d6e6f, 0x70717273, 0x74757677, 0x78797a7b, 0x7c7d7e7f
"""


def dma_demo_program(start: int = 200, period: int = 150, count: int = 4) -> Program:
    return assemble(DMA_DEMO, symbols={"START": start, "PERIOD": period, "COUNT": count})
