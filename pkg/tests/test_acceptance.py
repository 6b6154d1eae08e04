"""End-to-end acceptance suite.

Each test prints one ``criterion N: PASS|FAIL ...`` line; the lines are also
collected and repeated in the terminal summary (see conftest.py).
"""

import random
import sys
import time

import pytest

from oracles import dma_triple_loop
from sentrysim.asm import assemble
from sentrysim.bench import run_dma_demo, run_irq_bench
from sentrysim.campaign import FaultEvent, run_campaign
from sentrysim.cli import ecc_selftest, main
from sentrysim.corpus import corpus
from sentrysim.dma import DmaEngineState, DmaJob, DmaSchedule, dma_cycle, schedule_tick
from sentrysim.soc import SimConfig, Soc
from sentrysim.tcls import RESYNC_BUDGET, resync_cost

RESULTS = []
RUNS_PER_PROGRAM = 334  # 3 programs -> 1002 injections


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def core_campaign():
    t0 = time.perf_counter()
    stats = {name: run_campaign(SimConfig(), prog, RUNS_PER_PROGRAM, seed=2024)
             for name, prog in sorted(corpus().items())}
    return stats, time.perf_counter() - t0


def test_criterion_1_resync_budget(core_campaign):
    stats, elapsed = core_campaign
    runs = [r for s in stats.values() for r in s.runs]
    durations = [d for r in runs for d in r.resync_durations]
    formula = resync_cost(SimConfig().resync_state_words, 1, 20)
    exact = all(r.resync_durations == r.resync_formula for r in runs) and set(durations) == {formula}
    ok = (len(runs) >= 1000 and durations and max(durations) <= RESYNC_BUDGET and exact
          and elapsed < 120)
    report(1, ok, f"{len(runs)} injections, {len(durations)} resyncs, max {max(durations, default=0)} "
                  f"cycles (formula {formula}, budget {RESYNC_BUDGET}), {elapsed:.1f}s")


def test_criterion_2_recovery_state(core_campaign):
    stats, _ = core_campaign
    runs = [r for s in stats.values() for r in s.runs]
    checks = sum(r.recovery_checks for r in runs)
    fails = sum(r.recovery_failures for r in runs)
    bad_out = [r.index for r in runs if not r.output_matches]
    outcomes = {}
    for r in runs:
        outcomes[r.outcome] = outcomes.get(r.outcome, 0) + 1
    ok = checks > 0 and fails == 0 and not bad_out
    report(2, ok, f"{checks} post-resync state checks, {fails} mismatches, "
                  f"{len(bad_out)} runs with wrong output; outcomes {dict(sorted(outcomes.items()))}")


def test_criterion_3_irq_latency():
    rep = run_irq_bench(SimConfig())
    ok = rep.entry_latency == 6 and rep.spilled_round_trip < 110
    report(3, ok, f"banked entry {rep.entry_latency} cycles, spilled save+restore "
                  f"{rep.spilled_round_trip} cycles (< 110)")


def test_criterion_4_ecc_exhaustive():
    t0 = time.perf_counter()
    res = ecc_selftest(256, seed=99)
    fails = [w for w, s, d in res["words"] if s != 39 or d != 741]
    ok = len(res["words"]) >= 256 and res["single_total"] == 39 and res["double_total"] == 741 and not fails
    report(4, ok, f"{len(res['words'])} words x (39 single + 741 double) flips, {len(fails)} failures, "
                  f"{time.perf_counter() - t0:.2f}s")


SCRUB_GUEST = """
.equ CLIC, 0x30000
.equ TIMER, 0x31000
    li   s0, CLIC
    li   t0, 0x01000100             # timer line 7: enabled, level 1, no interrupt taken (MIE off)
    sw   t0, 0x11c(s0)
    li   s1, TIMER
    sw   zero, 12(s1)
    li   t0, WAKE
    sw   t0, 8(s1)
    li   t0, 1
    sw   t0, 0x10(s1)
    wfi
    la   t0, val
    lw   t1, 0(t0)
    li   t2, 0x5eed1234
    sub  a0, t1, t2
    snez a0, a0
    li   a7, 93
    ecall
.data
val: .word 0x5eed1234
"""


def _scrub_run(enabled):
    cfg = SimConfig(data_size=4096, scrub_enabled=enabled)
    sweep = (cfg.data_size // 4) * cfg.scrub_interval
    first = 500
    second = first + sweep + 1000
    wake = second + sweep + 1000
    prog = assemble(SCRUB_GUEST.replace("WAKE", str(wake)))
    soc = Soc(cfg)
    soc.load_program(prog)
    addr = prog.symbols["val"]
    soc.schedule_faults([FaultEvent(first, "mem_bit", bank="data", addr=addr, bit=5),
                         FaultEvent(second, "mem_bit", bank="data", addr=addr, bit=17)])
    r = soc.run(max_cycles=4 * wake)
    return r, sweep, second - first


def test_criterion_5_scrubber():
    on, sweep, gap = _scrub_run(True)
    off, _, _ = _scrub_run(False)
    unc_on = on.counters["ecc_uncorrectable"]
    unc_off = off.counters["ecc_uncorrectable"]
    ok = (gap > sweep and unc_on == 0 and on.status == "exit" and on.exit_code == 0
          and on.counters["ecc_scrubbed"] >= 1 and unc_off >= 1)
    report(5, ok, f"flips {gap} cycles apart (sweep {sweep}); scrub on: {unc_on} uncorrectable, "
                  f"{on.counters['ecc_scrubbed']} scrubbed; scrub off: {unc_off} uncorrectable ({off.status})")


def test_criterion_6_lockstep_transparency():
    diffs = {}
    for name, prog in sorted(corpus().items()):
        traces = []
        for lockstep in (True, False):
            soc = Soc(SimConfig(lockstep=lockstep))
            soc.load_program(prog)
            res = soc.run(trace=True)
            traces.append((soc.trace, res.exit_code, res.cycles, res.instret))
        diffs[name] = traces[0] == traces[1] and len(traces[0][0]) > 100
    report(6, all(diffs.values()), f"lockstep vs single-core traces identical: {diffs}")


class _Mem:
    def __init__(self, size):
        self.mem = bytearray(size)

    def mapped(self, addr, n):
        return 0 <= addr and addr + n <= len(self.mem)

    def read(self, addr, width):
        return int.from_bytes(self.mem[addr:addr + width], "little")

    def write(self, addr, width, value):
        self.mem[addr:addr + width] = value.to_bytes(width, "little")


def _random_job(rng):
    inner, r1, r2 = rng.randint(1, 16), rng.randint(1, 6), rng.randint(1, 4)
    strides = [rng.randint(-64, 64), rng.randint(-256, 256), rng.randint(-64, 64), rng.randint(-256, 256)]

    def base(s1, s2, lo):
        offs = [i2 * s2 + i1 * s1 for i2 in range(r2) for i1 in range(r1)]
        span = max(offs) - min(offs) + inner
        return lo - min(offs) + rng.randint(0, 4096 - span)

    src = base(strides[0], strides[1], 0)
    dst = base(strides[2], strides[3], 4096)
    return DmaJob(src, dst, inner, r1, r2, *strides)


def test_criterion_7_dma():
    rng = random.Random(7)
    mismatches = 0
    for _ in range(1000):
        job = _random_job(rng)
        bus = _Mem(8192)
        bus.mem[:4096] = rng.randbytes(4096)
        ref = bytearray(bus.mem)
        dma_triple_loop(ref, job.src_base, job.dst_base, job.inner_len, job.reps1, job.reps2,
                        job.src_stride1, job.src_stride2, job.dst_stride1, job.dst_stride2)
        e = DmaEngineState()
        e.submit(job, 0)
        t = 0
        while e.queue:
            dma_cycle(e, bus, None, t)
            t += 1
        mismatches += bus.mem != ref or e.completed_count != 1
    sched_ok = True
    for start, period, count in [(1000, 500, 3), (7, 13, 20), (0, 1, 5), (123456, 999, 4)]:
        e = DmaEngineState(queue_depth=64)
        e.add_schedule(DmaSchedule(DmaJob(0, 64, 4), start, period, count))
        got = [t for t in range(start + period * count + 10) if schedule_tick(e, t)]
        sched_ok &= got == [start + k * period for k in range(count)]
    demo = run_dma_demo(SimConfig(), 200, 150, 4)
    sched_ok &= demo.on_schedule and demo.run.status == "exit"
    report(7, mismatches == 0 and sched_ok,
           f"1000 random 3-D jobs, {mismatches} oracle mismatches; periodic launches exact: {sched_ok} "
           f"(in-SoC launches {demo.launches})")


def _cli_bytes(tmp_path, tag, argv, capsys):
    out = tmp_path / f"{tag}.json"
    code = main(argv + ["-o", str(out)])
    text = capsys.readouterr().out
    return code, out.read_bytes(), text


def test_criterion_8_determinism(tmp_path, capsys):
    same = {}
    for tag, argv in [("run", ["run", "--image", "matmul"]),
                      ("campaign", ["campaign", "--program", "crc32", "--runs", "20", "--seed", "1"]),
                      ("irq", ["irq-bench"]),
                      ("dma", ["dma-demo"]),
                      ("ecc", ["ecc-selftest", "--words", "16", "--seed", "3"])]:
        outs = []
        for k in range(2):
            extra = ["--trace", str(tmp_path / f"{tag}{k}.trc")] if tag == "run" else []
            if tag == "ecc":
                code = main(argv)
                outs.append((code, capsys.readouterr().out))
                continue
            code, blob, text = _cli_bytes(tmp_path, f"{tag}{k}", argv + extra, capsys)
            trc = (tmp_path / f"{tag}{k}.trc").read_bytes() if tag == "run" else b""
            outs.append((code, blob, text, trc))
        same[tag] = outs[0] == outs[1]
    report(8, all(same.values()), f"byte-identical repeats: {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
