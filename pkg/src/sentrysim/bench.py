"""Interrupt-latency bench and DMA schedule demo drivers."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Optional

from .clic import interrupt_cost
from .corpus import BENCH_COMPARE, dma_demo_program, irq_bench_program
from .soc import RunResult, SimConfig, Soc


@dataclass
class IrqBenchReport:
    entry_latency: int  # accept -> first handler instruction, banked
    banked_exit: int
    banked_round_trip: int
    spilled_entry: int
    spilled_exit: int
    spilled_round_trip: int
    pend_to_handler: int  # timer fire -> first handler instruction
    model_banked_round_trip: int
    model_spilled_round_trip: int
    mem_latency: int
    status: str

    def to_dict(self) -> dict:
        return asdict(self)


def run_irq_bench(config: Optional[SimConfig] = None) -> IrqBenchReport:
    """Run the nested-interrupt firmware and time entries and exits from the retire stream."""
    cfg = config or SimConfig()
    soc = Soc(cfg)
    prog = irq_bench_program()
    soc.load_program(prog)
    steps: List[tuple] = []
    soc.on_step = lambda s, v: steps.append((s.cycle, v.result))
    res = soc.run()
    if res.status != "exit" or res.exit_code != 0:
        raise RuntimeError(f"irq bench firmware failed: {res.status} {res.exit_code}")

    entries, exits = [], []
    for k, (t, r) in enumerate(steps[:-1]):
        nxt = steps[k + 1][0]
        if r.irq is not None:
            entries.append(nxt - t)
        elif r.retired is not None and r.retired.op == "mret":
            exits.append(nxt - t)
    # entries: [banked timer, spilled nested]; exits: [spilled nested, banked timer]
    b_in, s_in = entries
    s_out, b_out = exits
    first_handler = next(steps[k + 1][0] for k, (_, r) in enumerate(steps) if r.irq is not None)
    lat = cfg.mem_latency
    return IrqBenchReport(
        entry_latency=b_in, banked_exit=b_out, banked_round_trip=b_in + b_out,
        spilled_entry=s_in, spilled_exit=s_out, spilled_round_trip=s_in + s_out,
        pend_to_handler=first_handler - BENCH_COMPARE,
        model_banked_round_trip=2 * interrupt_cost(True, lat, cfg.irq_fpu_words),
        model_spilled_round_trip=2 * interrupt_cost(False, lat, cfg.irq_fpu_words),
        mem_latency=lat, status=res.status)


def format_irq_report(rep: IrqBenchReport) -> str:
    verdict = "below" if rep.spilled_round_trip < 110 else "ABOVE"
    return "\n".join([
        f"mem_latency               {rep.mem_latency}",
        f"banked entry latency      {rep.entry_latency} cycles",
        f"banked exit latency       {rep.banked_exit} cycles",
        f"banked round trip         {rep.banked_round_trip} cycles",
        f"spilled entry latency     {rep.spilled_entry} cycles",
        f"spilled exit latency      {rep.spilled_exit} cycles",
        f"spilled round trip        {rep.spilled_round_trip} cycles ({verdict} the 110-cycle bound)",
        f"timer fire -> handler     {rep.pend_to_handler} cycles",
        f"cost model (banked/spill) {rep.model_banked_round_trip}/{rep.model_spilled_round_trip}",
    ])


@dataclass
class DmaDemoReport:
    start: int
    period: int
    count: int
    launches: List[int]
    completions: List[int]
    expected_launches: List[int]
    run: RunResult
    tile: bytes

    @property
    def on_schedule(self) -> bool:
        return self.launches == self.expected_launches

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tile"] = self.tile.hex()
        d["on_schedule"] = self.on_schedule
        return d


def run_dma_demo(config: Optional[SimConfig] = None, start: int = 200, period: int = 150,
                 count: int = 4) -> DmaDemoReport:
    soc = Soc(config or SimConfig())
    prog = dma_demo_program(start, period, count)
    soc.load_program(prog)
    res = soc.run()
    tile_addr = prog.symbols["tile"]
    tile = bytes(soc.data.peek(tile_addr - soc.data.base + i, 1) for i in range(24))
    return DmaDemoReport(start, period, count,
                         [r.launch_cycle for r in soc.dma.log],
                         [r.complete_cycle for r in soc.dma.log],
                         [start + k * period for k in range(count)], res, tile)


def format_dma_report(rep: DmaDemoReport) -> str:
    lines = ["k  expected  launched  completed"]
    for k, exp in enumerate(rep.expected_launches):
        got = rep.launches[k] if k < len(rep.launches) else None
        done = rep.completions[k] if k < len(rep.completions) else None
        lines.append(f"{k:<2} {exp:>8}  {got!s:>8}  {done!s:>9}")
    lines.append(f"on schedule: {'yes' if rep.on_schedule else 'no'}; "
                 f"guest exit {rep.run.exit_code} after {rep.run.cycles} cycles")
    lines.append(f"tile bytes: {rep.tile.hex()}")
    return "\n".join(lines)
