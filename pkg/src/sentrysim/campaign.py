"""Fault-injection campaigns: schedules, golden reference, outcome classification.

A campaign runs the same program many times, each with its own seeded fault
schedule, and compares every run against one fault-free single-core golden
run. Every resynchronisation is also checked against the golden architectural
state at the same retired-instruction count.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import csrs
from .asm import Program
from .bus import MASK32
from .ecc import CODE_BITS
from .soc import SimConfig, Soc, load_image
from .tcls import RESYNC_BUDGET, resync_cost

SCHEMA_VERSION = 1
OUTCOMES = ("masked", "ecc_corrected", "tcls_recovered", "uncorrectable", "silent_corruption", "timeout")
TARGETS = ("core_reg", "core_pc", "mem_bit")
CORE_TARGETS = ("core_reg", "core_pc")
SINGLE_FAULT_GAP = RESYNC_BUDGET + 100

# CSRs compared against the golden run after recovery; the cycle counter is left
# out because recovery and bus stalls legitimately advance it.
_CHECKED_CSRS = tuple(n for n in csrs.RESYNC_SET if n != csrs.MCYCLE)


@dataclass(frozen=True)
class FaultEvent:
    at_cycle: int
    target: str  # 'core_reg' | 'core_pc' | 'mem_bit'
    core: int = 0
    reg: int = 0
    mask: int = 0
    bank: str = "data"
    addr: int = 0
    bit: int = 0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"unknown fault target {self.target!r}")
        if self.at_cycle < 0:
            raise ValueError("fault cycle must be non-negative")
        if self.target in CORE_TARGETS:
            if not 0 <= self.core < 3 or not 0 <= self.reg < 32:
                raise ValueError("core fault outside core 0..2 / reg 0..31")
            if not 0 < self.mask <= MASK32:
                raise ValueError("core fault needs a non-zero 32-bit mask")
        elif not 0 <= self.bit < CODE_BITS:
            raise ValueError("memory fault bit outside the codeword")

    def to_dict(self) -> dict:
        d = {"at_cycle": self.at_cycle, "target": self.target}
        if self.target in CORE_TARGETS:
            d.update(core=self.core, mask=self.mask)
            if self.target == "core_reg":
                d["reg"] = self.reg
        else:
            d.update(bank=self.bank, addr=self.addr, bit=self.bit)
        return d


def gen_schedule(seed, n_faults: int, rates: Optional[Dict[str, float]] = None,
                 targets: Sequence[str] = CORE_TARGETS, *, horizon: int = 1000,
                 mode: str = "single", mem_words: Sequence[Tuple[str, int]] = (),
                 min_gap: int = SINGLE_FAULT_GAP) -> List[FaultEvent]:
    """Draw ``n_faults`` events in ``[0, horizon)``, sorted by cycle.

    ``rates`` weights the target kinds. In ``"single"`` mode consecutive events
    are at least ``min_gap`` cycles apart, so a recovery never overlaps a
    second fault. ``"double_mem"`` mode draws pairs of flips into one word.
    ``mem_words`` lists candidate ``(bank, addr)`` words for memory targets.
    """
    if n_faults < 0:
        raise ValueError("n_faults must be >= 0")
    targets = list(dict.fromkeys(targets))
    if not targets:
        raise ValueError("empty fault target set")
    for t in targets:
        if t not in TARGETS:
            raise ValueError(f"unknown fault target {t!r}")
    if mode not in ("single", "free", "double_mem"):
        raise ValueError(f"unknown schedule mode {mode!r}")
    if ("mem_bit" in targets or mode == "double_mem") and not mem_words:
        raise ValueError("memory targets need candidate words")
    rng = np.random.default_rng(seed)
    if n_faults == 0:
        return []

    if mode == "single":
        span = horizon - (n_faults - 1) * min_gap
        if span <= 0:
            raise ValueError(f"{n_faults} faults do not fit {horizon} cycles with gap {min_gap}")
        base = np.sort(rng.integers(0, span, n_faults))
        cycles = [int(b) + k * min_gap for k, b in enumerate(base)]
    else:
        cycles = sorted(int(c) for c in rng.integers(0, horizon, n_faults))

    if mode == "double_mem":
        events = []
        for cyc in cycles:
            bank, addr = mem_words[int(rng.integers(len(mem_words)))]
            b1, b2 = (int(b) for b in rng.choice(CODE_BITS, 2, replace=False))
            events += [FaultEvent(cyc, "mem_bit", bank=bank, addr=addr, bit=b1),
                       FaultEvent(cyc, "mem_bit", bank=bank, addr=addr, bit=b2)]
        return events

    w = np.array([float((rates or {}).get(t, 1.0)) for t in targets])
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("fault rates must be non-negative and not all zero")
    kinds = rng.choice(len(targets), n_faults, p=w / w.sum())
    events = []
    for cyc, k in zip(cycles, kinds):
        kind = targets[int(k)]
        if kind == "mem_bit":
            bank, addr = mem_words[int(rng.integers(len(mem_words)))]
            events.append(FaultEvent(cyc, kind, bank=bank, addr=addr, bit=int(rng.integers(CODE_BITS))))
        else:
            core = int(rng.integers(3))
            mask = 1 << int(rng.integers(32))
            reg = int(rng.integers(1, 32)) if kind == "core_reg" else 0
            events.append(FaultEvent(cyc, kind, core=core, reg=reg, mask=mask))
    return events


# ---------------------------------------------------------------------------
# Golden reference
# ---------------------------------------------------------------------------

def _arch_state(core) -> tuple:
    return (core.pc, tuple(core.xregs), core.priv_irq_level,
            tuple(core.csrs[n] for n in _CHECKED_CSRS if n != csrs.MINTSTATUS))


@dataclass
class Golden:
    exit_code: Optional[int]
    status: str
    cycles: int
    image: Dict[str, bytes]
    states: Dict[int, tuple]  # minstret -> architectural state after that step


def _output_image(soc: Soc) -> Dict[str, bytes]:
    img = soc.memory_image()
    keep = soc.config.resync_region_base - soc.config.data_base
    img["data"] = img["data"][:keep]
    return img


def golden_run(config: SimConfig, program) -> Golden:
    """Fault-free single-core reference run."""
    soc = Soc(replace(config, lockstep=False))
    load_image(soc, program)
    states: Dict[int, tuple] = {}

    def snap(s, v):
        core = s.cores[0]
        states[core.csrs[csrs.MINSTRET]] = _arch_state(core)

    soc.on_step = snap
    res = soc.run()
    if res.status != "exit":
        raise RuntimeError(f"golden run did not exit cleanly: {res.status} {res.detail}")
    return Golden(res.exit_code, res.status, res.cycles, _output_image(soc), states)


def memory_words(config: SimConfig, program) -> List[Tuple[str, int]]:
    """Candidate memory-fault words: everything the loaded image occupies."""
    soc = Soc(config)
    load_image(soc, program)
    out = []
    for bank in (soc.instr, soc.data):
        for i in np.flatnonzero(bank.codewords()):
            out.append((bank.name, bank.base + 4 * int(i)))
    if isinstance(program, Program) and program.data:
        n = (len(program.data) + 3) // 4
        out += [("data", program.data_base + 4 * i) for i in range(n)]
    return sorted(set(out), key=lambda w: (w[0], w[1]))


# ---------------------------------------------------------------------------
# Single run + classification
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    index: int
    seed: int
    events: List[dict]
    outcome: str
    status: str
    exit_code: Optional[int]
    cycles: int
    resync_durations: List[int]
    resync_formula: List[int]
    recovery_checks: int
    recovery_failures: int
    detections: Dict[str, int]
    output_matches: bool


def classify_outcome(run: dict, golden: Golden) -> str:
    """Label a finished run.

    ``run`` holds ``status``, ``exit_code``, ``image`` and ``detections``
    (counter name -> count). Wrong output without any detection event is the
    only path to ``silent_corruption``.
    """
    if run["status"] == "uncorrectable":
        return "uncorrectable"
    if run["status"] == "timeout":
        return "timeout"
    det = run["detections"]
    correct = run["exit_code"] == golden.exit_code and run["image"] == golden.image
    detected = any(det.values())
    if det.get("ecc_uncorrectable") or det.get("vote_uncorrectable") or det.get("residual_uncorrectable"):
        return "uncorrectable"
    if not correct:
        label = "uncorrectable" if detected else "silent_corruption"
        assert not (label == "silent_corruption" and detected)
        return label
    if det.get("resyncs"):
        return "tcls_recovered"
    if det.get("ecc_corrected"):
        return "ecc_corrected"
    return "masked"


def run_one(config: SimConfig, program, golden: Golden, events: Sequence[FaultEvent],
            index: int = 0, seed: int = 0) -> RunRecord:
    soc = Soc(config)
    load_image(soc, program)
    soc.schedule_faults(events)
    checks = fails = 0

    def on_resync(s):
        nonlocal checks, fails
        core = s.cores[0]
        checks += 1
        want = golden.states.get(core.csrs[csrs.MINSTRET])
        if any(_arch_state(c) != want for c in s.cores):
            fails += 1

    soc.on_resync = on_resync
    res = soc.run(max_cycles=config.max_cycles)
    c = res.counters
    residual = sum(int((bank.image()[1] == 2).sum()) for bank in (soc.instr, soc.data))
    det = {
        "mismatches": c["mismatch_count"],
        "resyncs": c["resync_count"],
        "ecc_corrected": c["ecc_corrected"] + c["ecc_scrubbed"],
        "ecc_uncorrectable": c["ecc_uncorrectable"],
        "vote_uncorrectable": c["vote_uncorrectable"],
        "residual_uncorrectable": residual,
    }
    image = _output_image(soc) if res.status == "exit" else {}
    outcome = classify_outcome({"status": res.status, "exit_code": res.exit_code,
                                "image": image, "detections": det}, golden)
    ens = soc.ensemble
    n_words = ens.resync_words if ens else 0
    formula = [resync_cost(n_words, config.mem_latency, config.resync_reset_overhead)
               for _ in c["resync_durations"]]
    return RunRecord(index, seed, [e.to_dict() for e in events], outcome, res.status, res.exit_code,
                     res.cycles, c["resync_durations"], formula, checks, fails, det,
                     res.status == "exit" and res.exit_code == golden.exit_code and image == golden.image)


# ---------------------------------------------------------------------------
# Campaign
# ---------------------------------------------------------------------------

@dataclass
class CampaignStats:
    seed: int
    total_runs: int
    counts: Dict[str, int] = field(default_factory=lambda: {k: 0 for k in OUTCOMES})
    resync_histogram: Dict[int, int] = field(default_factory=dict)
    max_resync: int = 0
    resync_formula_mismatches: int = 0
    recovery_checks: int = 0
    recovery_failures: int = 0
    golden_exit_code: Optional[int] = None
    golden_cycles: int = 0
    runs: List[RunRecord] = field(default_factory=list)

    def to_dict(self, include_runs: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "total_runs": self.total_runs,
            "counts": self.counts,
            "resync_histogram": {str(k): v for k, v in sorted(self.resync_histogram.items())},
            "max_resync": self.max_resync,
            "resync_budget": RESYNC_BUDGET,
            "resync_formula_mismatches": self.resync_formula_mismatches,
            "recovery_checks": self.recovery_checks,
            "recovery_failures": self.recovery_failures,
            "golden": {"exit_code": self.golden_exit_code, "cycles": self.golden_cycles},
        }
        if include_runs:
            d["runs"] = [asdict(r) for r in self.runs]
        return d

    def to_json(self, include_runs: bool = True) -> str:
        return json.dumps(self.to_dict(include_runs), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        rows = [f"{'outcome':<18}{'runs':>8}"]
        rows += [f"{k:<18}{self.counts[k]:>8}" for k in OUTCOMES]
        rows.append(f"{'total':<18}{self.total_runs:>8}")
        if self.resync_histogram:
            hist = ", ".join(f"{k}:{v}" for k, v in sorted(self.resync_histogram.items()))
            rows.append(f"resync cycles {{{hist}}} (max {self.max_resync}, budget {RESYNC_BUDGET})")
        rows.append(f"recovery state checks {self.recovery_checks}, failures {self.recovery_failures}")
        return "\n".join(rows)


def run_seed(seed: int, index: int) -> int:
    """Per-run seed derived from the campaign seed and run index."""
    return int(np.random.SeedSequence([seed & MASK32, index]).generate_state(1)[0])


def _job(args):
    config, program, golden, events, i, s = args
    return run_one(config, program, golden, events, i, s)


def run_campaign(config: SimConfig, program, n_runs: int, seed: int = 0, *,
                 targets: Sequence[str] = CORE_TARGETS, rates: Optional[Dict[str, float]] = None,
                 mode: str = "single", n_faults: int = 1, workers: int = 1,
                 keep_runs: bool = True) -> CampaignStats:
    """Golden run, then ``n_runs`` faulty runs; aggregate per-outcome counts."""
    if n_runs < 0:
        raise ValueError("n_runs must be >= 0")
    golden = golden_run(config, program)
    needs_mem = "mem_bit" in targets or mode == "double_mem"
    words = memory_words(config, program) if needs_mem else []
    horizon = golden.cycles
    if mode == "single":
        # leave room for the gaps; the last fault still lands inside the run
        horizon = max(golden.cycles, (n_faults - 1) * SINGLE_FAULT_GAP + golden.cycles)
    jobs = []
    for i in range(n_runs):
        s = run_seed(seed, i)
        events = gen_schedule(s, n_faults, rates, targets, horizon=horizon, mode=mode, mem_words=words)
        jobs.append((config, program, golden, events, i, s))
    if workers > 1 and n_runs > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_job, jobs, chunksize=max(1, n_runs // (4 * workers))))
    else:
        records = [_job(j) for j in jobs]
    return aggregate(records, seed, golden, keep_runs)


def aggregate(records: Sequence[RunRecord], seed: int, golden: Golden, keep_runs: bool = True) -> CampaignStats:
    st = CampaignStats(seed, len(records), golden_exit_code=golden.exit_code, golden_cycles=golden.cycles)
    hist: Counter = Counter()
    for r in records:
        st.counts[r.outcome] += 1
        hist.update(r.resync_durations)
        st.resync_formula_mismatches += sum(a != b for a, b in zip(r.resync_durations, r.resync_formula))
        st.recovery_checks += r.recovery_checks
        st.recovery_failures += r.recovery_failures
    st.resync_histogram = dict(sorted(hist.items()))
    st.max_resync = max(hist, default=0)
    if keep_runs:
        st.runs = list(records)
    assert sum(st.counts.values()) == st.total_runs
    return st


# ---------------------------------------------------------------------------
# Campaign config files
# ---------------------------------------------------------------------------

_CAMPAIGN_KEYS = {"program", "n_runs", "seed", "targets", "rates", "mode", "n_faults", "workers", "sim"}


def load_campaign_config(path: Union[str, Path]) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml
        d = yaml.safe_load(text) or {}
    else:
        d = json.loads(text)
    if not isinstance(d, dict):
        raise ValueError("campaign config must hold a mapping")
    unknown = set(d) - _CAMPAIGN_KEYS
    if unknown:
        raise ValueError(f"unknown campaign keys: {sorted(unknown)}")
    return d
