"""Command-line front end.

Exit status: 0 guest success, 1 guest nonzero exit (or failed self-test),
2 usage/config error, 3 timeout, 4 uncorrectable-fault termination.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import bench, campaign, corpus
from .asm import AsmError, assemble
from .ecc import CODE_BITS, decode_array, encode_array
from .soc import LoadError, SimConfig, Soc, load_config, load_image

EXIT_OK, EXIT_GUEST, EXIT_USAGE, EXIT_TIMEOUT, EXIT_UNCORRECTABLE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SENTRYSIM_SEED")
    if env is None:
        return 0
    try:
        return int(env, 0)
    except ValueError:
        raise UsageError(f"SENTRYSIM_SEED is not an integer: {env!r}") from None


def _sim_config(args, **extra) -> SimConfig:
    try:
        return load_config(getattr(args, "config", None), max_cycles=getattr(args, "max_cycles", None),
                           seed=_seed(args), **extra)
    except (OSError, ValueError, TypeError) as e:
        raise UsageError(f"bad config: {e}") from None


def _program(name: str):
    """Corpus name, assembly source (.s/.S), or a flat/ELF image path."""
    if name in corpus.CORPUS:
        return corpus.corpus_program(name)
    p = Path(name)
    if not p.is_file():
        raise UsageError(f"no such program or corpus entry: {name}")
    if p.suffix in (".s", ".S", ".asm"):
        try:
            return assemble(p.read_text())
        except AsmError as e:
            raise UsageError(f"{name}: {e}") from None
    return p


def _write(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _fault_file(path: str) -> List[campaign.FaultEvent]:
    """JSON list of fault events, or a campaign report's ``events`` list."""
    try:
        d = json.loads(Path(path).read_text())
        if isinstance(d, dict):
            d = d["events"]
        return [campaign.FaultEvent(**e) for e in d]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"bad fault file {path}: {e}") from None


def cmd_run(args) -> int:
    cfg = _sim_config(args)
    soc = Soc(cfg)
    try:
        load_image(soc, _program(args.image), args.format)
    except LoadError as e:
        raise UsageError(str(e)) from None
    if args.faults:
        soc.schedule_faults(_fault_file(args.faults))
    res = soc.run(trace=args.trace is not None)
    if args.trace is not None:
        soc.write_trace(args.trace)
    c = res.counters
    print(f"status {res.status}")
    print(f"exit_code {res.exit_code}")
    print(f"cycles {res.cycles}")
    print(f"instret {res.instret}")
    print(f"mismatches {c['mismatch_count']} resyncs {c['resync_count']} "
          f"ecc_corrected {c['ecc_corrected'] + c['ecc_scrubbed']} ecc_uncorrectable {c['ecc_uncorrectable']}")
    if res.detail:
        print(f"detail {res.detail}")
    if args.output:
        Path(args.output).write_text(json.dumps({"schema_version": campaign.SCHEMA_VERSION, **res.to_dict()},
                                                indent=2, sort_keys=True) + "\n")
    if res.status == "timeout":
        return EXIT_TIMEOUT
    if res.status == "uncorrectable":
        return EXIT_UNCORRECTABLE
    return EXIT_OK if res.exit_code == 0 else EXIT_GUEST


def cmd_campaign(args) -> int:
    conf = {}
    if args.config:
        try:
            conf = campaign.load_campaign_config(args.config)
        except (OSError, ValueError) as e:
            raise UsageError(f"bad campaign config: {e}") from None
    try:
        sim = SimConfig.from_dict({**conf.get("sim", {}),
                                   **({"max_cycles": args.max_cycles} if args.max_cycles else {})})
    except (ValueError, TypeError) as e:
        raise UsageError(f"bad sim config: {e}") from None
    seed = args.seed if args.seed is not None else conf.get("seed")
    if seed is None:
        seed = _seed(args)
    targets = args.targets.split(",") if args.targets else conf.get("targets", list(campaign.CORE_TARGETS))
    program = _program(args.program or conf.get("program", "crc32"))
    try:
        st = campaign.run_campaign(
            sim, program, args.runs if args.runs is not None else conf.get("n_runs", 100), seed,
            targets=targets, rates=conf.get("rates"), mode=args.mode or conf.get("mode", "single"),
            n_faults=args.faults if args.faults is not None else conf.get("n_faults", 1),
            workers=args.workers or conf.get("workers", 1))
    except ValueError as e:
        raise UsageError(str(e)) from None
    print(st.summary())
    if args.output:
        text = st.to_json()
        if args.timestamps:
            d = json.loads(text)
            d["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
            text = json.dumps(d, indent=2, sort_keys=True) + "\n"
        _write(args.output, text)
    if st.counts["silent_corruption"] or st.recovery_failures:
        return EXIT_GUEST
    return EXIT_OK


def cmd_irq_bench(args) -> int:
    rep = bench.run_irq_bench(_sim_config(args))
    print(bench.format_irq_report(rep))
    if args.output:
        _write(args.output, json.dumps({"schema_version": campaign.SCHEMA_VERSION, **rep.to_dict()},
                                       indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_dma_demo(args) -> int:
    rep = bench.run_dma_demo(_sim_config(args), args.start, args.period, args.count)
    print(bench.format_dma_report(rep))
    if args.output:
        _write(args.output, json.dumps({"schema_version": campaign.SCHEMA_VERSION, **rep.to_dict()},
                                       indent=2, sort_keys=True, default=str) + "\n")
    return EXIT_OK if rep.on_schedule and rep.run.status == "exit" else EXIT_GUEST


def ecc_selftest(n_words: int, seed: int) -> dict:
    """Exhaustive single/double flip sweep over ``n_words`` random data words."""
    rng = np.random.default_rng(seed)
    words = rng.integers(0, 1 << 32, n_words, dtype=np.uint64)
    cw = encode_array(words)
    singles = (np.uint64(1) << np.arange(CODE_BITS, dtype=np.uint64))
    i, j = np.triu_indices(CODE_BITS, 1)
    doubles = (np.uint64(1) << i.astype(np.uint64)) | (np.uint64(1) << j.astype(np.uint64))
    per_word = []
    for w, c in zip(words, cw):
        d1, k1, _ = decode_array(c ^ singles)
        d2, k2, _ = decode_array(c ^ doubles)
        per_word.append((int(w), int(((d1 == w) & (k1 == 1)).sum()), int((k2 == 2).sum())))
    return {"words": per_word, "single_total": len(singles), "double_total": len(doubles)}


def cmd_ecc_selftest(args) -> int:
    res = ecc_selftest(args.words, _seed(args))
    s_tot, d_tot = res["single_total"], res["double_total"]
    fails = 0
    for w, s_ok, d_ok in res["words"]:
        ok = s_ok == s_tot and d_ok == d_tot
        fails += not ok
        if args.verbose or not ok:
            print(f"{w:08x}: {s_ok}/{s_tot} single-flip corrected, {d_ok}/{d_tot} double-flip detected"
                  f"{'' if ok else '  FAIL'}")
    n = len(res["words"])
    print(f"{n - fails}/{n} words pass: {s_tot}/{s_tot} single-flip corrected, "
          f"{d_tot}/{d_tot} double-flip detected per sampled word" if not fails else
          f"{fails}/{n} words FAILED")
    return EXIT_OK if not fails else EXIT_GUEST


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sentrysim", description="Fault-tolerant RV32 SoC simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--seed", type=int, help="seed (falls back to $SENTRYSIM_SEED, then 0)")
        if config:
            sp.add_argument("--config", help="JSON/YAML config file")
        sp.add_argument("--max-cycles", type=int, dest="max_cycles")
        sp.add_argument("--output", "-o", help="write a JSON report here ('-' for stdout)")

    r = sub.add_parser("run", help="run a program image")
    r.add_argument("--image", required=True, help="flat binary, ELF, .s source or corpus name")
    r.add_argument("--format", choices=("flat", "elf"), help="image format (default: sniff)")
    r.add_argument("--trace", help="write the retire trace to this file")
    r.add_argument("--faults", help="JSON list of fault events to inject")
    common(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="fault-injection campaign")
    c.add_argument("--program", help="corpus name, .s source or image (default crc32)")
    c.add_argument("--runs", type=int)
    c.add_argument("--faults", type=int, help="faults per run")
    c.add_argument("--targets", help="comma list of core_reg,core_pc,mem_bit")
    c.add_argument("--mode", choices=("single", "free", "double_mem"))
    c.add_argument("--workers", type=int, help="parallel worker processes")
    c.add_argument("--timestamps", action="store_true", help="stamp the JSON report with wall-clock time")
    common(c)
    c.set_defaults(func=cmd_campaign)

    b = sub.add_parser("irq-bench", help="interrupt entry / context-switch latency")
    common(b)
    b.set_defaults(func=cmd_irq_bench)

    d = sub.add_parser("dma-demo", help="periodic 3-D DMA schedule demo")
    d.add_argument("--start", type=int, default=200)
    d.add_argument("--period", type=int, default=150)
    d.add_argument("--count", type=int, default=4)
    common(d)
    d.set_defaults(func=cmd_dma_demo)

    e = sub.add_parser("ecc-selftest", help="exhaustive SEC-DED flip sweep")
    e.add_argument("--words", type=int, default=256)
    e.add_argument("--verbose", "-v", action="store_true")
    common(e, config=False)
    e.set_defaults(func=cmd_ecc_selftest)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"sentrysim: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
