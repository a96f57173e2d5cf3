"""Ingest and fact 1/6 analysis of one full-size white-noise symbol.

Generates 103 days x 250,000 trades, writes the binary tape, then times
parse + session filter + facts 1 and 6 in both clocks. Prints one JSON
line with wall time and peak RSS.

    python3 scripts/throughput.py [--days 103] [--trades 250000] [--workdir DIR]
"""

import argparse
import json
import resource
import tempfile
import time
from pathlib import Path

from tapefacts.facts import FactParams, run_battery
from tapefacts.synth import GenSpec, calendar_for, generate
from tapefacts.tape import filter_session, parse_tape, write_tape


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--days", type=int, default=103)
    ap.add_argument("--trades", type=int, default=250_000)
    ap.add_argument("--workdir")
    args = ap.parse_args()

    spec = GenSpec(days=args.days, trades_per_day=args.trades, seed=1)
    cal = calendar_for(spec)
    work = Path(args.workdir or tempfile.mkdtemp(prefix="tapefacts-"))
    path = work / "tape.bin"
    t0 = time.perf_counter()
    tape = generate(spec, "WN", cal)
    with open(path, "wb") as fh:
        write_tape(tape, fh, "bin")
    del tape
    gen_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    with open(path, "rb") as fh:
        tapes, report = parse_tape(fh, "bin")
    tape = filter_session(tapes.pop("WN"), cal)
    parse_s = time.perf_counter() - t0
    curves = run_battery(tape, cal, FactParams(facts=(1, 6)))
    total_s = time.perf_counter() - t0
    path.unlink()

    print(json.dumps({
        "trades": len(tape), "generate_s": round(gen_s, 2), "ingest_s": round(parse_s, 2),
        "ingest_and_analysis_s": round(total_s, 2),
        "peak_rss_mb": round(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024, 1),
        "curves": sorted(curves),
    }))


if __name__ == "__main__":
    main()
