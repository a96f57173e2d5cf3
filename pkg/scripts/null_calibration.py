"""White-noise null calibration: the full battery on fresh white-noise
symbols against a white-noise band should support no fact.

    python3 scripts/null_calibration.py [--days 20] [--trades 20000] [--replicates 50] [--symbols 5] [--out DIR]
"""

import argparse
import tempfile
import time
from collections import Counter

from tapefacts.config import validate_config
from tapefacts.pipeline import run_pipeline


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--days", type=int, default=20)
    ap.add_argument("--trades", type=int, default=20_000)
    ap.add_argument("--replicates", type=int, default=50)
    ap.add_argument("--symbols", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    out = args.out or tempfile.mkdtemp(prefix="tapefacts-null-")
    cfg = validate_config("", {
        "gen.kind": "white_noise", "gen.days": str(args.days), "gen.trades_per_day": str(args.trades),
        "gen.symbols": str(args.symbols), "noise.days": str(args.days), "noise.trades_per_day": str(args.trades),
        "noise.replicates": str(args.replicates), "run.workers": str(args.workers), "run.out": out})
    t0 = time.perf_counter()
    res = run_pipeline(cfg)
    elapsed = time.perf_counter() - t0

    for r in res.results:
        print(f"fact {r.fact_id:2d} {r.clock:5s} {r.verdict:13s} {r.rule_id}")
    tally = Counter(res.verdicts().values())
    print(f"{dict(tally)} in {elapsed:.0f} s, bundle at {out}")


if __name__ == "__main__":
    main()
