"""Acceptance suite: null calibration, positive control, estimator oracles,
symmetries, determinism and throughput. Each test records one pass/fail
line, printed at the end of the run.
"""

import json
import math
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from conftest import CRITERIA
from tapefacts import stats
from tapefacts.cli import main
from tapefacts.config import validate_config
from tapefacts.facts import BatteryAnalyzer, FactParams, fact11_asymmetry, run_battery
from tapefacts.pipeline import check_bundle, run_pipeline
from tapefacts.series import EVENT, build_event_series, log_returns
from tapefacts.synth import CLUSTERING, GenSpec, calendar_for, generate, noise_band
from tapefacts.tape import NS_PER_MINUTE, Tape
from tapefacts.stats import LagCurve

ROOT = Path(__file__).resolve().parents[1]


@contextmanager
def criterion(n, name):
    notes = []
    try:
        yield notes
    except BaseException:
        CRITERIA[n] = (False, f"{name}: {'; '.join(notes)}")
        raise
    CRITERIA[n] = (True, f"{name}: {'; '.join(notes)}")


def check(notes, ok, text):
    notes.append(text)
    assert ok, text


# --- 1 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion1_null_calibration(tmp_path):
    with criterion(1, "null calibration") as notes:
        t0 = time.perf_counter()
        cfg = validate_config("", {"gen.kind": "white_noise", "gen.days": "20", "gen.trades_per_day": "20000",
                                   "gen.symbols": "5", "noise.days": "20", "noise.trades_per_day": "20000",
                                   "noise.replicates": "50", "run.out": str(tmp_path / "null")})
        res = run_pipeline(cfg)
        elapsed = time.perf_counter() - t0
        bad = {k: v for k, v in res.verdicts().items() if v != "not_supported"}
        check(notes, len(res.verdicts()) == 22 and not bad, f"22 fact/clock verdicts not_supported, exceptions {bad}")
        check(notes, elapsed < 600, f"{elapsed:.0f} s")


# --- 2 ---------------------------------------------------------------------------

POSITIVE = GenSpec(kind=CLUSTERING, days=20, trades_per_day=50_000, alpha=0.09, beta=0.90,
                   return_variance=1e-4, seed=7)


@pytest.mark.slow
def test_criterion2_positive_control():
    with criterion(2, "positive control (trade level)") as notes:
        cal = calendar_for(POSITIVE)
        tape = generate(POSITIVE, "GARCH", cal)
        params = FactParams(facts=(2, 4, 5, 6, 7), clocks=(EVENT,))
        curves = run_battery(tape, cal, params)

        k = curves["fact2.kurtosis|event|1"]
        kn = curves["fact7.kurtosis_norm|event|1"]
        check(notes, k.at(1) > 1, f"K(1)={k.at(1):.2f} > 1")
        check(notes, k.at(2500) < k.at(1), f"K(2500)={k.at(2500):.2f} < K(1)")
        fano = curves["fact5.fano|event|1"].values[0]
        check(notes, fano > 1.5, f"Fano={fano:.1f} > 1.5")
        lower = kn.values < k.values
        check(notes, bool(lower.all()), f"normalized K < raw K at N={k.grid.tolist()}: {lower.tolist()}")

        null = GenSpec(days=POSITIVE.days, trades_per_day=POSITIVE.trades_per_day, return_variance=1e-4)
        analyzer = BatteryAnalyzer(cal, FactParams(facts=(6,), clocks=(EVENT,), event_scales=(1,)))
        band = noise_band(analyzer, null, replicates=100, seed=12345)["fact6.abs_acf|event|1"]
        c0 = curves["fact6.abs_acf|event|1"]
        above = c0.values[:100] > band.hi[:100]
        check(notes, bool(above.all()),
              f"C0 above 100-replicate band for tau<=100 ({int(above.sum())}/100, C0(100)={c0.at(100):.3f})")


# --- 3 ---------------------------------------------------------------------------

def test_criterion3_estimator_oracles():
    with criterion(3, "estimator oracles") as notes:
        for x, y, want in (([1, 2, 3], [2, 4, 6], 1.0), ([1, 2, 3], [6, 4, 2], -1.0),
                           ([1, 2, 3, 4], [1, 3, 2, 4], 0.8)):
            check(notes, abs(stats.pearson(x, y) - want) <= 1e-12, f"pearson {want}")
        k = stats.excess_kurtosis(np.random.default_rng(301).laplace(size=10 ** 6))
        check(notes, abs(k - 3.0) <= 0.15, f"Laplace K={k:.3f}")
        s = stats.skew([0, 0, 0, 1])
        check(notes, abs(s - 2 / math.sqrt(3)) <= 1e-12, "skew 2/sqrt3")
        f = stats.fano(np.random.default_rng(302).poisson(5, size=10 ** 5))
        check(notes, abs(f - 1.0) <= 0.03, f"Poisson Fano={f:.3f}")
        fb = stats.fano(np.random.default_rng(303).binomial(1000, 0.01, size=10 ** 5))
        check(notes, abs(fb - 0.99) <= 0.03, f"binomial Fano={fb:.3f}")
        check(notes, stats.rogers_satchell(100.0, 110.0, 100.0, 110.0) == 0.0, "RS monotone bucket = 0")
        tau = np.arange(1, 101)
        fit = stats.loglog_slope(LagCurve("fact6.abs_acf", "X", EVENT, 1, tau, tau ** -0.3, [100] * 100), (1, 100))
        check(notes, abs(fit.beta - 0.3) <= 1e-9 and 0.2 <= fit.beta <= 0.4, f"beta={fit.beta:.12f}")


# --- 4 ---------------------------------------------------------------------------

SYM_SPEC = GenSpec(kind=CLUSTERING, days=4, trades_per_day=30_000, seed=404)
SYM_PARAMS = FactParams(clock_scales=(NS_PER_MINUTE, 5 * NS_PER_MINUTE, 30 * NS_PER_MINUTE),
                        event_scales=(1, 10, 100, 1000), acf_tau_max=20, abs_tau_max=20, fit_range=(1, 20))


def _close(a, b, tol):
    fa, fb = np.isfinite(a), np.isfinite(b)
    return bool(np.array_equal(fa, fb) and np.all(np.abs(a[fa] - b[fa]) <= tol))


def test_criterion4_symmetries():
    with criterion(4, "symmetry and invariance") as notes:
        cal = calendar_for(SYM_SPEC)
        tape = generate(SYM_SPEC, "S", cal)
        base = run_battery(tape, cal, SYM_PARAMS)

        scaled = run_battery(Tape("S", tape.ts, tape.price * 37.25, tape.size), cal, SYM_PARAMS)
        worst = max(np.nanmax(np.abs(base[k].values - scaled[k].values), initial=0.0) for k in base)
        check(notes, all(_close(base[k].values, scaled[k].values, 1e-9) for k in base),
              f"rescaling: {len(base)} curves, max diff {worst:.1e}")

        neg = run_battery(Tape("S", tape.ts, 1e4 / tape.price, tape.size), cal, SYM_PARAMS)
        f3 = [k for k in base if k.startswith("fact3.loss_fraction")]
        f9 = [k for k in base if k.startswith("fact9.")]
        ok3 = all(_close(base[k].values, 1.0 - neg[k].values, 1e-12) for k in f3)
        ok9 = all(_close(base[k].values, -neg[k].values, 1e-12) for k in f9)
        check(notes, ok3 and ok9, f"negation: fact 3 complements ({len(f3)}), fact 9 negates ({len(f9)})")

        k, m = 10, 50
        spec = GenSpec(kind=CLUSTERING, days=4, trades_per_day=k * m - 1, seed=405)
        rcal = calendar_for(spec)
        t = generate(spec, "R", rcal)
        per = spec.trades_per_day
        rev = np.concatenate([t.price[d * per:(d + 1) * per][::-1] for d in range(spec.days)])
        tr = Tape("R", t.ts, rev, t.size)

        def d_curve(x):
            fine = log_returns(build_event_series(x, 1, rcal))
            coarse = log_returns(build_event_series(x, k, rcal))
            return fact11_asymmetry(fine, coarse, 5)[1].values
        d1, d2 = d_curve(t), d_curve(tr)
        check(notes, bool(np.isfinite(d1).all()) and np.allclose(d2, -d1, rtol=0, atol=1e-12),
              "within-day reversal negates D")

        worst = 0.0
        for n in (1, 7, 100):
            ps = build_event_series(tape, n, cal)
            rs = log_returns(ps)
            for d in range(rs.n_days):
                a, b = rs.offsets[d], rs.offsets[d + 1]
                want = ps.log_price[b - 1] - ps.log_price[a]
                worst = max(worst, abs(math.fsum(rs.values[a + 1:b]) - want) / abs(want))
        check(notes, worst <= 1e-12, f"telescoping rel err {worst:.1e}")


# --- 5 ---------------------------------------------------------------------------

def _files(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(Path(out).rglob("*")) if p.is_file()}


def test_criterion5_determinism(tmp_path):
    with criterion(5, "determinism") as notes:
        args = ["analyze", "--gen.kind", "clustering", "--gen.days", "4", "--gen.trades_per_day", "8000",
                "--gen.symbols", "3", "--noise.days", "4", "--noise.trades_per_day", "8000",
                "--noise.replicates", "4", "--fact1.tau_max", "20", "--fact6.tau_max", "20",
                "--fact6.fit_range", "1,20"]
        outs = []
        for i, workers in enumerate((1, 1, 8)):
            out = tmp_path / f"run{i}"
            assert main([*args, "--run.workers", str(workers), "--run.out", str(out)]) == 0
            outs.append(_files(out))
        check(notes, outs[0] == outs[1], f"two runs at 1 worker identical ({len(outs[0])} files)")
        check(notes, outs[0] == outs[2], "1 vs 8 workers identical")
        check(notes, check_bundle(tmp_path / "run0") == [], "verdicts re-derive from bundle")


# --- 6 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion6_throughput(tmp_path):
    with criterion(6, "throughput") as notes:
        proc = subprocess.run([sys.executable, str(ROOT / "scripts" / "throughput.py"), "--workdir", str(tmp_path)],
                              capture_output=True, text=True, timeout=1200)
        assert proc.returncode == 0, proc.stderr
        r = json.loads(proc.stdout.strip().splitlines()[-1])
        check(notes, r["trades"] == 25_750_000, f"{r['trades']} trades")
        check(notes, r["ingest_and_analysis_s"] < 300, f"ingest+fact 1/6 {r['ingest_and_analysis_s']} s")
        check(notes, r["peak_rss_mb"] < 4096, f"peak RSS {r['peak_rss_mb']} MB")
