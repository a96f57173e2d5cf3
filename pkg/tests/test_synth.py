import io
import json
from dataclasses import replace
from datetime import date

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tapefacts.facts import BatteryAnalyzer, FactParams, fact1_linear_acf
from tapefacts.series import CLOCK, EVENT, build_clock_series, build_event_series, log_returns
from tapefacts.stats import excess_kurtosis
from tapefacts.synth import (CLUSTERING, WHITE_NOISE, GenSpec, NoiseBand, calendar_for, envelope,
                             gen_clustering, gen_white_noise, generate, load_bands, noise_band, save_bands,
                             symbol_rng, trading_days)
from tapefacts.tape import NS_PER_MINUTE, SessionCalendar, filter_session, local_clock, write_tape


def test_default_spec_sizes():
    spec = GenSpec()
    assert (spec.days, spec.trades_per_day, spec.return_variance) == (103, 250_000, 1e-4)
    assert spec.days * spec.trades_per_day == 25_750_000


def test_spec_validation():
    with pytest.raises(ValueError, match="stationarity"):
        GenSpec(kind=CLUSTERING, alpha=0.2, beta=0.85)
    with pytest.raises(ValueError):
        GenSpec(return_variance=0)
    with pytest.raises(ValueError):
        GenSpec(trades_per_day=0)
    with pytest.raises(ValueError):
        GenSpec(kind="hawkes")


def test_variance_reading():
    assert GenSpec(return_variance=1e-4).variance == 1e-4
    assert GenSpec(return_variance=1e-2, variance_reading="stddev").variance == pytest.approx(1e-4, rel=1e-15)


def test_trading_days_are_weekdays():
    days = trading_days(GenSpec(days=10, start_date=date(2018, 10, 20)))   # a Saturday
    assert days[0] == date(2018, 10, 22)
    assert all(d.weekday() < 5 for d in days) and len(days) == 10


def test_white_noise_shape_and_session():
    spec = GenSpec(days=3, trades_per_day=20_000, seed=1)
    cal = calendar_for(spec)
    tape = gen_white_noise(spec, "W", cal)
    assert len(tape) == 60_000
    assert np.all(np.diff(tape.ts) >= 0)
    assert filter_session(tape, cal).equals(tape)
    day, tod = local_clock(tape.ts, cal.tz)
    assert np.unique(day, return_counts=True)[1].tolist() == [20_000] * 3
    assert tod.min() >= cal.open_ns and tod.max() < cal.close_ns
    assert set(tape.size.tolist()) == {100}


def test_white_noise_variance():
    spec = GenSpec(days=100, trades_per_day=250_000, seed=2)
    tape = gen_white_noise(spec, "W", calendar_for(spec))
    r = np.diff(np.log(tape.price))
    assert r.var() == pytest.approx(1e-4, rel=0.02)


def test_white_noise_deterministic_bytes():
    spec = GenSpec(days=2, trades_per_day=1000, seed=9)
    bufs = []
    for _ in range(2):
        b = io.BytesIO()
        write_tape(gen_white_noise(spec, "W"), b, "bin")
        bufs.append(b.getvalue())
    assert bufs[0] == bufs[1]
    other = io.BytesIO()
    write_tape(gen_white_noise(replace(spec, seed=10), "W"), other, "bin")
    assert other.getvalue() != bufs[0]


def test_clustering_variance_and_kurtosis():
    spec = GenSpec(kind=CLUSTERING, days=40, trades_per_day=100_000, seed=3)
    r = np.diff(np.log(gen_clustering(spec, "G").price))
    assert r.var() == pytest.approx(1e-4, rel=0.05)
    assert excess_kurtosis(r[:10 ** 6]) > 0
    assert spec.garch_omega == pytest.approx(1e-4 * 0.01, rel=1e-12)


def test_clustering_degenerate_is_white_noise():
    spec = GenSpec(days=2, trades_per_day=5000, seed=4)
    wn = gen_white_noise(spec, "S")
    gc = gen_clustering(replace(spec, kind=CLUSTERING, alpha=0.0, beta=0.0), "S")
    assert gc.equals(wn)


def test_kind_mismatch():
    with pytest.raises(ValueError):
        gen_clustering(GenSpec(days=1, trades_per_day=10))
    assert len(generate(GenSpec(kind=CLUSTERING, days=1, trades_per_day=10), "G")) == 10


def test_symbol_streams_distinct():
    spec = GenSpec(days=1, trades_per_day=500, seed=5)
    a = generate(spec, "A", rng=symbol_rng(5, 0))
    b = generate(spec, "B", rng=symbol_rng(5, 1))
    assert not np.array_equal(a.price, b.price)
    again = generate(spec, "A", rng=symbol_rng(5, 0))
    assert again.equals(a)


# --- bands ---------------------------------------------------------------------------

def _acf_analyzer(tape, scale=NS_PER_MINUTE, clock=CLOCK):
    cal = calendar_for(GenSpec(days=3))
    if clock == CLOCK:
        rs = log_returns(build_clock_series(tape, scale, cal))
    else:
        rs = log_returns(build_event_series(tape, scale, cal))
    c = fact1_linear_acf(rs, 10)
    return {f"fact1.acf|{clock}|{scale}": c}


class Acf:
    def __init__(self, scale, clock):
        self.scale, self.clock = scale, clock

    def __call__(self, tape):
        return _acf_analyzer(tape, self.scale, self.clock)


SMALL = GenSpec(days=3, trades_per_day=20_000, seed=0)


def test_band_straddles_zero_and_ordered():
    bands = noise_band(Acf(NS_PER_MINUTE, CLOCK), SMALL, replicates=12, seed=7)
    (b,) = bands.values()
    assert np.all(b.lo <= b.hi)
    assert np.all(b.lo < 0) and np.all(b.hi > 0)
    assert b.n_valid.tolist() == [12] * 10


def test_single_replicate_degenerate():
    (b,) = noise_band(Acf(NS_PER_MINUTE, CLOCK), SMALL, replicates=1, seed=3).values()
    np.testing.assert_array_equal(b.lo, b.hi)


def test_band_reproducible_and_parallel():
    a = noise_band(Acf(10, EVENT), SMALL, replicates=4, seed=11)
    b = noise_band(Acf(10, EVENT), SMALL, replicates=4, seed=11, workers=2)
    for k in a:
        np.testing.assert_array_equal(a[k].lo, b[k].lo)
        np.testing.assert_array_equal(a[k].hi, b[k].hi)


def test_band_width_trade_vs_30min():
    fine = noise_band(Acf(1, EVENT), SMALL, replicates=8, seed=13)
    coarse = noise_band(Acf(30 * NS_PER_MINUTE, CLOCK), SMALL, replicates=8, seed=13)
    wf = np.nanmean([b.hi - b.lo for b in fine.values()])
    wc = np.nanmean([b.hi - b.lo for b in coarse.values()])
    assert wf * 10 < wc


def test_envelope_undefined_points():
    from tapefacts.stats import LagCurve
    c1 = LagCurve("s", "X", EVENT, 1, [1, 2], [0.1, np.nan], [5, 0])
    c2 = LagCurve("s", "X", EVENT, 1, [1, 2], [-0.2, np.nan], [5, 0])
    (b,) = envelope([{"k": c1}, {"k": c2}], 2, 0).values()
    assert b.lo[0] == -0.2 and b.hi[0] == 0.1
    assert np.isnan(b.lo[1]) and b.n_valid.tolist() == [2, 0]


def test_band_json_round_trip(tmp_path):
    bands = noise_band(Acf(10, EVENT), SMALL, replicates=2, seed=1)
    path = tmp_path / "b.json"
    save_bands(bands, path)
    back = load_bands(path)
    for k in bands:
        for f in ("grid", "lo", "hi", "n_valid"):
            np.testing.assert_array_equal(getattr(back[k], f), getattr(bands[k], f))
    json.loads(path.read_text())


@given(st.lists(st.lists(st.floats(-1, 1), min_size=3, max_size=3), min_size=1, max_size=8))
def test_envelope_lo_le_hi(rows):
    from tapefacts.stats import LagCurve
    res = [{"k": LagCurve("s", "X", EVENT, 1, [1, 2, 3], r, [9] * 3)} for r in rows]
    (b,) = envelope(res, len(rows), 0).values()
    arr = np.array(rows)
    np.testing.assert_array_equal(b.lo, arr.min(axis=0))
    np.testing.assert_array_equal(b.hi, arr.max(axis=0))
