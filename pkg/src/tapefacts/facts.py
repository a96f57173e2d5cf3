"""One analyzer per stylized fact, the full battery, and verdict rules.

Every analyzer returns LagCurves so that white-noise envelopes and verdicts
work on one representation. Correlations pool all same-day pairs across
days; a statistic that has no value on its input shows up as NaN.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .series import (CLOCK, EVENT, RAW, PriceSeries, ReturnSeries, build_clock_series,
                     build_event_series, log_returns, normalize_returns)
from .stats import LagCurve, PowerLawFit, UndefinedStatistic, lag_corr
from .synth import NoiseBand
from .tape import NS_PER_MINUTE, SessionCalendar, Tape

FACT_NAMES = {
    1: "Lack of linear ACF",
    2: "Heavy tails",
    3: "Gain/Loss asymmetry",
    4: "Aggregational Gaussianity",
    5: "Intermittency",
    6: "Volatility clustering",
    7: "Conditional heavy tails",
    8: "Slow decay of abs. ACF",
    9: "Leverage effect",
    10: "Volume/volatility corr.",
    11: "Asymmetry in timescales",
}

# statistics each fact's verdict reads
FACT_STATS = {
    1: ("fact1.acf",),
    2: ("fact2.kurtosis",),
    3: ("fact3.skew", "fact3.loss_fraction"),
    4: ("fact2.kurtosis",),
    5: ("fact5.fano", "fact5.interarrival_kurtosis"),
    6: ("fact6.abs_acf",),
    7: ("fact2.kurtosis", "fact7.kurtosis_norm"),
    8: ("fact6.abs_acf",),
    9: ("fact9.leverage",),
    10: ("fact10.volume_vol",),
    11: ("fact11.A", "fact11.D"),
}

SUPPORTED = "supported"
NOT_SUPPORTED = "not_supported"
INDETERMINATE = "indeterminate"

MIN = NS_PER_MINUTE


def scale_label(clock: str, scale: int) -> str:
    if clock == EVENT:
        return str(int(scale))
    ns = int(scale)
    for unit, width in (("h", 60 * MIN), ("min", MIN), ("s", 10 ** 9), ("ms", 10 ** 6), ("us", 10 ** 3)):
        if ns % width == 0:
            return f"{ns // width}{unit}"
    return f"{ns}ns"


def curve_key(stat: str, clock: str, scale: int, coarse: int | None = None) -> str:
    label = scale_label(clock, scale)
    if coarse is not None:
        label += "/" + scale_label(clock, coarse)
    return f"{stat}|{clock}|{label}"


def _curve(stat, rs_or_ps, grid, values, n_obs, scale=None, **meta) -> LagCurve:
    return LagCurve(stat, rs_or_ps.symbol, rs_or_ps.clock,
                    rs_or_ps.scale if scale is None else scale, grid, values, n_obs, meta)


def _lag_curve(stat, x, y, rs, taus, **meta) -> LagCurve:
    vals, ns = [], []
    for t in taus:
        r, n = lag_corr(x, y, rs.offsets, int(t))
        vals.append(r)
        ns.append(n)
    return _curve(stat, rs, np.asarray(taus, dtype=np.int64), vals, ns, **meta)


def _safe(fn, *args) -> float:
    try:
        return fn(*args)
    except UndefinedStatistic:
        return float("nan")


# --------------------------------------------------------------------------
# analyzers
# --------------------------------------------------------------------------

def fact1_linear_acf(rs: ReturnSeries, tau_max: int) -> LagCurve:
    """C(tau) = corr(r(t), r(t+tau)) for tau = 1..tau_max."""
    return _lag_curve("fact1.acf", rs.values, rs.values, rs, range(1, tau_max + 1))


def moment_at(rs: ReturnSeries) -> tuple[float, float, int]:
    x = rs.finite()
    return _safe(stats.excess_kurtosis, x), _safe(stats.skew, x), int(x.size)


def build_series(tape: Tape, calendar: SessionCalendar, clock: str, scale: int,
                 with_ohlc: bool = False) -> PriceSeries:
    if clock == CLOCK:
        return build_clock_series(tape, scale, calendar, with_ohlc)
    return build_event_series(tape, scale, calendar, with_ohlc)


def fact2_4_7_kurtosis_curve(tape: Tape, calendar: SessionCalendar, clock: str, scales,
                             stage: str = RAW, v_mode: str = "abs") -> LagCurve:
    """Excess kurtosis of returns rebuilt at each timescale.

    ``stage="raw"`` gives the unconditional curve; any other stage applies the
    day/time-of-day normalization first (conditional tails).
    """
    scales = sorted(int(s) for s in scales)
    vals, ns = [], []
    for s in scales:
        rs = log_returns(build_series(tape, calendar, clock, s))
        if stage != RAW:
            rs = normalize_returns(rs, v_mode)
        k, _, n = moment_at(rs)
        vals.append(k)
        ns.append(n)
    stat = "fact2.kurtosis" if stage == RAW else "fact7.kurtosis_norm"
    return LagCurve(stat, tape.symbol, clock, scales[0], scales, vals, ns)


def loss_fractions(rs: ReturnSeries, quantiles, min_exceedances: int = 20) -> LagCurve:
    """Share of losses among returns whose magnitude exceeds each |r| quantile."""
    x = rs.finite()
    a = np.abs(x)
    qs = sorted(float(q) for q in quantiles)
    vals, ns = [], []
    for q in qs:
        if a.size == 0:
            vals.append(float("nan"))
            ns.append(0)
            continue
        thr = stats.quantile(a, q)
        hit = a > thr
        n = int(hit.sum())
        ns.append(n)
        vals.append(float(np.count_nonzero(x[hit] < 0)) / n if n >= min_exceedances else float("nan"))
    return _curve("fact3.loss_fraction", rs, np.array(qs), vals, ns, min_exceedances=min_exceedances)


def fact3_gain_loss(rs: ReturnSeries, quantiles, min_exceedances: int = 20) -> tuple[float, LagCurve]:
    """Skew of the returns plus the loss fraction among extreme moves per quantile cutoff.

    Cutoffs with fewer than ``min_exceedances`` exceedances are NaN.
    """
    return _safe(stats.skew, rs.finite()), loss_fractions(rs, quantiles, min_exceedances)


def _blocks(rs: ReturnSeries, k: int):
    """Per day, the fine values reshaped into aligned blocks of k (block 0 dropped)."""
    for d in range(rs.n_days):
        seg = rs.day_values(d)
        nblk = seg.size // k
        yield d, seg[:nblk * k].reshape(nblk, k)[1:]


@dataclass
class Intermittency:
    fano: float
    interarrival_kurtosis: float
    threshold: float
    n_extremes: int
    n_windows: int
    n_gaps: int


def fact5_intermittency(rs: ReturnSeries, q: float, window: int) -> Intermittency:
    """Fano factor of per-window extreme counts, and kurtosis of the gaps between extremes.

    Extremes are returns with |r| above the q-quantile of |r|. Windows are
    coarse buckets of ``window`` (same unit as the series scale) aligned to
    the day start; the first (incomplete) one and any window containing an
    undefined return are skipped. Gaps are within-day bucket-index distances.
    """
    k = int(window) // int(rs.scale)
    if k < 1 or int(window) % int(rs.scale):
        raise ValueError("window must be a positive multiple of the series scale")
    a = np.abs(rs.values)
    fin = np.isfinite(a)
    if not fin.any():
        raise UndefinedStatistic("no returns")
    thr = stats.quantile(a[fin], q)
    ext = fin & (a > thr)
    n_ext = int(ext.sum())
    if n_ext == 0:
        raise UndefinedStatistic("no extreme returns")
    counts, gaps = [], []
    for d in range(rs.n_days):
        lo, hi = rs.offsets[d], rs.offsets[d + 1]
        e, f = ext[lo:hi], fin[lo:hi]
        nblk = e.size // k
        if nblk > 1:
            eb = e[:nblk * k].reshape(nblk, k)[1:]
            ok = f[:nblk * k].reshape(nblk, k)[1:].all(axis=1)
            counts.append(eb[ok].sum(axis=1))
        pos = np.flatnonzero(e)
        if pos.size > 1:
            gaps.append(np.diff(pos))
    counts = np.concatenate(counts) if counts else np.empty(0)
    gaps = np.concatenate(gaps).astype(np.float64) if gaps else np.empty(0)
    return Intermittency(_safe(stats.fano, counts), _safe(stats.excess_kurtosis, gaps),
                         thr, n_ext, int(counts.size), int(gaps.size))


def fact6_8_abs_acf(rs: ReturnSeries, tau_max: int, fit_range=(1, 100),
                    linear: LagCurve | None = None) -> tuple[LagCurve, PowerLawFit | None]:
    """C0(tau) = corr(|r(t)|, |r(t+tau)|) and its log-log decay exponent.

    When the linear ACF is given, the share of lags with C0 > |C| is stored in
    the curve metadata.
    """
    a = np.abs(rs.values)
    curve = _lag_curve("fact6.abs_acf", a, a, rs, range(1, tau_max + 1))
    fit = _safe_fit(curve, fit_range)
    if fit is not None:
        curve.meta["beta"] = fit.beta
        curve.meta["fit_range"] = list(fit.fit_range)
    if linear is not None:
        # compare on the lags both curves cover
        m = min(curve.values.size, linear.values.size)
        c0, c = curve.values[:m], linear.values[:m]
        both = np.isfinite(c0) & np.isfinite(c)
        if both.any():
            curve.meta["dominates_linear"] = float(np.mean(c0[both] > np.abs(c[both])))
    return curve, fit


def _safe_fit(curve: LagCurve, fit_range) -> PowerLawFit | None:
    try:
        return stats.loglog_slope(curve, fit_range)
    except UndefinedStatistic:
        return None


def fact9_leverage(rs: ReturnSeries, tau_max: int, volatility: str = "abs") -> LagCurve:
    """L(tau) = corr(r(t), |r(t+tau)|) (or r^2) for tau in [-tau_max, tau_max]."""
    if volatility == "abs":
        vol = np.abs(rs.values)
    elif volatility == "squared":
        vol = rs.values * rs.values
    else:
        raise ValueError(f"unknown volatility measure {volatility!r}")
    return _lag_curve("fact9.leverage", rs.values, vol, rs, range(-tau_max, tau_max + 1),
                      volatility=volatility)


def fact10_volume_volatility(ps: PriceSeries, rs: ReturnSeries, tau_max: int,
                             measure: str = "shares") -> LagCurve:
    """corr(volume(t), |r(t+tau)|) over signed lags; shares or trade counts."""
    if ps.clock != rs.clock or ps.scale != rs.scale or not np.array_equal(ps.offsets, rs.offsets):
        raise ValueError("price and return series use different bucketing")
    if measure == "shares":
        vol = ps.volume.astype(np.float64)
    elif measure == "trades":
        vol = ps.trade_count.astype(np.float64)
    else:
        raise ValueError(f"unknown volume measure {measure!r}")
    vol[~np.isfinite(ps.log_price)] = np.nan
    fin = vol[np.isfinite(vol)]
    constant = fin.size == 0 or bool(np.all(fin == fin[0]))
    curve = _lag_curve("fact10.volume_vol", vol, np.abs(rs.values), rs,
                       range(-tau_max, tau_max + 1), measure=measure)
    curve.meta["constant_volume"] = constant
    return curve


def coarse_fine_volatility(rs_fine: ReturnSeries, rs_coarse: ReturnSeries,
                           fine_vol: str = "mean_abs",
                           ps_coarse: PriceSeries | None = None) -> np.ndarray:
    """Fine-scale volatility for every coarse bucket, aligned with ``rs_coarse``.

    ``mean_abs`` averages |fine return| over the fine returns making up the
    coarse return; ``rogers_satchell`` uses the coarse bucket's OHLC. Coarse
    buckets without a coarse return (each day's first) are NaN.
    """
    if rs_fine.clock != rs_coarse.clock:
        raise ValueError("fine and coarse series use different clocks")
    k, rem = divmod(int(rs_coarse.scale), int(rs_fine.scale))
    if rem or k < 1:
        raise ValueError("coarse scale must be an integer multiple of the fine scale")
    if not np.array_equal(rs_fine.days, rs_coarse.days):
        raise ValueError("fine and coarse series cover different days")
    out = np.full(rs_coarse.values.size, np.nan)
    if fine_vol == "rogers_satchell":
        if ps_coarse is None or ps_coarse.ohlc is None:
            raise ValueError("Rogers-Satchell volatility needs the coarse OHLC series")
        o, h, lo, c = ps_coarse.ohlc
        ok = np.isfinite(o)
        out[ok] = stats.rogers_satchell(o[ok], h[ok], lo[ok], c[ok])
        out[rs_coarse.offsets[:-1][rs_coarse.offsets[:-1] < out.size]] = np.nan
        return out
    if fine_vol != "mean_abs":
        raise ValueError(f"unknown fine volatility {fine_vol!r}")
    for d, blk in _blocks(rs_fine, k):
        a, b = rs_coarse.offsets[d], rs_coarse.offsets[d + 1]
        if b - a != blk.shape[0] + 1 and b > a:
            raise ValueError("coarse buckets do not tile the fine buckets")
        if blk.shape[0]:
            out[a + 1:b] = np.abs(blk).mean(axis=1)
    return out


def fact11_asymmetry(rs_fine: ReturnSeries, rs_coarse: ReturnSeries, tau_max: int,
                     fine_vol: str = "mean_abs",
                     ps_coarse: PriceSeries | None = None) -> tuple[LagCurve, LagCurve]:
    """A(tau) = corr(fine volatility in T, |coarse r(T+tau)|) and D(tau) = A(tau) - A(-tau)."""
    fv = coarse_fine_volatility(rs_fine, rs_coarse, fine_vol, ps_coarse)
    meta = {"fine_scale": int(rs_fine.scale), "fine_vol": fine_vol}
    a_curve = _lag_curve("fact11.A", fv, np.abs(rs_coarse.values), rs_coarse,
                         range(-tau_max, tau_max + 1), **meta)
    d_curve = asymmetry_difference(a_curve)
    return a_curve, d_curve


def asymmetry_difference(a_curve: LagCurve) -> LagCurve:
    taus = a_curve.grid[a_curve.grid > 0]
    vals = [a_curve.at(t) - a_curve.at(-t) for t in taus]
    ns = [min(a_curve.n_obs[a_curve.grid == t][0], a_curve.n_obs[a_curve.grid == -t][0]) for t in taus]
    return LagCurve("fact11.D", a_curve.symbol, a_curve.clock, a_curve.scale, taus, vals, ns,
                    dict(a_curve.meta))


# --------------------------------------------------------------------------
# battery
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FactParams:
    """Analysis grid. Clock scales are nanoseconds, event scales trade counts."""

    facts: tuple[int, ...] = tuple(range(1, 12))
    clocks: tuple[str, ...] = (CLOCK, EVENT)
    clock_scales: tuple[int, ...] = tuple(m * MIN for m in (1, 5, 10, 15, 20, 30, 60))
    event_scales: tuple[int, ...] = (1, 10, 100, 250, 500, 1000, 2500)
    stage: str = RAW
    v_mode: str = "abs"
    acf_tau_max: int = 100
    quantiles: tuple[float, ...] = (0.9, 0.95, 0.99, 0.995, 0.999)
    min_exceedances: int = 20
    extreme_q: float = 0.99
    clock_window: int = 30 * MIN
    event_window: int = 1000
    abs_tau_max: int = 100
    fit_range: tuple[float, float] = (1.0, 100.0)
    leverage_tau_max: int = 10
    leverage_volatility: str = "abs"
    volume_tau_max: int = 10
    volume_measure: str = "shares"
    event_volume_scale: int = 1
    asym_tau_max: int = 5
    clock_coarse: int = 30 * MIN
    event_coarse: int = 1000
    fine_vol: str = "mean_abs"

    def scales(self, clock: str) -> tuple[int, ...]:
        return tuple(sorted(self.clock_scales if clock == CLOCK else self.event_scales))

    def base(self, clock: str) -> int:
        return self.scales(clock)[0]

    def window(self, clock: str) -> int:
        return self.clock_window if clock == CLOCK else self.event_window

    def coarse(self, clock: str) -> int:
        return self.clock_coarse if clock == CLOCK else self.event_coarse

    def volume_scale(self, clock: str) -> int:
        return self.base(clock) if clock == CLOCK else self.event_volume_scale


class _SeriesCache:
    def __init__(self, tape, calendar, clock, params):
        self.tape, self.calendar, self.clock, self.params = tape, calendar, clock, params
        self._ps, self._rs = {}, {}

    def prices(self, scale, ohlc=False):
        key = (scale, ohlc)
        if key not in self._ps:
            have = self._ps.get((scale, True))
            self._ps[key] = have if have is not None else build_series(
                self.tape, self.calendar, self.clock, scale, ohlc)
        return self._ps[key]

    def returns(self, scale, stage=RAW):
        key = (scale, stage)
        if key not in self._rs:
            if stage == RAW:
                ps = self._ps.get((scale, False)) or self._ps.get((scale, True)) or self.prices(scale)
                self._rs[key] = log_returns(ps)
            else:
                self._rs[key] = normalize_returns(self.returns(scale, RAW), self.params.v_mode)
        return self._rs[key]

    def working(self, scale):
        """Returns at the stage the configuration selects for facts other than 2/4/7."""
        return self.returns(scale, RAW if self.params.stage == RAW else "norm")

    def drop(self, scale):
        for d in (self._ps, self._rs):
            for k in [k for k in d if k[0] == scale]:
                del d[k]


class AnalyzerError(RuntimeError):
    """An analyzer raised on one symbol; names the symbol, fact and clock."""

    def __init__(self, symbol: str, fact: str, clock: str, message: str):
        super().__init__(symbol, fact, clock, message)
        self.symbol, self.fact, self.clock, self.message = symbol, fact, clock, message

    def __str__(self):
        return f"{self.fact} failed on {self.symbol} ({self.clock}): {self.message}"


@contextmanager
def _guard(symbol, fact, clock):
    try:
        yield
    except AnalyzerError:
        raise
    except Exception as exc:
        raise AnalyzerError(symbol, fact, clock, f"{type(exc).__name__}: {exc}") from exc


def run_battery(tape: Tape, calendar: SessionCalendar, params: FactParams = FactParams()) -> dict[str, LagCurve]:
    """Evaluate every enabled fact's statistics on one symbol's tape.

    Any exception inside an analyzer is re-raised as AnalyzerError.
    """
    out: dict[str, LagCurve] = {}
    facts = set(params.facts)
    sym = tape.symbol
    for clock in params.clocks:
        if not params.scales(clock):
            continue
        cache = _SeriesCache(tape, calendar, clock, params)
        base = params.base(clock)

        def put(c: LagCurve, coarse=None):
            scale = base if coarse is not None else c.scale
            out[curve_key(c.stat_id, clock, scale, coarse)] = c

        linear = None
        if 1 in facts:
            with _guard(sym, "fact1", clock):
                linear = fact1_linear_acf(cache.working(base), params.acf_tau_max)
                put(linear)
        if facts & {2, 3, 4, 7}:
            with _guard(sym, "fact2/3/4/7", clock):
                k_raw, k_norm, sk, ns, ns_norm = [], [], [], [], []
                scales = params.scales(clock)
                for s in scales:
                    k, sw, n = moment_at(cache.returns(s, RAW))
                    k_raw.append(k)
                    sk.append(sw)
                    ns.append(n)
                    if 7 in facts:
                        kn, _, nn = moment_at(cache.returns(s, "norm"))
                        k_norm.append(kn)
                        ns_norm.append(nn)
                    if s != base:
                        cache.drop(s)
                if facts & {2, 4, 7}:
                    put(LagCurve("fact2.kurtosis", sym, clock, base, scales, k_raw, ns))
                if 7 in facts:
                    put(LagCurve("fact7.kurtosis_norm", sym, clock, base, scales, k_norm, ns_norm))
                if 3 in facts:
                    put(LagCurve("fact3.skew", sym, clock, base, scales, sk, ns))
        if 3 in facts:
            with _guard(sym, "fact3", clock):
                put(loss_fractions(cache.working(base), params.quantiles, params.min_exceedances))
        if 5 in facts:
            with _guard(sym, "fact5", clock):
                rs = cache.working(base)
                w = params.window(clock)
                try:
                    im = fact5_intermittency(rs, params.extreme_q, w)
                    fano_v, ia_v, n_win, n_gap = im.fano, im.interarrival_kurtosis, im.n_windows, im.n_gaps
                except UndefinedStatistic:
                    fano_v = ia_v = float("nan")
                    n_win = n_gap = 0
                put(_curve("fact5.fano", rs, [w], [fano_v], [n_win], q=params.extreme_q))
                put(_curve("fact5.interarrival_kurtosis", rs, [w], [ia_v], [n_gap], q=params.extreme_q))
        if facts & {6, 8}:
            with _guard(sym, "fact6/8", clock):
                curve, _ = fact6_8_abs_acf(cache.working(base), params.abs_tau_max, params.fit_range, linear)
                put(curve)
        if 9 in facts:
            with _guard(sym, "fact9", clock):
                put(fact9_leverage(cache.working(base), params.leverage_tau_max, params.leverage_volatility))
        if 10 in facts:
            with _guard(sym, "fact10", clock):
                vs = params.volume_scale(clock)
                put(fact10_volume_volatility(cache.prices(vs), cache.working(vs), params.volume_tau_max,
                                             params.volume_measure))
        if 11 in facts:
            with _guard(sym, "fact11", clock):
                coarse = params.coarse(clock)
                rs_c = cache.returns(coarse, RAW)
                if params.stage != RAW:
                    rs_c = cache.working(coarse)
                ps_c = cache.prices(coarse, ohlc=True) if params.fine_vol == "rogers_satchell" else None
                a_curve, d_curve = fact11_asymmetry(cache.working(base), rs_c, params.asym_tau_max,
                                                    params.fine_vol, ps_c)
                put(a_curve, coarse)
                put(d_curve, coarse)
    return out


@dataclass(frozen=True)
class BatteryAnalyzer:
    """Picklable tape -> curves callable for noise bands."""

    calendar: SessionCalendar
    params: FactParams

    def __call__(self, tape: Tape) -> dict[str, LagCurve]:
        return run_battery(tape, self.calendar, self.params)


# --------------------------------------------------------------------------
# verdicts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VerdictRules:
    """Thresholds turning curves and bands into a per-fact verdict.

    A fact is supported when at least ``symbol_frac`` of symbols meet its
    per-symbol criterion; ``lag_frac`` is the share of lags a curve criterion
    must hold on.
    """

    symbol_frac: float = 0.9
    lag_frac: float = 0.8
    acf_small: float = 0.05
    acf_tail_start: int = 3
    cluster_tau: int = 100
    beta_min: float = 0.0
    beta_max: float = 1.0
    asym_lags: int = 2


@dataclass
class FactResult:
    fact_id: int
    clock: str
    verdict: str
    rule_id: str
    per_symbol: dict[str, bool | None] = field(default_factory=dict)
    details: dict[str, dict] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return FACT_NAMES[self.fact_id]


def _find(curves: dict[str, LagCurve], stat: str, clock: str) -> tuple[str, LagCurve] | tuple[None, None]:
    for k in sorted(curves):
        s, c, _ = k.split("|")
        if s == stat and c == clock:
            return k, curves[k]
    return None, None


def _band_for(bands, key, curve):
    b = bands.get(key) if key else None
    if b is None:
        return None, None
    lo = np.array([b.bounds_at(x)[0] for x in curve.grid])
    hi = np.array([b.bounds_at(x)[1] for x in curve.grid])
    return lo, hi


def _first_finite(values) -> int | None:
    idx = np.flatnonzero(np.isfinite(values))
    return int(idx[0]) if idx.size else None


def _criterion(fact: int, curves, bands, clock, rules: VerdictRules, params: FactParams):
    """(met: bool | None, detail dict) for one symbol."""
    def get(stat):
        key, c = _find(curves, stat, clock)
        if c is None:
            return None, None, None
        lo, hi = _band_for(bands, key, c)
        return c, lo, hi

    if fact == 1:
        c, lo, hi = get("fact1.acf")
        if c is None or lo is None:
            return None, {}
        i = np.flatnonzero(c.grid == 1)
        if not i.size or not np.isfinite(c.values[i[0]]) or not np.isfinite(lo[i[0]]):
            return None, {}
        c1 = c.values[i[0]]
        short = bool(c1 < lo[i[0]] or c1 > hi[i[0]])
        tail = c.values[(c.grid >= rules.acf_tail_start) & np.isfinite(c.values)]
        if not tail.size:
            return None, {}
        small = float(np.mean(np.abs(tail) <= rules.acf_small))
        return short and small >= rules.lag_frac, {"acf1": c1, "acf1_outside_band": short, "tail_small_frac": small}

    if fact in (2, 4, 7):
        c, lo, hi = get("fact2.kurtosis")
        if c is None or lo is None:
            return None, {}
        i = _first_finite(c.values)
        if i is None or not np.isfinite(hi[i]):
            return None, {}
        k0 = c.values[i]
        heavy = bool(k0 > hi[i])
        if fact == 2:
            return heavy, {"kurtosis": k0, "band_hi": hi[i]}
        if fact == 4:
            fin = np.flatnonzero(np.isfinite(c.values))
            if fin.size < 2:
                return None, {}
            k_last = c.values[fin[-1]]
            return heavy and bool(k_last < k0), {"kurtosis_fine": k0, "kurtosis_coarse": k_last}
        cn, lon, hin = get("fact7.kurtosis_norm")
        if cn is None or lon is None:
            return None, {}
        j = np.flatnonzero(cn.grid == c.grid[i])
        if not j.size or not np.isfinite(cn.values[j[0]]) or not np.isfinite(hin[j[0]]):
            return None, {}
        kn = cn.values[j[0]]
        return bool(kn < k0 and kn > hin[j[0]]), {"kurtosis_raw": k0, "kurtosis_norm": kn}

    if fact == 3:
        cs, los, _ = get("fact3.skew")
        cl, lol, hil = get("fact3.loss_fraction")
        if cs is None or cl is None or los is None or lol is None:
            return None, {}
        i = _first_finite(cs.values)
        fin = np.flatnonzero(np.isfinite(cl.values) & np.isfinite(hil))
        if i is None or not fin.size or not np.isfinite(los[i]):
            return None, {}
        j = fin[-1]
        neg = bool(cs.values[i] < los[i])
        lossy = bool(cl.values[j] > hil[j])
        return neg and lossy, {"skew": cs.values[i], "loss_fraction": cl.values[j], "quantile": float(cl.grid[j])}

    if fact == 5:
        c, lo, hi = get("fact5.fano")
        if c is None or lo is None:
            return None, {}
        if not (np.isfinite(c.values[0]) and np.isfinite(hi[0])):
            return None, {}
        return bool(c.values[0] > hi[0]), {"fano": c.values[0], "band_hi": hi[0]}

    if fact in (6, 8):
        c, lo, hi = get("fact6.abs_acf")
        if c is None or lo is None:
            return None, {}
        sel = (c.grid <= rules.cluster_tau) & np.isfinite(c.values) & np.isfinite(hi)
        if not sel.any():
            return None, {}
        above = float(np.mean(c.values[sel] > hi[sel]))
        clustered = above >= rules.lag_frac
        if fact == 6:
            return clustered, {"above_band_frac": above}
        fit = _safe_fit(c, params.fit_range)
        beta = fit.beta if fit is not None else float("nan")
        slow = fit is not None and rules.beta_min < beta <= rules.beta_max
        return bool(clustered and slow), {"above_band_frac": above, "beta": beta}

    if fact == 9:
        c, lo, hi = get("fact9.leverage")
        if c is None or lo is None:
            return None, {}
        l1, lo1 = c.at(1), lo[c.grid == 1]
        if not np.isfinite(l1) or not lo1.size or not np.isfinite(lo1[0]):
            return None, {}
        pos = [t for t in c.grid if t > 0 and np.isfinite(c.at(t)) and np.isfinite(c.at(-t))]
        if not pos:
            return None, {}
        asym = float(np.mean([c.at(t) < c.at(-t) for t in pos]))
        return bool(l1 < lo1[0] and asym >= rules.lag_frac), {"L1": l1, "asym_frac": asym}

    if fact == 10:
        c, lo, hi = get("fact10.volume_vol")
        if c is None or lo is None:
            return None, {}
        if c.meta.get("constant_volume"):
            return False, {"constant_volume": True}
        v0, hi0 = c.at(0), hi[c.grid == 0]
        if not np.isfinite(v0) or not hi0.size or not np.isfinite(hi0[0]):
            return None, {}
        return bool(v0 > hi0[0]), {"corr0": v0, "band_hi": hi0[0]}

    if fact == 11:
        c, lo, hi = get("fact11.D")
        if c is None or lo is None:
            return None, {}
        taus = [t for t in range(1, rules.asym_lags + 1)]
        vals = [(c.at(t), lo[c.grid == t]) for t in taus]
        if any(not np.isfinite(v) or not l.size or not np.isfinite(l[0]) for v, l in vals):
            return None, {}
        return all(v < l[0] for v, l in vals), {"D": [v for v, _ in vals]}

    raise ValueError(f"unknown fact {fact}")


def verdict(fact: int, clock: str, per_symbol_curves: dict[str, dict[str, LagCurve]],
            bands: dict[str, NoiseBand] | None, rules: VerdictRules = VerdictRules(),
            params: FactParams = FactParams()) -> FactResult:
    """Combine per-symbol criteria into supported / not_supported / indeterminate."""
    if not per_symbol_curves:
        return FactResult(fact, clock, INDETERMINATE, "no-symbols")
    if fact not in params.facts or clock not in params.clocks:
        return FactResult(fact, clock, INDETERMINATE, "not-run")
    if not bands:
        return FactResult(fact, clock, INDETERMINATE, "no-band")
    res = FactResult(fact, clock, INDETERMINATE, f"F{fact}")
    for sym in sorted(per_symbol_curves):
        met, detail = _criterion(fact, per_symbol_curves[sym], bands, clock, rules, params)
        res.per_symbol[sym] = met
        res.details[sym] = {k: _plain(v) for k, v in detail.items()}
    n = len(res.per_symbol)
    yes = sum(1 for v in res.per_symbol.values() if v is True)
    unknown = sum(1 for v in res.per_symbol.values() if v is None)
    need = rules.symbol_frac * n
    if yes >= need:
        res.verdict = SUPPORTED
    elif yes + unknown >= need:
        res.verdict = INDETERMINATE
        res.rule_id += ":insufficient-data"
    else:
        res.verdict = NOT_SUPPORTED
    return res


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, list):
        return [_plain(x) for x in v]
    return v
