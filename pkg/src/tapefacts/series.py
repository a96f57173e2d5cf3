"""Clock-time and event-time price/return series.

Both series kinds share one flat layout: values for all days concatenated,
with ``offsets`` marking where each day starts (day d is
``[offsets[d], offsets[d+1])``). A bucket with no defined price holds NaN,
and so does every return at a day's first bucket, so a lag pair can never
straddle a day boundary or read an invented price.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta

import numpy as np

from .stats import stddev
from .tape import SessionCalendar, Tape, local_clock

log = logging.getLogger(__name__)

CLOCK = "clock"
EVENT = "event"

RAW = "raw"
DAILY = "daily_normalized"
FULL = "fully_normalized"

_EPOCH = date(1970, 1, 1)


def _slots(offsets: np.ndarray) -> np.ndarray:
    sizes = np.diff(offsets)
    return np.arange(offsets[-1], dtype=np.int64) - np.repeat(offsets[:-1], sizes)


@dataclass(eq=False)
class PriceSeries:
    """Last-trade log-prices per bucket plus bucket metadata.

    ``scale`` is the bucket width in nanoseconds (clock) or trades per bucket
    (event). ``ohlc`` is only filled when a builder is asked for it.
    """

    symbol: str
    clock: str
    scale: int
    days: np.ndarray
    offsets: np.ndarray
    log_price: np.ndarray
    volume: np.ndarray
    trade_count: np.ndarray
    ohlc: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None
    session_open_ns: int = 0

    @property
    def n_days(self) -> int:
        return int(self.days.size)

    def day_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def slot(self) -> np.ndarray:
        return _slots(self.offsets)

    def labels(self) -> np.ndarray:
        """Bucket end time-of-day in ns (clock) or trade offset in the day (event)."""
        if self.clock == CLOCK:
            return self.session_open_ns + (self.slot() + 1) * self.scale
        return self.slot() * self.scale


@dataclass(eq=False)
class ReturnSeries:
    symbol: str
    clock: str
    scale: int
    days: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    stage: str = RAW

    @property
    def n_days(self) -> int:
        return int(self.days.size)

    def slot(self) -> np.ndarray:
        return _slots(self.offsets)

    def finite(self) -> np.ndarray:
        v = self.values
        return v[np.isfinite(v)]

    def day_values(self, d: int) -> np.ndarray:
        return self.values[self.offsets[d]:self.offsets[d + 1]]

    def with_values(self, values: np.ndarray, stage: str | None = None) -> "ReturnSeries":
        return replace(self, values=values, stage=self.stage if stage is None else stage)

    def negated(self) -> "ReturnSeries":
        return self.with_values(-self.values)

    def reversed_within_days(self) -> "ReturnSeries":
        """Reverse bucket order inside every day (offsets unchanged)."""
        v = self.values.copy()
        for d in range(self.n_days):
            a, b = self.offsets[d], self.offsets[d + 1]
            v[a:b] = v[a:b][::-1]
        return self.with_values(v)

    def equals(self, other: "ReturnSeries") -> bool:
        return (self.symbol == other.symbol and self.clock == other.clock
                and self.scale == other.scale and self.stage == other.stage
                and np.array_equal(self.days, other.days)
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.values, other.values, equal_nan=True))


def _day_axis(day: np.ndarray, calendar: SessionCalendar) -> np.ndarray:
    cal = calendar.day_ordinals()
    return cal if cal is not None else np.unique(day)


def build_clock_series(tape: Tape, dt_ns: int, calendar: SessionCalendar,
                       with_ohlc: bool = False) -> PriceSeries:
    """Bucket a session-filtered tape into fixed wall-clock periods.

    Each day gets ``floor(session / dt)`` buckets; trades in a trailing
    partial period are discarded. Empty buckets repeat the previous bucket's
    price with zero volume; buckets before the day's first trade stay NaN.
    """
    dt_ns = int(dt_ns)
    if dt_ns <= 0:
        raise ValueError("bucket width must be positive")
    nb = calendar.session_ns // dt_ns
    if nb == 0:
        raise ValueError("bucket width exceeds the trading session")
    day, tod = local_clock(tape.ts, calendar.tz)
    since_open = tod - calendar.open_ns
    bucket = since_open // dt_ns
    days = _day_axis(day, calendar)
    day_idx = np.searchsorted(days, day)
    keep = (since_open >= 0) & (bucket < nb) & (day_idx < days.size)
    if days.size:
        keep &= days[np.minimum(day_idx, days.size - 1)] == day
    key = day_idx[keep] * nb + bucket[keep]
    price = tape.price[keep]
    size = tape.size[keep]
    ndays = int(days.size)
    total = ndays * nb

    close = np.full(total, np.nan)
    volume = np.zeros(total, dtype=np.int64)
    count = np.zeros(total, dtype=np.int64)
    ohlc = None
    if key.size:
        if np.any(np.diff(key) < 0):
            raise ValueError("tape is not sorted by timestamp")
        starts = np.concatenate(([0], np.flatnonzero(np.diff(key)) + 1))
        ends = np.concatenate((starts[1:], [key.size]))
        slots = key[starts]
        close[slots] = price[ends - 1]
        volume[slots] = np.add.reduceat(size, starts)
        count[slots] = ends - starts
        if with_ohlc:
            o = np.full(total, np.nan)
            h = np.full(total, np.nan)
            lo = np.full(total, np.nan)
            o[slots] = price[starts]
            h[slots] = np.maximum.reduceat(price, starts)
            lo[slots] = np.minimum.reduceat(price, starts)
            ohlc = (o, h, lo)
    traded = ~np.isnan(close)
    filled = _ffill_days(close.reshape(ndays, nb)).ravel() if total else close
    if calendar.early_closes and total:
        # buckets past a shortened session (or straddling its close) do not exist that day
        last = (calendar.close_ns_on(days) - calendar.open_ns) // dt_ns
        gone = (np.arange(nb)[None, :] >= last[:, None]).ravel()
        filled[gone] = np.nan
        close[gone] = np.nan
        traded &= ~gone
    if with_ohlc:
        if ohlc is None:
            ohlc = (np.full(total, np.nan),) * 3
        o, h, lo = (np.where(traded, a, filled) for a in ohlc)
        ohlc = (o, h, lo, filled.copy())
    with np.errstate(invalid="ignore"):
        log_price = np.log(filled)
    return PriceSeries(tape.symbol, CLOCK, dt_ns, days, np.arange(ndays + 1, dtype=np.int64) * nb,
                       log_price, volume, count, ohlc, calendar.open_ns)


def _ffill_days(grid: np.ndarray) -> np.ndarray:
    """Forward-fill NaNs along each row, never across rows."""
    ncol = grid.shape[1]
    idx = np.where(~np.isnan(grid), np.arange(ncol), -1)
    np.maximum.accumulate(idx, axis=1, out=idx)
    out = np.take_along_axis(grid, np.maximum(idx, 0), axis=1)
    out[idx < 0] = np.nan
    return out


def build_event_series(tape: Tape, n: int, calendar: SessionCalendar | None = None,
                       with_ohlc: bool = False) -> PriceSeries:
    """Group each day's trades into consecutive disjoint blocks of ``n``.

    The bucket price is the last trade of the block; a day's trailing partial
    block is dropped.
    """
    n = int(n)
    if n < 1:
        raise ValueError("trades per bucket must be >= 1")
    calendar = calendar or SessionCalendar()
    day, _ = local_clock(tape.ts, calendar.tz)
    days = _day_axis(day, calendar)
    ndays = int(days.size)
    first = np.searchsorted(day, days, side="left")
    last = np.searchsorted(day, days, side="right")
    per_day = (last - first) // n
    offsets = np.concatenate(([0], np.cumsum(per_day))).astype(np.int64)

    if n == 1 and int((last - first).sum()) == tape.ts.size:
        # every trade is its own bucket: share the tape's arrays
        price = tape.price
        log_price = np.log(price)
        ohlc = (price, price, price, price) if with_ohlc else None
        return PriceSeries(tape.symbol, EVENT, 1, days, offsets, log_price, tape.size,
                           np.ones(price.size, dtype=np.int32), ohlc, calendar.open_ns)

    idx = np.concatenate([np.arange(f, f + k * n) for f, k in zip(first, per_day)]) \
        if ndays else np.empty(0, np.int64)
    price = tape.price[idx].reshape(-1, n)
    size = tape.size[idx].reshape(-1, n)
    close = price[:, -1].copy()
    ohlc = None
    if with_ohlc:
        ohlc = (price[:, 0].copy(), price.max(axis=1), price.min(axis=1), close)
    return PriceSeries(tape.symbol, EVENT, n, days, offsets, np.log(close), size.sum(axis=1),
                       np.full(close.size, n, dtype=np.int32), ohlc, calendar.open_ns)


def log_returns(series: PriceSeries) -> ReturnSeries:
    """Within-day first differences of log-price; day-first buckets are NaN."""
    lp = series.log_price
    values = np.empty_like(lp)
    if lp.size:
        np.subtract(lp[1:], lp[:-1], out=values[1:])
        starts = series.offsets[:-1]
        values[starts[starts < lp.size]] = np.nan
    return ReturnSeries(series.symbol, series.clock, series.scale, series.days,
                        series.offsets, values, RAW)


def normalize_returns(rs: ReturnSeries, v_mode: str = "abs") -> ReturnSeries:
    """Divide by each day's return stddev, then (clock-time only) by the
    cross-day average magnitude at the same time-of-day slot.

    ``v_mode="signed"`` uses the plain signed mean at each slot instead of the
    mean absolute value.
    """
    if rs.stage != RAW:
        raise ValueError(f"expected raw returns, got stage {rs.stage!r}")
    if v_mode not in ("abs", "signed"):
        raise ValueError(f"unknown v_mode {v_mode!r}")
    out = np.full_like(rs.values, np.nan)
    for d in range(rs.n_days):
        a, b = rs.offsets[d], rs.offsets[d + 1]
        seg = rs.values[a:b]
        ok = np.isfinite(seg)
        if ok.sum() < 2:
            continue  # a single return has no daily scale
        sigma = stddev(seg[ok])
        if sigma == 0.0:
            log.warning("%s: day %s has zero return stddev, dropped", rs.symbol, _EPOCH + timedelta(int(rs.days[d])))
            continue
        out[a:b] = seg / sigma
    if rs.clock == EVENT:
        return rs.with_values(out, DAILY)

    slot = rs.slot()
    nslot = int(slot.max()) + 1 if slot.size else 0
    ok = np.isfinite(out)
    w = np.abs(out) if v_mode == "abs" else out
    num = np.bincount(slot[ok], weights=w[ok], minlength=nslot)
    den = np.bincount(slot[ok], minlength=nslot)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = num / den
    zero = (den > 0) & (v == 0)
    if zero.any():
        log.warning("%s: %d time-of-day slots with zero scale dropped", rs.symbol, int(zero.sum()))
    v[~(np.isfinite(v) & (v != 0))] = np.nan
    return rs.with_values(out / v[slot], FULL)


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------

RETURN_COLUMNS = ("symbol", "clock_kind", "scale", "day", "bucket", "value")


def write_returns_csv(series: list[ReturnSeries] | ReturnSeries, stream: io.TextIOBase) -> None:
    """Long-form export; NaN is an empty cell and a bucket of -1 marks an empty day."""
    if isinstance(series, ReturnSeries):
        series = [series]
    w = csv.writer(stream, lineterminator="\n")
    stages = sorted({s.stage for s in series}) or [RAW]
    if len(stages) > 1:
        raise ValueError("all exported series must share one stage")
    stream.write(f"# stage={stages[0]}\n")
    w.writerow(RETURN_COLUMNS)
    for s in series:
        for d in range(s.n_days):
            iso = (_EPOCH + timedelta(int(s.days[d]))).isoformat()
            vals = s.day_values(d)
            if vals.size == 0:
                w.writerow((s.symbol, s.clock, s.scale, iso, -1, ""))
                continue
            for k, v in enumerate(vals.tolist()):
                w.writerow((s.symbol, s.clock, s.scale, iso, k, "" if math.isnan(v) else repr(v)))


def read_returns_csv(stream: io.TextIOBase) -> list[ReturnSeries]:
    first = stream.readline()
    if not first.startswith("# stage="):
        raise ValueError("missing stage comment line")
    stage = first.strip().split("=", 1)[1]
    reader = csv.reader(stream)
    if tuple(next(reader)) != RETURN_COLUMNS:
        raise ValueError("unexpected return CSV header")
    groups: dict[tuple, dict] = {}
    for sym, kind, scale, iso, bucket, value in reader:
        g = groups.setdefault((sym, kind, int(scale)), {})
        day = (date.fromisoformat(iso) - _EPOCH).days
        vals = g.setdefault(day, [])
        if int(bucket) >= 0:
            vals.append(float(value) if value else np.nan)
    out = []
    for (sym, kind, scale), by_day in groups.items():
        days = np.array(list(by_day), dtype=np.int64)
        sizes = [len(v) for v in by_day.values()]
        offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        values = np.array([x for v in by_day.values() for x in v], dtype=np.float64)
        out.append(ReturnSeries(sym, kind, scale, days, offsets, values, stage))
    return out
