"""Trade-tape ingestion, session filtering and descriptive tape statistics.

Tapes are held column-wise (one numpy array per field) because real tapes run
to tens of millions of rows per symbol. Timestamps are integer nanoseconds
since the Unix epoch (UTC); session rules are applied in exchange-local time.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from datetime import date, time
from typing import BinaryIO, Iterable, Iterator

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

NS_PER_SECOND = 1_000_000_000
NS_PER_MINUTE = 60 * NS_PER_SECOND
NS_PER_DAY = 24 * 3600 * NS_PER_SECOND

AUCTION = ord("A")
CSV_COLUMNS = ("symbol", "ts_ns", "price", "size")
BIN_MAGIC = b"TFTAPE01"


class TapeFormatError(ValueError):
    """Raised when a tape stream cannot be read at all."""


@dataclass(frozen=True, slots=True)
class Trade:
    symbol: str
    ts: int
    price: float
    size: int
    cond: str = ""

    def __post_init__(self):
        if not self.price > 0:
            raise ValueError(f"price must be positive, got {self.price}")
        if self.size < 1:
            raise ValueError(f"size must be >= 1, got {self.size}")


@dataclass(eq=False)
class Tape:
    """All trades of one symbol, sorted by timestamp (ties keep input order).

    ``cond`` holds the ASCII code of the optional one-letter condition field,
    0 when absent.
    """

    symbol: str
    ts: np.ndarray
    price: np.ndarray
    size: np.ndarray
    cond: np.ndarray | None = None

    def __post_init__(self):
        self.ts = np.ascontiguousarray(self.ts, dtype=np.int64)
        self.price = np.ascontiguousarray(self.price, dtype=np.float64)
        self.size = np.ascontiguousarray(self.size, dtype=np.int64)
        if self.cond is None:
            self.cond = np.zeros(self.ts.size, dtype=np.uint8)
        else:
            self.cond = np.ascontiguousarray(self.cond, dtype=np.uint8)
        n = self.ts.size
        if not (self.price.size == self.size.size == self.cond.size == n):
            raise ValueError("tape columns differ in length")

    def __len__(self) -> int:
        return int(self.ts.size)

    def __iter__(self) -> Iterator[Trade]:
        for t, p, s, c in zip(self.ts.tolist(), self.price.tolist(),
                              self.size.tolist(), self.cond.tolist()):
            yield Trade(self.symbol, t, p, s, chr(c) if c else "")

    def take(self, index) -> "Tape":
        return Tape(self.symbol, self.ts[index], self.price[index],
                    self.size[index], self.cond[index])

    def equals(self, other: "Tape") -> bool:
        return (self.symbol == other.symbol
                and np.array_equal(self.ts, other.ts)
                and np.array_equal(self.price, other.price)
                and np.array_equal(self.size, other.size)
                and np.array_equal(self.cond, other.cond))

    @classmethod
    def from_trades(cls, trades: Iterable[Trade]) -> "Tape":
        trades = list(trades)
        if not trades:
            raise ValueError("cannot infer symbol from an empty trade list")
        sym = trades[0].symbol
        if any(t.symbol != sym for t in trades):
            raise ValueError("trades span several symbols")
        return cls(sym,
                   np.array([t.ts for t in trades], dtype=np.int64),
                   np.array([t.price for t in trades], dtype=np.float64),
                   np.array([t.size for t in trades], dtype=np.int64),
                   np.array([ord(t.cond) if t.cond else 0 for t in trades], dtype=np.uint8))

    @classmethod
    def empty(cls, symbol: str) -> "Tape":
        return cls(symbol, np.empty(0, np.int64), np.empty(0), np.empty(0, np.int64))


@dataclass(frozen=True)
class SessionCalendar:
    """Regular trading session in exchange-local time.

    ``trading_days=None`` accepts every local date that has a trade inside the
    session window. ``early_closes`` lists (date, close) pairs for shortened
    sessions; clock-time buckets after an early close are absent.
    """

    session_open: time = time(9, 30)
    session_close: time = time(16, 0)
    trading_days: tuple[date, ...] | None = None
    tz: str = "America/New_York"
    early_closes: tuple[tuple[date, time], ...] = ()

    def __post_init__(self):
        if not self.session_open < self.session_close:
            raise ValueError("session_open must precede session_close")
        if self.trading_days is not None:
            days = tuple(self.trading_days)
            if any(b <= a for a, b in zip(days, days[1:])):
                raise ValueError("trading_days must be strictly increasing")
            object.__setattr__(self, "trading_days", days)
        early = tuple(sorted((d, t) for d, t in self.early_closes))
        for d, t in early:
            if not self.session_open < t <= self.session_close:
                raise ValueError(f"early close {t} on {d} outside the session")
        object.__setattr__(self, "early_closes", early)

    @property
    def open_ns(self) -> int:
        return _time_ns(self.session_open)

    @property
    def close_ns(self) -> int:
        return _time_ns(self.session_close)

    @property
    def session_ns(self) -> int:
        return self.close_ns - self.open_ns

    def close_ns_on(self, day: np.ndarray) -> np.ndarray:
        """Local close (ns after midnight) for each day number."""
        day = np.asarray(day, dtype=np.int64)
        out = np.full(day.shape, self.close_ns, dtype=np.int64)
        for d, t in self.early_closes:
            out[day == (d - date(1970, 1, 1)).days] = _time_ns(t)
        return out

    def day_ordinals(self) -> np.ndarray | None:
        """Trading days as integer day numbers since 1970-01-01, or None."""
        if self.trading_days is None:
            return None
        return np.array([(d - date(1970, 1, 1)).days for d in self.trading_days], dtype=np.int64)


def _time_ns(t: time) -> int:
    return ((t.hour * 60 + t.minute) * 60 + t.second) * NS_PER_SECOND + t.microsecond * 1000


def local_clock(ts: np.ndarray, tz: str) -> tuple[np.ndarray, np.ndarray]:
    """Split UTC nanosecond timestamps into (local day number, local time-of-day ns)."""
    ts = np.asarray(ts, dtype=np.int64)
    if ts.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    idx = pd.DatetimeIndex(ts.view("M8[ns]"), tz="UTC").tz_convert(tz).tz_localize(None)
    local = idx.asi8
    day = local // NS_PER_DAY
    tod = local - day * NS_PER_DAY
    return day, tod


# --------------------------------------------------------------------------
# parsing / writing
# --------------------------------------------------------------------------

@dataclass
class ParseReport:
    rows: int = 0
    accepted: int = 0
    malformed: int = 0
    rejected: int = 0
    unsorted: dict[str, int] = field(default_factory=dict)

    @property
    def unsorted_total(self) -> int:
        return sum(self.unsorted.values())


def parse_tape(stream: BinaryIO | bytes, format: str = "auto") -> tuple[dict[str, Tape], ParseReport]:
    """Read a CSV or binary tape into per-symbol sorted tapes.

    Rows with non-positive price or size are rejected; rows that do not parse
    are counted as malformed. Out-of-order timestamps are stably sorted and the
    number of descents per symbol is reported.
    """
    raw = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    raw = bytes(raw)
    if format == "auto":
        format = "bin" if raw.startswith(BIN_MAGIC) else "csv"
    report = ParseReport()
    if format == "csv":
        cols = _parse_csv(raw, report)
    elif format == "bin":
        cols = _parse_bin(raw, report)
    else:
        raise TapeFormatError(f"unknown tape format {format!r}")
    return _finalize(cols, report), report


# Parsers return (names, code, ts, price, size, cond): ``code`` indexes ``names``.

def _parse_csv(raw: bytes, report: ParseReport):
    text = raw.decode("utf-8-sig") if raw else ""
    if not text.strip():
        return [], *_empty_columns()
    header_line = text.partition("\n")[0].strip()
    header = [h.strip() for h in header_line.split(",")]
    if tuple(header[:4]) != CSV_COLUMNS or len(header) > 5 or (len(header) == 5 and header[4] != "cond"):
        raise TapeFormatError(f"bad tape header {header_line!r}; expected symbol,ts_ns,price,size[,cond]")
    body_lines = sum(1 for ln in text.splitlines()[1:] if ln.strip())
    report.rows = body_lines

    df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False,
                     on_bad_lines="skip", skip_blank_lines=True, engine="c")
    if "cond" not in df:
        df["cond"] = ""
    sym = df["symbol"].str.strip()
    ts_s = df["ts_ns"].str.strip()
    size_s = df["size"].str.strip()
    cond_s = df["cond"].str.strip()
    price = _exact_floats(df["price"].str.strip().to_numpy(object))
    ok = (sym.str.len() > 0) & ts_s.str.fullmatch(r"-?\d{1,19}") & size_s.str.fullmatch(r"-?\d{1,18}")
    ok = (ok & (cond_s.str.len() <= 1)).to_numpy(bool) & np.isfinite(price)
    report.malformed = (body_lines - len(df)) + int((~ok).sum())

    code, names = pd.factorize(sym[ok], sort=True)
    cond_ok = cond_s[ok]
    if (cond_ok.str.len() > 0).any():
        cond = np.array([ord(c) if c else 0 for c in cond_ok.tolist()], dtype=np.uint8)
    else:
        cond = np.zeros(int(ok.sum()), np.uint8)
    return (list(names), code.astype(np.int32), ts_s[ok].astype(np.int64).to_numpy(),
            price[ok], size_s[ok].astype(np.int64).to_numpy(), cond)


def _exact_floats(texts: np.ndarray) -> np.ndarray:
    """Correctly rounded str -> float64 (pandas' fast parser can be off by an ulp); bad fields become NaN."""
    try:
        return texts.astype(np.float64)
    except ValueError:
        pass
    out = np.empty(texts.size, np.float64)
    for i, t in enumerate(texts.tolist()):
        try:
            out[i] = float(t)
        except ValueError:
            out[i] = np.nan
    return out


def _parse_bin(raw: bytes, report: ParseReport):
    buf = memoryview(raw)
    pos = len(BIN_MAGIC)
    names, parts = [], []
    try:
        if not raw.startswith(BIN_MAGIC):
            raise TapeFormatError("missing binary tape magic")
        (nsym,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        for _ in range(nsym):
            (slen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            names.append(bytes(buf[pos:pos + slen]).decode("utf-8"))
            pos += slen
            (n,) = struct.unpack_from("<Q", buf, pos)
            pos += 8
            arrays = []
            for dt in ("<i8", "<f8", "<i8", "u1"):
                width = np.dtype(dt).itemsize * n
                if pos + width > len(raw):
                    raise TapeFormatError("truncated binary tape")
                arrays.append(np.frombuffer(buf[pos:pos + width], dtype=dt))
                pos += width
            parts.append(arrays)
    except struct.error as exc:
        raise TapeFormatError(f"truncated binary tape: {exc}") from None
    if pos != len(raw):
        raise TapeFormatError("trailing bytes after binary tape")
    if len(set(names)) != len(names):
        raise TapeFormatError("symbol block repeated in binary tape")
    if not parts:
        return [], *_empty_columns()
    report.rows = sum(p[0].size for p in parts)
    code = np.concatenate([np.full(p[0].size, i, np.int32) for i, p in enumerate(parts)])
    cols = [np.concatenate([p[j] for p in parts]) if len(parts) > 1 else parts[0][j].copy()
            for j in range(4)]
    return (names, code, *cols)


def _empty_columns():
    return (np.empty(0, np.int32), np.empty(0, np.int64), np.empty(0),
            np.empty(0, np.int64), np.empty(0, np.uint8))


def _finalize(cols, report: ParseReport) -> dict[str, Tape]:
    names, code, ts, price, size, cond = cols
    good = (price > 0) & (size >= 1)
    report.rejected = int(np.count_nonzero(~good))
    if report.rejected:
        code, ts, price, size, cond = (a[good] for a in (code, ts, price, size, cond))
    tapes: dict[str, Tape] = {}
    if len(names) == 1:
        groups = [(names[0], None)]
    else:
        order = np.argsort(code, kind="stable")
        bounds = np.searchsorted(code[order], np.arange(len(names) + 1))
        groups = [(names[i], order[bounds[i]:bounds[i + 1]]) for i in range(len(names))]
    for sym, idx in sorted(groups, key=lambda g: g[0]):
        sym_ts = ts if idx is None else ts[idx]
        if sym_ts.size == 0:
            continue
        descents = int(np.count_nonzero(sym_ts[1:] < sym_ts[:-1]))
        report.unsorted[sym] = descents
        if descents:
            log.warning("%s: %d out-of-order timestamps, tape re-sorted", sym, descents)
            order = np.argsort(sym_ts, kind="stable")
            idx = order if idx is None else idx[order]
        if idx is None:
            tapes[sym] = Tape(sym, ts, price, size, cond)
        else:
            tapes[sym] = Tape(sym, ts[idx], price[idx], size[idx], cond[idx])
    report.accepted = sum(len(t) for t in tapes.values())
    return tapes


def write_tape(tapes: Iterable[Tape] | Tape, stream: BinaryIO, format: str = "csv") -> None:
    """Serialize tapes so that ``parse_tape`` reproduces them exactly."""
    if isinstance(tapes, Tape):
        tapes = [tapes]
    tapes = sorted(tapes, key=lambda t: t.symbol)
    if format == "bin":
        stream.write(BIN_MAGIC)
        stream.write(struct.pack("<I", len(tapes)))
        for t in tapes:
            name = t.symbol.encode("utf-8")
            stream.write(struct.pack("<H", len(name)) + name + struct.pack("<Q", len(t)))
            for arr, dt in ((t.ts, "<i8"), (t.price, "<f8"), (t.size, "<i8"), (t.cond, "u1")):
                stream.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
        return
    if format != "csv":
        raise TapeFormatError(f"unknown tape format {format!r}")
    with_cond = any(t.cond.any() for t in tapes)
    header = ",".join(CSV_COLUMNS + (("cond",) if with_cond else ()))
    stream.write((header + "\n").encode())
    for t in tapes:
        if len(t) == 0:
            continue
        frame = {"symbol": np.full(len(t), t.symbol, dtype=object), "ts_ns": t.ts,
                 "price": [repr(p) for p in t.price.tolist()], "size": t.size}
        if with_cond:
            frame["cond"] = [chr(c) if c else "" for c in t.cond.tolist()]
        text = pd.DataFrame(frame).to_csv(index=False, header=False, lineterminator="\n")
        stream.write(text.encode())


# --------------------------------------------------------------------------
# session filter and descriptive statistics
# --------------------------------------------------------------------------

def session_mask(tape: Tape, calendar: SessionCalendar) -> np.ndarray:
    day, tod = local_clock(tape.ts, calendar.tz)
    close = calendar.close_ns_on(day) if calendar.early_closes else calendar.close_ns
    keep = (tod >= calendar.open_ns) & (tod < close) & (tape.cond != AUCTION)
    days = calendar.day_ordinals()
    if days is not None:
        keep &= np.isin(day, days)
    return keep


def filter_session(tape: Tape, calendar: SessionCalendar) -> Tape:
    """Keep trades inside [open, close) local time on trading days, minus auction prints."""
    keep = session_mask(tape, calendar)
    if keep.all():
        return tape
    return tape.take(keep)


@dataclass
class TapeStats:
    symbol: str
    days: int
    total: int
    mean: float
    max: int
    min: int
    ia_count: int
    ia_mean: float
    ia_median: float
    ia_std: float
    ia_min: float
    ia_max: float

    @property
    def interarrival_defined(self) -> bool:
        return self.ia_count > 0


def tape_stats(tape: Tape, calendar: SessionCalendar) -> TapeStats:
    """Trades-per-day and intraday interarrival statistics of a session-filtered tape.

    Interarrivals are nanosecond gaps between consecutive trades on the same
    local day; the standard deviation is the population one.
    """
    day, _ = local_clock(tape.ts, calendar.tz)
    cal_days = calendar.day_ordinals()
    uniq, counts = np.unique(day, return_counts=True)
    if cal_days is not None:
        per_day = np.zeros(cal_days.size, dtype=np.int64)
        pos = np.searchsorted(cal_days, uniq)
        inside = (pos < cal_days.size) & (cal_days[np.minimum(pos, cal_days.size - 1)] == uniq)
        per_day[pos[inside]] = counts[inside]
    else:
        per_day = counts
    same_day = day[1:] == day[:-1]
    gaps = np.diff(tape.ts)[same_day].astype(np.float64)
    nan = float("nan")
    if per_day.size:
        total, mean, mx, mn = int(per_day.sum()), float(per_day.mean()), int(per_day.max()), int(per_day.min())
    else:
        total, mean, mx, mn = 0, nan, 0, 0
    if gaps.size:
        ia = (float(gaps.mean()), float(np.median(gaps)), float(gaps.std()), float(gaps.min()), float(gaps.max()))
    else:
        ia = (nan,) * 5
    return TapeStats(tape.symbol, int(per_day.size), total, mean, mx, mn, int(gaps.size), *ia)
