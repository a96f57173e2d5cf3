import io
from datetime import date, time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import tape_of, ts
from tapefacts.tape import (AUCTION, NS_PER_SECOND, SessionCalendar, Tape, TapeFormatError, Trade,
                            filter_session, parse_tape, tape_stats, write_tape)


def parse_csv(text):
    return parse_tape(text.encode())


# --- parse_tape ------------------------------------------------------------

def test_csv_row_maps_fields():
    tapes, rep = parse_csv("symbol,ts_ns,price,size\nAAPL,1539869400000000000,218.86,100\n")
    (trade,) = list(tapes["AAPL"])
    assert trade == Trade("AAPL", 1539869400000000000, 218.86, 100)
    assert (rep.rows, rep.accepted, rep.malformed, rep.rejected) == (1, 1, 0, 0)


def test_empty_stream():
    tapes, rep = parse_tape(b"")
    assert tapes == {}
    assert rep.rows == 0 and rep.accepted == 0


def test_swapped_timestamps_sorted_and_counted():
    rows = [("X", 20, 1.5, 1), ("X", 10, 1.0, 2)]
    text = "symbol,ts_ns,price,size\n" + "".join(f"{s},{t},{p},{z}\n" for s, t, p, z in rows)
    tapes, rep = parse_csv(text)
    ref = sorted(rows, key=lambda r: r[1])
    assert tapes["X"].ts.tolist() == [r[1] for r in ref]
    assert tapes["X"].price.tolist() == [r[2] for r in ref]
    assert rep.unsorted == {"X": 1}


def test_ties_keep_input_order():
    text = "symbol,ts_ns,price,size\nX,5,1.0,1\nX,3,2.0,1\nX,5,3.0,1\nX,5,4.0,1\n"
    tapes, _ = parse_csv(text)
    assert tapes["X"].price.tolist() == [2.0, 1.0, 3.0, 4.0]


def test_bad_rows_rejected_or_malformed():
    text = ("symbol,ts_ns,price,size\n"
            "X,1,10.0,100\n"
            "X,2,-1.0,100\n"     # negative price: rejected
            "X,3,10.0,0\n"       # zero size: rejected
            "X,abc,10.0,5\n"     # unparsable ts: malformed
            "X,4,nope,5\n")      # unparsable price: malformed
    tapes, rep = parse_csv(text)
    assert len(tapes["X"]) == 1
    assert rep.rejected == 2 and rep.malformed == 2 and rep.rows == 5


def test_unreadable_header():
    with pytest.raises(TapeFormatError):
        parse_csv("sym,time,px\nX,1,1.0\n")


def test_symbols_grouped():
    text = "symbol,ts_ns,price,size\nB,1,1.0,1\nA,2,2.0,1\nB,3,3.0,1\n"
    tapes, _ = parse_csv(text)
    assert sorted(tapes) == ["A", "B"]
    assert tapes["B"].price.tolist() == [1.0, 3.0]


def test_cond_column():
    text = "symbol,ts_ns,price,size,cond\nX,1,1.0,1,A\nX,2,1.0,1,\n"
    tapes, _ = parse_csv(text)
    assert tapes["X"].cond.tolist() == [AUCTION, 0]


def test_truncated_binary():
    buf = io.BytesIO()
    write_tape(tape_of([("2018-10-18 10:00:00", 10.0)]), buf, "bin")
    with pytest.raises(TapeFormatError):
        parse_tape(buf.getvalue()[:-3])


trade_rows = st.lists(
    st.tuples(st.sampled_from(["A", "BB", "CCC"]),
              st.integers(0, 2 ** 62),
              st.floats(1e-6, 1e6, allow_nan=False, allow_infinity=False),
              st.integers(1, 10 ** 9),
              st.sampled_from(["", "A", "F"])),
    max_size=40)


@pytest.mark.parametrize("fmt", ["csv", "bin"])
@given(rows=trade_rows)
def test_round_trip_lossless(fmt, rows):
    text = "symbol,ts_ns,price,size,cond\n" + "".join(f"{s},{t},{p!r},{z},{c}\n" for s, t, p, z, c in rows)
    tapes, _ = parse_csv(text)
    buf = io.BytesIO()
    write_tape(tapes.values(), buf, fmt)
    again, rep = parse_tape(buf.getvalue(), fmt)
    assert sorted(again) == sorted(tapes)
    for sym in tapes:
        assert again[sym].equals(tapes[sym])
    assert rep.malformed == 0 and rep.rejected == 0


# --- filter_session ----------------------------------------------------------

def test_session_boundaries(calendar):
    t = tape_of([("2018-10-18 09:29:59.999", 10), ("2018-10-18 09:30:00.000", 10),
                 ("2018-10-18 15:59:59.999", 10), ("2018-10-18 16:00:00.000", 10)])
    kept = filter_session(t, calendar)
    assert kept.ts.tolist() == [ts("2018-10-18 09:30:00"), ts("2018-10-18 15:59:59.999")]


def test_ten_trades_three_after_close(calendar):
    rows = [(f"2018-10-18 {h}", 10) for h in
            ["09:31", "10:00", "11:00", "12:00", "13:00", "14:00", "15:59", "16:00", "16:30", "19:00"]]
    assert len(filter_session(tape_of(rows), calendar)) == 7


def test_auction_flag_removed(calendar):
    t = tape_of([("2018-10-18 09:30:00", 10), ("2018-10-18 10:00:00", 10)])
    t = Tape(t.symbol, t.ts, t.price, t.size, np.array([AUCTION, 0]))
    assert len(filter_session(t, calendar)) == 1


def test_trading_days_restrict():
    t = tape_of([("2018-10-18 10:00", 10), ("2018-10-19 10:00", 10)])
    cal = SessionCalendar(trading_days=(date(2018, 10, 19),))
    assert filter_session(t, cal).ts.tolist() == [ts("2018-10-19 10:00")]


def test_dst_handled():
    # 09:30 New York is 13:30 UTC in summer and 14:30 UTC in winter
    t = tape_of([("2018-07-02 09:30", 10), ("2018-12-03 09:30", 10)])
    assert len(filter_session(t, SessionCalendar())) == 2


def test_early_close():
    cal = SessionCalendar(early_closes=((date(2018, 11, 23), time(13)),))
    t = tape_of([("2018-11-23 12:59", 10), ("2018-11-23 13:00", 10), ("2018-11-26 15:00", 10)])
    assert len(filter_session(t, cal)) == 2


def test_calendar_invariants():
    with pytest.raises(ValueError):
        SessionCalendar(time(16), time(9, 30))
    with pytest.raises(ValueError):
        SessionCalendar(trading_days=(date(2018, 1, 3), date(2018, 1, 2)))


@given(st.lists(st.integers(0, 3 * 86_400), min_size=1, max_size=50))
def test_filter_idempotent(seconds):
    base = ts("2018-10-17 00:00:00")
    t = Tape("X", sorted(base + s * NS_PER_SECOND for s in seconds), [1.0] * len(seconds), [1] * len(seconds))
    cal = SessionCalendar()
    once = filter_session(t, cal)
    assert filter_session(once, cal).equals(once)


# --- tape_stats --------------------------------------------------------------

def test_interarrival_median(calendar):
    t0 = ts("2018-10-18 10:00:00")
    tape = Tape("X", [t0, t0 + 1000, t0 + 3000], [1.0] * 3, [1] * 3)
    s = tape_stats(tape, calendar)
    assert s.ia_count == 2
    assert s.ia_median == 1500 and s.ia_min == 1000 and s.ia_max == 2000 and s.ia_mean == 1500


def test_single_trade_no_interarrival(calendar):
    s = tape_stats(tape_of([("2018-10-18 10:00", 10)]), calendar)
    assert s.ia_count == 0 and not s.interarrival_defined and np.isnan(s.ia_mean)


def test_trades_per_day(calendar):
    rows = [(f"2018-10-18 10:0{i}", 10) for i in range(5)] + [(f"2018-10-19 11:0{i}", 10) for i in range(7)]
    s = tape_stats(tape_of(rows), calendar)
    assert (s.mean, s.max, s.min, s.total, s.days) == (6, 7, 5, 12, 2)


def test_zero_trade_symbol(calendar):
    s = tape_stats(Tape.empty("X"), calendar)
    assert s.total == 0 and not s.interarrival_defined


def test_interarrival_does_not_cross_days(calendar):
    s = tape_stats(tape_of([("2018-10-18 15:59", 1), ("2018-10-19 09:31", 1)]), calendar)
    assert s.ia_count == 0


@given(st.lists(st.integers(0, 6 * 3600 * 1000), min_size=1, max_size=60), st.booleans())
def test_stats_invariants(ms, dup):
    base = ts("2018-10-18 09:30:00")
    stamps = sorted(base + m * 10 ** 6 for m in ms)
    if dup:
        stamps.append(stamps[-1])
    tape = filter_session(Tape("X", stamps, [1.0] * len(stamps), [1] * len(stamps)), SessionCalendar())
    s = tape_stats(tape, SessionCalendar())
    assert s.total == len(tape)
    if s.days:
        assert s.min <= s.mean <= s.max
    if s.interarrival_defined:
        zero_gap = bool(np.any(np.diff(tape.ts) == 0))
        assert s.ia_min >= 0
        assert (s.ia_min == 0) == zero_gap


def test_csv_price_exact_round_trip():
    p = 180144.73384551593
    tapes, _ = parse_csv(f"symbol,ts_ns,price,size\nA,0,{p!r},1\n")
    assert tapes["A"].price[0] == p
