import numpy as np
import pandas as pd
import pytest
from hypothesis import HealthCheck, settings

from tapefacts.series import CLOCK, EVENT, RAW, ReturnSeries
from tapefacts.tape import SessionCalendar, Tape, Trade

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TZ = "America/New_York"


def ts(stamp: str) -> int:
    """Exchange-local 'YYYY-MM-DD HH:MM:SS[.fff]' to UTC epoch nanoseconds."""
    return pd.Timestamp(stamp, tz=TZ).value


def tape_of(rows, symbol="X"):
    """Tape from (local stamp, price[, size]) rows."""
    trades = [Trade(symbol, ts(r[0]), float(r[1]), int(r[2]) if len(r) > 2 else 100) for r in rows]
    return Tape.from_trades(trades)


def returns_of(days, clock=EVENT, scale=1, stage=RAW, symbol="X"):
    """ReturnSeries from a list of per-day value lists (NaN allowed)."""
    sizes = [len(d) for d in days]
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    vals = np.concatenate([np.asarray(d, dtype=np.float64) for d in days]) if days else np.empty(0)
    return ReturnSeries(symbol, clock, scale, np.arange(17800, 17800 + len(days)), offsets, vals, stage)


def random_walk_tape(n_days=3, per_day=400, seed=0, symbol="X", sigma=1e-3, sizes=None):
    """Uniform timestamps, normal log-returns; a small general-purpose fixture."""
    from tapefacts.synth import GenSpec, calendar_for, generate
    spec = GenSpec(days=n_days, trades_per_day=per_day, return_variance=sigma ** 2, seed=seed)
    cal = calendar_for(spec)
    tape = generate(spec, symbol, cal)
    if sizes is not None:
        tape = Tape(symbol, tape.ts, tape.price, sizes(tape), tape.cond)
    return tape, cal


@pytest.fixture
def calendar():
    return SessionCalendar()


__all__ = ["ts", "tape_of", "returns_of", "random_walk_tape", "CLOCK", "EVENT"]


# acceptance criteria outcomes, printed in the terminal summary
CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, line = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {line}")
