"""Synthetic tapes: the iid white-noise null model, a GARCH-type clustering
control, and min/max envelopes of any analyzer over white-noise replicates.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from datetime import date, datetime, time
from zoneinfo import ZoneInfo

import numpy as np
from numba import njit

from .tape import NS_PER_DAY, NS_PER_SECOND, SessionCalendar, Tape

__all__ = ["WHITE_NOISE", "CLUSTERING", "GenSpec", "trading_days", "calendar_for", "gen_white_noise",
           "gen_clustering", "generate", "symbol_rng", "NoiseBand", "replicate_rng", "noise_band", "envelope",
           "save_bands", "load_bands", "replace"]

WHITE_NOISE = "white_noise"
CLUSTERING = "clustering"


@dataclass(frozen=True)
class GenSpec:
    """Parameters of a synthetic tape.

    ``variance_reading="stddev"`` treats ``return_variance`` as the standard
    deviation of trade returns instead of their variance.
    """

    kind: str = WHITE_NOISE
    days: int = 103
    trades_per_day: int = 250_000
    return_variance: float = 1e-4
    variance_reading: str = "variance"
    omega: float | None = None
    alpha: float = 0.09
    beta: float = 0.90
    start_price: float = 100.0
    start_date: date = date(2018, 10, 18)
    size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (WHITE_NOISE, CLUSTERING):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if self.trades_per_day < 1:
            raise ValueError("trades_per_day must be >= 1")
        if not self.return_variance > 0:
            raise ValueError("return_variance must be positive")
        if self.variance_reading not in ("variance", "stddev"):
            raise ValueError(f"variance_reading must be 'variance' or 'stddev', got {self.variance_reading!r}")
        if not self.start_price > 0:
            raise ValueError("start_price must be positive")
        if self.kind == CLUSTERING:
            if self.alpha < 0 or self.beta < 0:
                raise ValueError("alpha and beta must be non-negative")
            if self.alpha + self.beta >= 1:
                raise ValueError(f"stationarity requires alpha + beta < 1, got {self.alpha + self.beta:g}")
            if self.omega is not None and not self.omega > 0:
                raise ValueError("omega must be positive")

    @property
    def variance(self) -> float:
        v = self.return_variance
        return v if self.variance_reading == "variance" else v * v

    @property
    def garch_omega(self) -> float:
        """omega giving the requested unconditional variance unless set explicitly."""
        if self.omega is not None:
            return self.omega
        return self.variance * (1.0 - self.alpha - self.beta)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start_date"] = self.start_date.isoformat()
        return d


def trading_days(spec: GenSpec) -> tuple[date, ...]:
    start = np.datetime64(spec.start_date, "D")
    first = np.busday_offset(start, 0, roll="forward")
    days = np.busday_offset(first, np.arange(spec.days), roll="forward")
    return tuple(d.astype(object) for d in days)


def calendar_for(spec: GenSpec, base: SessionCalendar | None = None) -> SessionCalendar:
    base = base or SessionCalendar()
    return replace(base, trading_days=trading_days(spec))


def _utc_offsets_ns(days: tuple[date, ...], tz: str) -> np.ndarray:
    zone = ZoneInfo(tz)
    # a regular session never spans a DST switch, so noon's offset holds all day
    return np.array([int(datetime.combine(d, time(12), zone).utcoffset().total_seconds()) * NS_PER_SECOND
                     for d in days], dtype=np.int64)


def _timestamps(spec: GenSpec, calendar: SessionCalendar, rng: np.random.Generator) -> np.ndarray:
    days = calendar.trading_days
    ordinals = calendar.day_ordinals()
    tod = rng.integers(calendar.open_ns, calendar.close_ns, size=(len(days), spec.trades_per_day), dtype=np.int64)
    tod.sort(axis=1)
    base = ordinals * NS_PER_DAY - _utc_offsets_ns(days, calendar.tz)
    tod += base[:, None]
    return tod.ravel()


@njit(cache=True)
def _garch_path(z, omega, alpha, beta, var0):
    out = np.empty_like(z)
    s2 = var0
    for k in range(z.size):
        r = math.sqrt(s2) * z[k]
        out[k] = r
        s2 = omega + alpha * r * r + beta * s2
    return out


def _price_path(returns: np.ndarray, start_price: float) -> np.ndarray:
    logp = np.cumsum(returns)
    logp += math.log(start_price)
    return np.exp(logp, out=logp)


def _rng(spec: GenSpec, rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(spec.seed)


def gen_white_noise(spec: GenSpec, symbol: str = "WN", calendar: SessionCalendar | None = None,
                    rng: np.random.Generator | None = None) -> Tape:
    """iid normal trade-level log-returns at uniformly scattered session timestamps."""
    if spec.kind != WHITE_NOISE:
        raise ValueError("gen_white_noise needs kind='white_noise'")
    cal = calendar_for(spec, calendar)
    rng = _rng(spec, rng)
    ts = _timestamps(spec, cal, rng)
    r = rng.standard_normal(ts.size)
    r *= math.sqrt(spec.variance)
    price = _price_path(r, spec.start_price)
    return Tape(symbol, ts, price, np.full(ts.size, spec.size, dtype=np.int64))


def gen_clustering(spec: GenSpec, symbol: str = "GC", calendar: SessionCalendar | None = None,
                   rng: np.random.Generator | None = None) -> Tape:
    """GARCH(1,1) trade-level log-returns, started at the unconditional variance."""
    if spec.kind != CLUSTERING:
        raise ValueError("gen_clustering needs kind='clustering'")
    cal = calendar_for(spec, calendar)
    rng = _rng(spec, rng)
    ts = _timestamps(spec, cal, rng)
    z = rng.standard_normal(ts.size)
    omega = spec.garch_omega
    var0 = omega / (1.0 - spec.alpha - spec.beta)
    r = _garch_path(z, omega, spec.alpha, spec.beta, var0)
    price = _price_path(r, spec.start_price)
    return Tape(symbol, ts, price, np.full(ts.size, spec.size, dtype=np.int64))


def generate(spec: GenSpec, symbol: str, calendar: SessionCalendar | None = None,
             rng: np.random.Generator | None = None) -> Tape:
    fn = gen_white_noise if spec.kind == WHITE_NOISE else gen_clustering
    return fn(spec, symbol, calendar, rng)


def symbol_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for the index-th synthetic data symbol (disjoint from band replicates)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


# --------------------------------------------------------------------------
# white-noise envelopes
# --------------------------------------------------------------------------

@dataclass
class NoiseBand:
    """Pointwise min/max of one statistic over white-noise replicates.

    ``n_valid`` counts the replicates that produced a finite value at each
    grid point; points no replicate could evaluate have NaN bounds.
    """

    stat_id: str
    grid: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_valid: np.ndarray
    replicates: int
    seed: int

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        self.n_valid = np.asarray(self.n_valid, dtype=np.int64)

    def bounds_at(self, x) -> tuple[float, float]:
        i = np.flatnonzero(self.grid == x)
        if not i.size:
            return float("nan"), float("nan")
        return float(self.lo[i[0]]), float(self.hi[i[0]])

    def to_json(self) -> dict:
        return {"stat_id": self.stat_id, "grid": self.grid.tolist(),
                "lo": [_json_float(v) for v in self.lo.tolist()],
                "hi": [_json_float(v) for v in self.hi.tolist()],
                "n_valid": self.n_valid.tolist(), "replicates": self.replicates, "seed": self.seed}

    @classmethod
    def from_json(cls, d: dict) -> "NoiseBand":
        nan = float("nan")
        return cls(d["stat_id"], np.array(d["grid"]),
                   np.array([nan if v is None else v for v in d["lo"]], dtype=np.float64),
                   np.array([nan if v is None else v for v in d["hi"]], dtype=np.float64),
                   np.array(d["n_valid"]), d["replicates"], d["seed"])


def _json_float(v: float):
    return None if not math.isfinite(v) else v


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(seed + replicate)


def _run_replicate(args):
    analyzer, spec, seed, r = args
    noise = replace(spec, kind=WHITE_NOISE)
    tape = gen_white_noise(noise, symbol=f"NOISE{r:04d}", rng=replicate_rng(seed, r))
    return analyzer(tape)


def noise_band(analyzer, spec: GenSpec, replicates: int = 100, seed: int = 0,
               workers: int = 1) -> dict[str, NoiseBand]:
    """Envelope every curve ``analyzer`` returns over white-noise replicate tapes.

    ``analyzer`` maps a Tape to ``{stat_key: LagCurve}`` and must be picklable
    when ``workers > 1``. Replicate r is generated from ``seed + r``, so the
    band does not depend on worker count or completion order.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    jobs = [(analyzer, spec, seed, r) for r in range(replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, jobs))
    else:
        results = [_run_replicate(j) for j in jobs]
    return envelope(results, replicates, seed)


def envelope(results: list[dict], replicates: int, seed: int) -> dict[str, NoiseBand]:
    bands = {}
    for key in sorted({k for res in results for k in res}):
        curves = [res[key] for res in results if key in res]
        grid = np.unique(np.concatenate([c.grid for c in curves]))
        stack = np.full((len(curves), grid.size), np.nan)
        for i, c in enumerate(curves):
            stack[i, np.searchsorted(grid, c.grid)] = c.values
        finite = np.isfinite(stack)
        n_valid = finite.sum(axis=0)
        with np.errstate(invalid="ignore"):
            lo = np.where(n_valid > 0, np.nanmin(np.where(finite, stack, np.inf), axis=0), np.nan)
            hi = np.where(n_valid > 0, np.nanmax(np.where(finite, stack, -np.inf), axis=0), np.nan)
        bands[key] = NoiseBand(key, grid, lo, hi, n_valid, replicates, seed)
    return bands


def save_bands(bands: dict[str, NoiseBand], path) -> None:
    with open(path, "w") as fh:
        json.dump({k: b.to_json() for k, b in sorted(bands.items())}, fh, sort_keys=True, indent=1)


def load_bands(path) -> dict[str, NoiseBand]:
    with open(path) as fh:
        return {k: NoiseBand.from_json(v) for k, v in json.load(fh).items()}
