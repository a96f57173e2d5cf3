"""Scalar estimators shared by the fact analyzers.

Moments are population moments (divide by n) throughout. Sums go through
numpy's pairwise reduction or, inside the lag kernel, Neumaier compensation,
so long tapes do not lose the small terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

DDOF = 0  # population moments everywhere


class UndefinedStatistic(ValueError):
    """The estimator has no value on this input (constant data, too few points...)."""


def _as_float(xs) -> np.ndarray:
    return np.ascontiguousarray(xs, dtype=np.float64)


def csum(xs) -> float:
    """Compensated total of a float array (pairwise summation)."""
    return float(np.sum(_as_float(xs)))


def mean(xs) -> float:
    xs = _as_float(xs)
    if xs.size == 0:
        raise UndefinedStatistic("mean of empty sample")
    return csum(xs) / xs.size


def stddev(xs) -> float:
    xs = _as_float(xs)
    m = mean(xs)
    return math.sqrt(csum((xs - m) ** 2) / xs.size)


def _central_moments(xs, orders, min_n):
    xs = _as_float(xs)
    if xs.size < min_n:
        raise UndefinedStatistic(f"need at least {min_n} observations, got {xs.size}")
    d = xs - mean(xs)
    d2 = d * d
    m2 = csum(d2) / xs.size
    if m2 == 0.0:
        raise UndefinedStatistic("zero variance")
    out = []
    for k in orders:
        if k == 3:
            out.append(csum(d2 * d) / xs.size)
        elif k == 4:
            out.append(csum(d2 * d2) / xs.size)
    return m2, out


def excess_kurtosis(xs) -> float:
    """Fourth central moment over variance squared, minus 3."""
    m2, (m4,) = _central_moments(xs, (4,), 4)
    return m4 / (m2 * m2) - 3.0


def skew(xs) -> float:
    m2, (m3,) = _central_moments(xs, (3,), 3)
    return m3 / m2 ** 1.5


def quantile(xs, q: float) -> float:
    """Linear-interpolation quantile between order statistics (type 7)."""
    xs = _as_float(xs)
    if xs.size == 0:
        raise UndefinedStatistic("quantile of empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    return float(np.quantile(xs, q, method="linear"))


def fano(counts) -> float:
    """Variance-to-mean ratio of event counts."""
    c = _as_float(counts)
    if c.size == 0:
        raise UndefinedStatistic("no windows")
    m = mean(c)
    if m <= 0.0:
        raise UndefinedStatistic("zero mean count")
    return csum((c - m) ** 2) / c.size / m


def pearson(x, y) -> float:
    """Sample product-moment correlation of two equal-length sequences."""
    x, y = _as_float(x), _as_float(y)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    if x.size < 2:
        raise UndefinedStatistic("need at least two pairs")
    dx = x - mean(x)
    dy = y - mean(y)
    sxx, syy = csum(dx * dx), csum(dy * dy)
    # separate roots keep the product of tiny variances from underflowing
    den = math.sqrt(sxx) * math.sqrt(syy)
    if den == 0.0:
        raise UndefinedStatistic("constant input")
    r = csum(dx * dy) / den
    return min(1.0, max(-1.0, r))


# --------------------------------------------------------------------------
# pooled within-day lagged correlation
# --------------------------------------------------------------------------

@njit(cache=True)
def _lag_moments(x, y, offsets, tau):
    # pairs (x[i], y[i + tau]) with both indices inside one day and both finite
    n = 0
    sx = 0.0
    cx = 0.0
    sy = 0.0
    cy = 0.0
    for d in range(offsets.size - 1):
        a = offsets[d]
        b = offsets[d + 1]
        lo = a if tau >= 0 else a - tau
        hi = b - tau if tau >= 0 else b
        for i in range(lo, hi):
            xi = x[i]
            yj = y[i + tau]
            if xi == xi and yj == yj:
                n += 1
                t = sx + xi
                if abs(sx) >= abs(xi):
                    cx += (sx - t) + xi
                else:
                    cx += (xi - t) + sx
                sx = t
                t = sy + yj
                if abs(sy) >= abs(yj):
                    cy += (sy - t) + yj
                else:
                    cy += (yj - t) + sy
                sy = t
    if n == 0:
        return 0, np.nan, np.nan, np.nan, np.nan, np.nan
    mx = (sx + cx) / n
    my = (sy + cy) / n
    sxx = 0.0
    cxx = 0.0
    syy = 0.0
    cyy = 0.0
    sxy = 0.0
    cxy = 0.0
    for d in range(offsets.size - 1):
        a = offsets[d]
        b = offsets[d + 1]
        lo = a if tau >= 0 else a - tau
        hi = b - tau if tau >= 0 else b
        for i in range(lo, hi):
            xi = x[i]
            yj = y[i + tau]
            if xi == xi and yj == yj:
                dx = xi - mx
                dy = yj - my
                v = dx * dx
                t = sxx + v
                if abs(sxx) >= abs(v):
                    cxx += (sxx - t) + v
                else:
                    cxx += (v - t) + sxx
                sxx = t
                v = dy * dy
                t = syy + v
                if abs(syy) >= abs(v):
                    cyy += (syy - t) + v
                else:
                    cyy += (v - t) + syy
                syy = t
                v = dx * dy
                t = sxy + v
                if abs(sxy) >= abs(v):
                    cxy += (sxy - t) + v
                else:
                    cxy += (v - t) + sxy
                sxy = t
    return n, mx, my, sxx + cxx, syy + cyy, sxy + cxy


def lag_corr(x, y, offsets, tau: int) -> tuple[float, int]:
    """corr(x[t], y[t + tau]) pooled over all same-day index pairs.

    ``offsets`` delimits days: day d occupies ``[offsets[d], offsets[d+1])``.
    NaN entries drop their pair. Returns (correlation or NaN, pair count).
    """
    x, y = _as_float(x), _as_float(y)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    n, _, _, sxx, syy, sxy = _lag_moments(x, y, offsets, int(tau))
    den = math.sqrt(sxx) * math.sqrt(syy) if sxx > 0.0 and syy > 0.0 else 0.0
    if n < 2 or not den > 0.0:
        return float("nan"), int(n)
    r = sxy / den
    return min(1.0, max(-1.0, r)), int(n)


def acf(series, tau: int) -> float:
    """Within-day autocorrelation at lag ``tau`` of a ReturnSeries-like object.

    Raises UndefinedStatistic when fewer than two pairs exist or the paired
    values are constant.
    """
    if tau < 0:
        raise ValueError("lag must be non-negative")
    r, n = lag_corr(series.values, series.values, series.offsets, tau)
    if math.isnan(r):
        raise UndefinedStatistic(f"acf undefined at lag {tau} ({n} pairs)")
    return r


# --------------------------------------------------------------------------
# OHLC volatility and power-law fits
# --------------------------------------------------------------------------

def rogers_satchell(o, h, l, c):
    """Per-bucket Rogers-Satchell volatility from open/high/low/close prices."""
    o, h, l, c = (np.asarray(v, dtype=np.float64) for v in (o, h, l, c))
    if np.any(~(o > 0)) or np.any(~(c > 0)) or np.any(~(l > 0)):
        raise ValueError("OHLC prices must be positive")
    if np.any(h < np.maximum(o, c)) or np.any(l > np.minimum(o, c)):
        raise ValueError("OHLC ordering violated: need L <= min(O, C) and H >= max(O, C)")
    lh, ll = np.log(h), np.log(l)
    lo_, lc = np.log(o), np.log(c)
    var = (lh - lo_) * (lh - lc) + (ll - lo_) * (ll - lc)
    out = np.sqrt(var)
    return float(out) if out.ndim == 0 else out


@dataclass
class LagCurve:
    """A statistic evaluated over an increasing lag or timescale grid."""

    stat_id: str
    symbol: str
    clock: str
    scale: int
    grid: np.ndarray
    values: np.ndarray
    n_obs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.n_obs = np.asarray(self.n_obs, dtype=np.int64)
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise ValueError("curve grid must be strictly increasing")
        if not (self.grid.size == self.values.size == self.n_obs.size):
            raise ValueError("grid, values and n_obs differ in length")

    def at(self, x) -> float:
        i = np.flatnonzero(self.grid == x)
        return float(self.values[i[0]]) if i.size else float("nan")


@dataclass(frozen=True)
class PowerLawFit:
    beta: float
    intercept: float
    fit_range: tuple[float, float]
    r_squared: float
    n_points: int


def loglog_slope(curve, fit_range) -> PowerLawFit:
    """Least-squares line through (ln lag, ln value); beta is minus the slope.

    A non-positive value inside the range cuts the fit back to the positive
    prefix, and the returned ``fit_range`` says so.
    """
    grid = np.asarray(curve.grid, dtype=np.float64)
    vals = np.asarray(curve.values, dtype=np.float64)
    lo, hi = fit_range
    sel = (grid >= lo) & (grid <= hi)
    g, v = grid[sel], vals[sel]
    bad = np.flatnonzero(~(v > 0))
    if bad.size:
        g, v = g[:bad[0]], v[:bad[0]]
    if g.size < 2:
        raise UndefinedStatistic("fewer than two positive points in fit range")
    lx, ly = np.log(g), np.log(v)
    dx = lx - mean(lx)
    dy = ly - mean(ly)
    sxx = csum(dx * dx)
    slope = csum(dx * dy) / sxx
    intercept = mean(ly) - slope * mean(lx)
    ss_res = csum((dy - slope * dx) ** 2)
    ss_tot = csum(dy * dy)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(-slope) + 0.0, float(intercept), (float(g[0]), float(g[-1])), float(r2), int(g.size))
