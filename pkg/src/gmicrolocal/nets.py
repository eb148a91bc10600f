"""Scalar nets sampled on a dyadic epsilon grid and their growth classification.

A net is a positive function of epsilon observed at eps_j = 2**-j.  Growth is
measured as the least-squares slope of log2 f against j, so eps**-N has slope
exactly N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import DEFAULT, Thresholds

# values at or below this are replaced by the sentinel and flagged
FLOOR = 2.0 ** -1022

TAGS = ("SlowScale", "Moderate", "Negligible", "Unbounded")


class NetError(Exception):
    pass


class NonFinite(NetError):
    pass


class DegenerateFit(NetError):
    pass


@dataclass(frozen=True)
class EpsilonGrid:
    j_min: int = 1
    j_max: int = 12

    def __post_init__(self):
        if self.j_min < 1:
            raise ValueError("j_min must be >= 1")
        if self.j_max - self.j_min < 5:
            raise ValueError("an epsilon grid needs at least 6 samples")

    @property
    def js(self) -> np.ndarray:
        return np.arange(self.j_min, self.j_max + 1)

    @property
    def eps(self) -> np.ndarray:
        return 2.0 ** (-self.js.astype(float))

    def __len__(self):
        return self.j_max - self.j_min + 1

    @classmethod
    def parse(cls, text: str) -> "EpsilonGrid":
        """Parse ``"1:12"`` into a grid."""
        a, b = text.split(":")
        return cls(int(a), int(b))

    def __str__(self):
        return f"{self.j_min}:{self.j_max}"


@dataclass
class NetSample:
    grid: EpsilonGrid
    values: np.ndarray
    floored: np.ndarray = None

    def __post_init__(self):
        v = np.abs(np.asarray(self.values, dtype=float))
        if v.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFinite("net values must be finite")
        low = v <= FLOOR
        v = np.where(low, FLOOR, v)
        self.values = v
        self.floored = low if self.floored is None else (np.asarray(self.floored, bool) | low)

    @property
    def log2(self) -> np.ndarray:
        return np.log2(self.values)

    def __mul__(self, other: "NetSample") -> "NetSample":
        return NetSample(self.grid, self.values * other.values, self.floored | other.floored)

    def maximum(self, other: "NetSample") -> "NetSample":
        return NetSample(self.grid, np.maximum(self.values, other.values),
                         self.floored & other.floored)

    def scaled(self, c: float) -> "NetSample":
        return NetSample(self.grid, c * self.values, self.floored.copy())


def sample_net(f: Callable[[float], float], grid: EpsilonGrid) -> NetSample:
    """Evaluate ``|f(eps_j)|`` on the grid; NaN or infinite values raise NonFinite."""
    vals = []
    for e in grid.eps:
        with np.errstate(all="ignore"):
            v = complex(f(float(e)))
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise NonFinite(f"f({e!r}) = {v}")
        vals.append(abs(v))
    return NetSample(grid, np.array(vals))


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    intercept: float
    r_squared: float
    tail_fraction: float
    n_used: int = 0
    floored: bool = False
    # slope extrapolated to j -> infinity from the local slopes in the tail
    asymptotic_slope: float = float("nan")
    accelerating: bool = False

    def as_dict(self):
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
            return x
        return {k: clean(v) for k, v in self.__dict__.items()}


def _linfit(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = ((x - xm) * (y - ym)).sum() / sxx
    icpt = ym - slope * xm
    res = y - (slope * x + icpt)
    syy = ((y - ym) ** 2).sum()
    r2 = 1.0 if syy <= 1e-24 * max(1.0, (y * y).sum()) else max(0.0, 1.0 - (res ** 2).sum() / syy)
    return float(slope), float(icpt), float(min(r2, 1.0))


def tail_count(count: int, tail_fraction: float) -> int:
    return int(math.ceil(tail_fraction * count - 1e-12))


def fit_growth_exponent(s: NetSample, tail_fraction: float = 0.5,
                        accel_ratio: float = DEFAULT.accel_ratio) -> GrowthFit:
    """Least-squares slope of log2 values against j over the tail window.

    A tail entirely at the sentinel floor gives slope -inf.  When only part of
    the tail is floored the remaining points are regressed if at least three
    are left; otherwise the slope is again -inf.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    nt = tail_count(len(s.grid), tail_fraction)
    if nt < 3:
        raise DegenerateFit(f"tail window has {nt} < 3 samples")
    js = s.grid.js[-nt:]
    y = s.log2[-nt:]
    fl = s.floored[-nt:]
    ok = ~fl
    if ok.sum() < 3:
        if fl.any():
            return GrowthFit(-math.inf, -math.inf, 1.0, tail_fraction, int(ok.sum()), True,
                             -math.inf, False)
        raise DegenerateFit("fewer than 3 usable tail points")
    slope, icpt, r2 = _linfit(js[ok], y[ok])

    # local slopes between consecutive usable points, extrapolated in 1/j
    jj, yy = js[ok], y[ok]
    loc = np.diff(yy) / np.diff(jj)
    mid = 0.5 * (jj[1:] + jj[:-1])
    if len(loc) >= 2:
        a_slope, a_icpt, _ = _linfit(1.0 / mid, loc)
        asym = a_icpt
    else:
        asym = float(loc[-1])
    accel = bool(len(loc) >= 3 and np.all(loc[1:] > 0.5) and
                 np.all(loc[1:] >= accel_ratio * np.maximum(loc[:-1], 1e-300)))
    return GrowthFit(slope, icpt, r2, tail_fraction, int(ok.sum()), bool(fl.any()),
                     float(asym), accel)


@dataclass(frozen=True)
class ScaleClass:
    tag: str
    exponent: Optional[float]
    fit: GrowthFit

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag}")

    @property
    def is_moderate(self) -> bool:
        return self.tag != "Unbounded"

    def as_dict(self):
        exp = self.exponent
        if exp is not None and not math.isfinite(exp):
            exp = None
        return {"tag": self.tag, "exponent": exp, "fit": self.fit.as_dict()}


def _decreasing_after_shift(s: NetSample, q: float, nt: int) -> bool:
    """Is log2 f + q*j strictly decreasing on the last nt samples (floor = -inf)?"""
    y = np.where(s.floored, -np.inf, s.log2)[-nt:] + q * s.grid.js[-nt:]
    for a, b in zip(y[:-1], y[1:]):
        if b == -np.inf:
            continue
        if a == -np.inf or not b < a:
            return False
    return True


def classify_scale(s: NetSample, thresholds: Thresholds = DEFAULT) -> ScaleClass:
    """Assign exactly one of SlowScale, Moderate, Negligible or Unbounded."""
    th = thresholds
    fit = fit_growth_exponent(s, th.tail_fraction, th.accel_ratio)
    nt = tail_count(len(s.grid), th.tail_fraction)
    if fit.slope == -math.inf:
        return ScaleClass("Negligible", None, fit)
    if fit.slope > th.moderate_max_slope or fit.accelerating:
        return ScaleClass("Unbounded", None, fit)
    # checking the largest q suffices: smaller q make the shifted net decrease faster
    if _decreasing_after_shift(s, th.negligible_min_slope, nt):
        return ScaleClass("Negligible", fit.slope, fit)
    if (fit.asymptotic_slope <= th.slow_slope and fit.slope >= -th.slow_slope
            and not s.floored.any() and s.values.min() > 0):
        return ScaleClass("SlowScale", fit.slope, fit)
    return ScaleClass("Moderate", fit.slope, fit)


def is_negligible_vs(s: NetSample, q_max: int = 8, tail_fraction: float = 0.5,
                     min_r2: float = DEFAULT.negligible_r2) -> bool:
    """True when the net decays at least like eps**q_max (or sits at the floor)."""
    if s.floored[-tail_count(len(s.grid), tail_fraction):].all():
        return True
    fit = fit_growth_exponent(s, tail_fraction)
    return fit.slope == -math.inf or (fit.slope <= -q_max and fit.r_squared >= min_r2)


def net_from_values(grid: EpsilonGrid, values) -> NetSample:
    return NetSample(grid, np.asarray(values, float))
