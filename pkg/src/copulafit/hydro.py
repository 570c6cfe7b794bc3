"""Standardized Precipitation Index and drought event extraction.

Monthly precipitation is fitted per calendar month by a gamma distribution
mixed with a point mass at zero; SPI is the standard normal quantile of the
resulting cumulative probability.  A drought is a maximal run of months with
SPI below zero.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .copulas import norm_ppf
from .errors import DegenerateDataError, DomainError, InsufficientDataError

__all__ = [
    "PrecipSeries",
    "GammaFit",
    "SpiSeries",
    "DroughtEvent",
    "DroughtRecord",
    "fit_gamma_mle",
    "fit_gamma_monthly",
    "spi",
    "extract_droughts",
    "drought_pairs",
    "read_precip_csv",
    "write_spi_csv",
    "read_spi_csv",
    "write_droughts_csv",
    "MIN_NONZERO_PER_MONTH",
]

MIN_NONZERO_PER_MONTH = 10
P_CLAMP = 1e-6


@dataclass(frozen=True)
class PrecipSeries:
    year: np.ndarray
    month: np.ndarray
    amount: np.ndarray

    def __post_init__(self):
        year = np.asarray(self.year, dtype=int)
        month = np.asarray(self.month, dtype=int)
        amount = np.asarray(self.amount, dtype=float)
        if not (year.shape == month.shape == amount.shape) or year.ndim != 1:
            raise DomainError("year, month and amount must be 1-d arrays of equal length")
        if year.size == 0:
            raise InsufficientDataError("empty precipitation series")
        if np.any((month < 1) | (month > 12)):
            raise DomainError("months must be in 1..12")
        if not np.all(np.isfinite(amount)) or np.any(amount < 0):
            raise DomainError("precipitation amounts must be finite and nonnegative")
        index = year * 12 + (month - 1)
        steps = np.diff(index)
        if np.any(steps == 0):
            k = int(np.flatnonzero(steps == 0)[0]) + 1
            raise DomainError(f"duplicate month {year[k]}-{month[k]:02d}")
        if np.any(steps != 1):
            k = int(np.flatnonzero(steps != 1)[0])
            nxt = index[k] + 1
            raise DomainError(
                f"missing month after {year[k]}-{month[k]:02d} (expected {nxt // 12}-{nxt % 12 + 1:02d})"
            )
        object.__setattr__(self, "year", year)
        object.__setattr__(self, "month", month)
        object.__setattr__(self, "amount", amount)

    def __len__(self) -> int:
        return self.amount.size

    @classmethod
    def from_monthly(cls, amounts, start_year: int = 1985, start_month: int = 1) -> "PrecipSeries":
        amounts = np.asarray(amounts, dtype=float)
        idx = start_year * 12 + (start_month - 1) + np.arange(amounts.size)
        return cls(idx // 12, idx % 12 + 1, amounts)


@dataclass(frozen=True)
class GammaFit:
    """Zero-inflated gamma fit for one calendar month."""

    month: int
    shape: float
    scale: float
    q_zero: float

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        g = special.gammainc(self.shape, np.maximum(x, 0.0) / self.scale)
        return np.where(x > 0, self.q_zero + (1.0 - self.q_zero) * g, self.q_zero)


@dataclass(frozen=True)
class SpiSeries:
    year: np.ndarray
    month: np.ndarray
    spi: np.ndarray
    timescale: int = 1

    def __len__(self) -> int:
        return self.spi.size


@dataclass(frozen=True)
class DroughtEvent:
    """One drought; ``start`` is the 1-based position in the SPI series."""

    start: int
    duration: int
    severity: float
    interval: Optional[int]
    start_year: Optional[int] = None
    start_month: Optional[int] = None


@dataclass(frozen=True)
class DroughtRecord:
    events: tuple

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def durations(self) -> np.ndarray:
        return np.array([e.duration for e in self.events], dtype=int)

    @property
    def severities(self) -> np.ndarray:
        return np.array([e.severity for e in self.events], dtype=float)


# ---------------------------------------------------------------------------
# Gamma fitting
# ---------------------------------------------------------------------------

def fit_gamma_mle(x, *, tol: float = 1e-12, max_iter: int = 100) -> tuple[float, float]:
    """Gamma (shape, scale) maximum likelihood estimate for positive data.

    Solves ``log k - digamma(k) = log(mean) - mean(log x)`` by Newton's
    method from the method-of-moments starting value.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2 or np.any(x <= 0):
        raise DomainError("gamma MLE needs at least two positive observations")
    mean = float(np.mean(x))
    s = math.log(mean) - float(np.mean(np.log(x)))
    if not s > 1e-12:
        raise DegenerateDataError("gamma MLE is undefined for constant data")
    var = float(np.var(x))
    k = mean * mean / var if var > 0 else (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(max_iter):
        f = math.log(k) - special.digamma(k) - s
        fp = 1.0 / k - special.polygamma(1, k)
        step = f / fp
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) <= tol * k:
            k = k_new
            break
        k = k_new
    else:
        raise DegenerateDataError("gamma MLE Newton iteration did not converge")
    return k, mean / k


def fit_gamma_monthly(ps: PrecipSeries, timescale: int = 1) -> dict[int, GammaFit]:
    """Per-calendar-month zero-inflated gamma fits (of ``timescale``-month sums)."""
    totals, months = _rolling(ps, timescale)
    fits = {}
    for m in range(1, 13):
        sel = totals[months == m]
        positive = sel[sel > 0]
        if positive.size < MIN_NONZERO_PER_MONTH:
            raise InsufficientDataError(
                f"calendar month {m}: {positive.size} nonzero observations (need {MIN_NONZERO_PER_MONTH})"
            )
        try:
            shape, scale = fit_gamma_mle(positive)
        except DegenerateDataError as exc:
            raise DegenerateDataError(f"calendar month {m}: {exc}") from None
        fits[m] = GammaFit(m, shape, scale, float(np.mean(sel == 0)))
    return fits


def _rolling(ps: PrecipSeries, timescale: int):
    if timescale < 1 or int(timescale) != timescale:
        raise DomainError(f"timescale must be a positive integer, got {timescale}")
    if len(ps) < timescale:
        raise InsufficientDataError("series shorter than the SPI timescale")
    csum = np.concatenate([[0.0], np.cumsum(ps.amount)])
    totals = csum[timescale:] - csum[:-timescale]
    return totals, ps.month[timescale - 1:]


def spi(ps: PrecipSeries, timescale: int = 1, fits: Optional[dict] = None) -> SpiSeries:
    """Standardized Precipitation Index; the first ``timescale - 1`` months are dropped."""
    if fits is None:
        fits = fit_gamma_monthly(ps, timescale)
    totals, months = _rolling(ps, timescale)
    p = np.empty_like(totals)
    for m, fit in fits.items():
        sel = months == m
        p[sel] = fit.cdf(totals[sel])
    p = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    return SpiSeries(ps.year[timescale - 1:].copy(), months.copy(), norm_ppf(p), int(timescale))


# ---------------------------------------------------------------------------
# Droughts
# ---------------------------------------------------------------------------

def extract_droughts(s: "SpiSeries | Sequence[float]") -> DroughtRecord:
    """Maximal runs of SPI < 0 with duration, severity (sum of SPI) and start-to-start interval."""
    if isinstance(s, SpiSeries):
        values, years, months = s.spi, s.year, s.month
    else:
        values, years, months = np.asarray(s, dtype=float), None, None
    if values.size == 0:
        raise InsufficientDataError("empty SPI series")
    below = values < 0
    padded = np.concatenate([[False], below, [False]])
    edges = np.diff(padded.astype(int))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    events = []
    for i, (a, b) in enumerate(zip(starts, ends)):
        interval = int(starts[i + 1] - a) if i + 1 < len(starts) else None
        events.append(
            DroughtEvent(
                start=int(a) + 1,
                duration=int(b - a),
                severity=float(np.sum(values[a:b])),
                interval=interval,
                start_year=None if years is None else int(years[a]),
                start_month=None if months is None else int(months[a]),
            )
        )
    return DroughtRecord(tuple(events))


def drought_pairs(r: DroughtRecord, *, abs_severity: bool = False):
    """``(S_d, I_d)`` and ``(D_d, I_d)`` pairs over events that have a successor.

    Returns two ``(m, 2)`` arrays.
    """
    usable = [e for e in r.events if e.interval is not None]
    if len(usable) < 2:
        raise InsufficientDataError(f"need at least 2 drought events with a successor, got {len(usable)}")
    sev = np.array([abs(e.severity) if abs_severity else e.severity for e in usable])
    dur = np.array([e.duration for e in usable], dtype=float)
    inter = np.array([e.interval for e in usable], dtype=float)
    return np.column_stack([sev, inter]), np.column_stack([dur, inter])


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def read_precip_csv(path_or_text) -> PrecipSeries:
    """Read ``year,month,precip_mm`` CSV (path, or file-like object)."""
    fh = open(path_or_text, newline="") if isinstance(path_or_text, (str, bytes)) or hasattr(path_or_text, "__fspath__") else path_or_text
    try:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader, [])]
        if header != ["year", "month", "precip_mm"]:
            raise DomainError(f"expected header year,month,precip_mm; got {','.join(header)}")
        years, months, amounts = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != 3:
                    raise ValueError("wrong number of fields")
                years.append(int(row[0]))
                months.append(int(row[1]))
                amounts.append(float(row[2]))
            except ValueError as exc:
                raise DomainError(f"line {lineno}: malformed precipitation row {row!r} ({exc})") from None
    finally:
        if fh is not path_or_text:
            fh.close()
    return PrecipSeries(np.array(years), np.array(months), np.array(amounts))


def write_spi_csv(s: SpiSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["year", "month", "spi"])
    for y, m, v in zip(s.year, s.month, s.spi):
        w.writerow([int(y), int(m), repr(float(v))])
    return buf.getvalue()


def read_spi_csv(fh) -> SpiSeries:
    reader = csv.reader(fh)
    header = [h.strip().lower() for h in next(reader, [])]
    if header != ["year", "month", "spi"]:
        raise DomainError(f"expected header year,month,spi; got {','.join(header)}")
    years, months, values = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            years.append(int(row[0]))
            months.append(int(row[1]))
            values.append(float(row[2]))
        except (ValueError, IndexError):
            raise DomainError(f"line {lineno}: malformed SPI row {row!r}") from None
    return SpiSeries(np.array(years, dtype=int), np.array(months, dtype=int), np.array(values))


def write_droughts_csv(r: DroughtRecord, *, abs_severity: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["event", "start_year", "start_month", "duration", "severity", "interval"])
    for i, e in enumerate(r.events, start=1):
        sev = abs(e.severity) if abs_severity else e.severity
        w.writerow([
            i,
            "" if e.start_year is None else e.start_year,
            "" if e.start_month is None else e.start_month,
            e.duration,
            repr(float(sev)),
            "" if e.interval is None else e.interval,
        ])
    return buf.getvalue()
