"""Calendar-anchored monthly series and the periodic/annual statistics built on them.

A monthly value sits at an absolute month ordinal ``year * 12 + (month - 1)``
so calendar arithmetic is plain integer arithmetic throughout the package.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DegenerateMonthError, InsufficientDataError

MONTHS_PER_YEAR = 12

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def month_ordinal(year: int, month: int) -> int:
    """Absolute month index; January 2000 -> 24000."""
    if not 1 <= month <= 12:
        raise ValueError(f"month must be in 1..12, got {month}")
    return year * 12 + (month - 1)


def ordinal_month(ordinal: int) -> tuple[int, int]:
    """Inverse of :func:`month_ordinal`."""
    year, m0 = divmod(ordinal, 12)
    return year, m0 + 1


def parse_month(text: str) -> tuple[int, int]:
    """Parse a ``YYYY-MM`` calendar stamp into ``(year, month)``."""
    match = _MONTH_RE.match(text.strip())
    if match is None:
        raise DataFormatError(f"malformed month {text!r}, expected YYYY-MM")
    year, month = int(match.group(1)), int(match.group(2))
    if not 1 <= month <= 12:
        raise DataFormatError(f"malformed month {text!r}: month out of 1..12")
    return year, month


def format_month(year: int, month: int) -> str:
    return f"{year:04d}-{month:02d}"


@dataclass(frozen=True)
class MonthlySeries:
    """A contiguous, strictly positive monthly series anchored to a calendar.

    Parameters
    ----------
    start_year, start_month : int
        Calendar position of ``values[0]``; ``start_month`` in 1..12.
    values : array_like
        Finite, strictly positive monthly values (average MW).
    label : str
        Subsystem identifier, e.g. ``"SE"``.
    """

    start_year: int
    start_month: int
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 1:
            raise DataFormatError("values must be a nonempty 1-d sequence")
        if not 1 <= self.start_month <= 12:
            raise DataFormatError(f"start_month must be in 1..12, got {self.start_month}")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise DataFormatError(f"non-finite value at position {bad}")
        if not np.all(vals > 0.0):
            bad = int(np.flatnonzero(vals <= 0.0)[0])
            raise DataFormatError(
                f"nonpositive value {vals[bad]!r} at position {bad} ({self.stamp(bad)})"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    @property
    def start_ordinal(self) -> int:
        return month_ordinal(self.start_year, self.start_month)

    @property
    def end_ordinal(self) -> int:
        """Ordinal of the last observation."""
        return self.start_ordinal + len(self) - 1

    def month_of(self, i: int) -> int:
        """Calendar month (1..12) of element ``i``."""
        return (self.start_month - 1 + i) % 12 + 1

    def month_index(self) -> np.ndarray:
        """0-based calendar month (0..11) for every element."""
        return (self.start_month - 1 + np.arange(len(self))) % 12

    def stamp(self, i: int) -> str:
        """``YYYY-MM`` stamp of element ``i``."""
        return format_month(*ordinal_month(self.start_ordinal + i))

    def index_of(self, year: int, month: int) -> int:
        """Position of the observation at (year, month)."""
        i = month_ordinal(year, month) - self.start_ordinal
        if not 0 <= i < len(self):
            raise IndexError(
                f"{format_month(year, month)} outside series range "
                f"{self.stamp(0)}..{self.stamp(len(self) - 1)}"
            )
        return i

    def slice(self, start: int, stop: int) -> "MonthlySeries":
        """Sub-series ``values[start:stop]`` with the calendar anchor adjusted."""
        if not 0 <= start < stop <= len(self):
            raise ValueError(f"invalid slice [{start}:{stop}] of length-{len(self)} series")
        year, month = ordinal_month(self.start_ordinal + start)
        return MonthlySeries(year, month, self.values[start:stop], label=self.label)

    def tail(self, n: int) -> "MonthlySeries":
        if n < 1:
            raise ValueError("tail length must be >= 1")
        return self.slice(max(0, len(self) - n), len(self))


@dataclass(frozen=True)
class PeriodicStats:
    """Per-calendar-month mean, sample standard deviation, and observation count.

    ``mean[m]``/``std[m]`` refer to calendar month ``m + 1``. Months absent
    from the source series carry ``count == 0`` and NaN statistics.
    """

    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        for name in ("mean", "std", "count"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (12,):
                raise ValueError(f"{name} must have shape (12,)")
            arr = arr.astype(np.int64 if name == "count" else np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class AnnualStats:
    """Trailing-window annual averages and their per-month statistics.

    ``a_series[j]`` is the mean of the ``window`` values preceding series
    position ``first_index + j`` (so it is aligned with the observation at
    that position, not included in its own window). ``a_mean``/``a_std`` are
    the per-calendar-month mean and population standard deviation (divisor
    ``N``) of those averages.
    """

    a_series: np.ndarray
    a_mean: np.ndarray
    a_std: np.ndarray
    window: int = 12
    first_index: int = field(default=12)

    def __post_init__(self):
        for name in ("a_series", "a_mean", "a_std"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


_MONTH_NAMES = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
                "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


def month_name(month: int) -> str:
    return _MONTH_NAMES[month - 1]


def periodic_stats(series: MonthlySeries, require_std: bool = True) -> PeriodicStats:
    """Per-calendar-month mean and sample standard deviation (divisor N - 1).

    Parameters
    ----------
    series : MonthlySeries
    require_std : bool
        When True (default), every month present in the series must have at
        least two observations; otherwise the month's std is unusable and an
        :class:`InsufficientDataError` naming the month is raised.
    """
    months = series.month_index()
    count = np.bincount(months, minlength=12).astype(np.int64)
    total = np.bincount(months, weights=series.values, minlength=12)
    mean = np.full(12, np.nan)
    present = count > 0
    mean[present] = total[present] / count[present]

    sq = np.bincount(months, weights=(series.values - mean[months]) ** 2, minlength=12)
    std = np.full(12, np.nan)
    multi = count > 1
    std[multi] = np.sqrt(sq[multi] / (count[multi] - 1))

    if require_std:
        thin = np.flatnonzero(present & ~multi)
        if thin.size:
            m = int(thin[0]) + 1
            raise InsufficientDataError(
                f"month {m} ({month_name(m)}) has a single observation; "
                "at least 2 are required for a standard deviation"
            )
    return PeriodicStats(mean=mean, std=std, count=count)


def annual_stats(series: MonthlySeries, window: int = 12) -> AnnualStats:
    """Trailing annual averages and their per-month mean/std.

    The average aligned with position ``t`` covers the ``window`` values
    strictly before ``t``. The per-month std uses the population divisor
    ``N`` (not ``N - 1``).
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    n = len(series)
    if n <= window:
        raise InsufficientDataError(
            f"series has {n} observations; need more than window={window} "
            "to form any trailing annual average"
        )
    csum = np.concatenate(([0.0], np.cumsum(series.values)))
    a = (csum[window:n] - csum[: n - window]) / window  # aligned with t = window..n-1
    months = series.month_index()[window:]

    count = np.bincount(months, minlength=12)
    total = np.bincount(months, weights=a, minlength=12)
    a_mean = np.full(12, np.nan)
    present = count > 0
    a_mean[present] = total[present] / count[present]
    sq = np.bincount(months, weights=(a - a_mean[months]) ** 2, minlength=12)
    a_std = np.full(12, np.nan)
    a_std[present] = np.sqrt(sq[present] / count[present])

    return AnnualStats(a_series=a, a_mean=a_mean, a_std=a_std,
                       window=window, first_index=window)


def normalize(series: MonthlySeries, stats: PeriodicStats) -> np.ndarray:
    """Map each value to ``(y - mean[month]) / std[month]``.

    Raises :class:`DegenerateMonthError` if any month used has zero (or
    non-finite) standard deviation.
    """
    months = series.month_index()
    used = np.unique(months)
    bad = [int(m) + 1 for m in used
           if not np.isfinite(stats.std[m]) or stats.std[m] <= 0.0]
    if bad:
        names = ", ".join(f"{m} ({month_name(m)})" for m in bad)
        raise DegenerateMonthError(f"zero or undefined std for month(s) {names}")
    return (series.values - stats.mean[months]) / stats.std[months]


def denormalize(normed: np.ndarray, start_year: int, start_month: int,
                stats: PeriodicStats) -> np.ndarray:
    """Inverse of :func:`normalize` for a sequence anchored at (start_year, start_month)."""
    normed = np.asarray(normed, dtype=np.float64)
    months = (start_month - 1 + np.arange(normed.size)) % 12
    return stats.mean[months] + stats.std[months] * normed
