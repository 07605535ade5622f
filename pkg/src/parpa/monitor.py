"""Rolling-origin backtest harness and out-of-sample bias metrics.

Error convention: ``error = forecast - observed``, so positive numbers mean
optimistic forecasts. The k-step bias is the plain mean of the k-step error
sequence; its 95% confidence interval uses the Bartlett-weighted long-run
variance of that sequence, which tolerates the serial correlation that
overlapping multi-step forecasts necessarily create.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .benchmarks import ForecasterSpec, make_forecaster
from .errors import InsufficientDataError, ParpaError
from .series import (
    MonthlySeries,
    format_month,
    month_ordinal,
    ordinal_month,
    parse_month,
)

Z_95 = 1.96  # two-sided 95% normal quantile used by the interval


@dataclass(frozen=True)
class ErrorPanel:
    """Out-of-sample k-step errors collected over a span of forecast origins.

    ``errors[i, k-1]`` is the k-step error of the i-th origin, NaN when the
    target month was never observed. Origins are ascending, so the realized
    entries of every column form a prefix.
    """

    origin_ordinals: np.ndarray
    errors: np.ndarray
    forecaster_id: str
    subsystem: str
    skipped: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        origins = np.asarray(self.origin_ordinals, dtype=np.int64)
        errors = np.asarray(self.errors, dtype=np.float64)
        if errors.ndim != 2 or errors.shape[0] != origins.size:
            raise ValueError("errors must be (n_origins, K)")
        origins.setflags(write=False)
        errors.setflags(write=False)
        object.__setattr__(self, "origin_ordinals", origins)
        object.__setattr__(self, "errors", errors)

    @property
    def horizon(self) -> int:
        return self.errors.shape[1]

    @property
    def n_origins(self) -> int:
        return self.errors.shape[0]

    def counts(self) -> np.ndarray:
        """Realized error count per horizon step."""
        return np.sum(~np.isnan(self.errors), axis=0).astype(np.int64)

    def step_errors(self, k: int) -> np.ndarray:
        """Time-ordered realized k-step errors."""
        if not 1 <= k <= self.horizon:
            raise ValueError(f"k must be in 1..{self.horizon}, got {k}")
        col = self.errors[:, k - 1]
        return col[~np.isnan(col)]

    def origin_stamp(self, i: int) -> str:
        return format_month(*ordinal_month(int(self.origin_ordinals[i])))


@dataclass(frozen=True)
class BiasReport:
    """Per-step bias, confidence bounds, percentage bias, and cumulative bias."""

    bias: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    pct_bias: np.ndarray
    n: np.ndarray
    cumulative: float
    forecaster_id: str = ""
    subsystem: str = ""


def bias(panel: ErrorPanel, k: int) -> float:
    """Mean k-step error (average MW); positive means optimistic."""
    e = panel.step_errors(k)
    if e.size < 1:
        raise InsufficientDataError(f"no realized {k}-step errors")
    return float(np.mean(e))


def _bartlett_variance(e: np.ndarray) -> tuple[float, bool]:
    """Bartlett-weighted long-run variance of an error sequence.

    Lags run to ``floor(sqrt(n))`` with weights ``1 - |h| / sqrt(n)`` and the
    biased (1/n) autocovariance estimator. Returns ``(variance, fell_back)``;
    a negative sum falls back to the lag-0 autocovariance.
    """
    n = e.size
    root = float(np.sqrt(n))
    centered = e - np.mean(e)
    gamma0 = float(np.dot(centered, centered)) / n
    v = gamma0
    for h in range(1, int(np.floor(root)) + 1):
        gamma_h = float(np.dot(centered[h:], centered[:-h])) / n
        v += 2.0 * (1.0 - h / root) * gamma_h
    if v < 0.0:
        return gamma0, True
    return v, False


def bias_ci(panel: ErrorPanel, k: int, level: float = 0.95) -> tuple[float, float]:
    """Confidence interval for the k-step bias (default 95%).

    Uses the Bartlett-weighted variance of the time-ordered k-step error
    sequence; a negative weighted sum (possible on short samples) falls back
    to the lag-0 autocovariance with a warning.
    """
    if level != 0.95:
        raise ValueError("only the 95% level is supported")
    e = panel.step_errors(k)
    if e.size < 4:
        raise InsufficientDataError(
            f"{e.size} realized {k}-step errors; need at least 4 for an interval"
        )
    v, fell_back = _bartlett_variance(e)
    if fell_back:
        warnings.warn(
            f"negative Bartlett-weighted variance at k={k}; using the lag-0 "
            "autocovariance instead",
            RuntimeWarning,
            stacklevel=2,
        )
    delta = float(np.mean(e))
    half = Z_95 * float(np.sqrt(v / e.size))
    return delta - half, delta + half


def cumulative_bias(panel: ErrorPanel, horizon: int | None = None) -> float:
    """Mean over qualifying origins of the summed 1..K step errors.

    Only origins whose full K-step future was observed qualify; per-origin
    sums run in fixed k = 1..K order so the consistency identity with the
    per-step errors is exact in floating point.
    """
    k_max = panel.horizon if horizon is None else horizon
    if not 1 <= k_max <= panel.horizon:
        raise ValueError(f"horizon must be in 1..{panel.horizon}, got {k_max}")
    block = panel.errors[:, :k_max]
    full = ~np.isnan(block).any(axis=1)
    if not full.any():
        raise InsufficientDataError(
            f"no origin has all {k_max} horizons realized"
        )
    sums = []
    for row in block[full]:
        acc = 0.0
        for value in row:
            acc += value
        sums.append(acc)
    return float(np.mean(sums))


def pct_bias(panel: ErrorPanel, observed: MonthlySeries, k: int,
             method: str = "ratio_of_means") -> float:
    """Bias as a fraction of the observed values at the same targets.

    ``ratio_of_means`` (default) divides the k-step bias by the mean observed
    value over the realized targets; ``mean_of_ratios`` averages per-origin
    ``error / observed`` instead.
    """
    if method not in ("ratio_of_means", "mean_of_ratios"):
        raise ValueError(f"unknown method {method!r}")
    col = panel.errors[:, k - 1] if 1 <= k <= panel.horizon else None
    if col is None:
        raise ValueError(f"k must be in 1..{panel.horizon}, got {k}")
    realized = ~np.isnan(col)
    if not realized.any():
        raise InsufficientDataError(f"no realized {k}-step errors")
    targets = panel.origin_ordinals[realized] + k
    obs = np.array([observed.values[o - observed.start_ordinal] for o in targets])
    if method == "ratio_of_means":
        return float(np.mean(col[realized]) / np.mean(obs))
    return float(np.mean(col[realized] / obs))


def bias_report(panel: ErrorPanel, observed: MonthlySeries,
                cumulative_horizon: int | None = None,
                pct_method: str = "ratio_of_means") -> BiasReport:
    """Assemble the per-step metrics and cumulative bias into one report."""
    k_all = range(1, panel.horizon + 1)
    b = np.array([bias(panel, k) for k in k_all])
    ci = np.array([bias_ci(panel, k) for k in k_all])
    pct = np.array([pct_bias(panel, observed, k, pct_method) for k in k_all])
    return BiasReport(
        bias=b,
        ci_low=ci[:, 0],
        ci_high=ci[:, 1],
        pct_bias=pct,
        n=panel.counts(),
        cumulative=cumulative_bias(panel, cumulative_horizon),
        forecaster_id=panel.forecaster_id,
        subsystem=panel.subsystem,
    )


def _span_ordinals(span, series: MonthlySeries) -> np.ndarray:
    start, end = span
    if isinstance(start, str):
        start = parse_month(start)
    if isinstance(end, str):
        end = parse_month(end)
    o_start = month_ordinal(*start)
    o_end = month_ordinal(*end)
    if o_start > o_end:
        raise ValueError(
            f"empty span: {format_month(*start)} after {format_month(*end)}"
        )
    if o_start < series.start_ordinal:
        raise ValueError(
            f"span starts {format_month(*start)}, before the first observation "
            f"{series.stamp(0)}"
        )
    if o_end > series.end_ordinal - 1:
        raise ValueError(
            f"span ends {format_month(*end)}, but the last origin with any "
            f"observable target is {format_month(*ordinal_month(series.end_ordinal - 1))}"
        )
    return np.arange(o_start, o_end + 1)


def rolling_backtest(series: MonthlySeries, forecaster, span, horizon: int,
                     estimation_lag: int = 0, seed: int = 0) -> ErrorPanel:
    """Fit-then-forecast at every origin in ``span``; collect k-step errors.

    Parameters
    ----------
    series : MonthlySeries
        The full observed record for one subsystem.
    forecaster : ForecasterSpec or forecaster object
        Anything exposing ``forecast(history, horizon, seed, estimation_lag)``.
    span : pair of "YYYY-MM" or (year, month)
        First and last forecast origin, inclusive. An origin's estimation
        data is everything up to and including that month; its targets are
        the following ``horizon`` months, evaluated where observed.
    estimation_lag : int
        Months of recent data withheld from estimation (the forecast state
        still conditions on the full history up to the origin).
    seed : int
        Master seed; per-origin seeds are derived so the panel is
        reproducible and origin order is irrelevant.

    Origins where the forecaster fails to fit are skipped and recorded on
    the returned panel rather than aborting the run.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if estimation_lag < 0:
        raise ValueError("estimation_lag must be >= 0")
    if isinstance(forecaster, ForecasterSpec):
        forecaster_obj = make_forecaster(forecaster, truth=series)
        forecaster_id = forecaster.name
    else:
        forecaster_obj = forecaster
        forecaster_id = getattr(forecaster, "name", type(forecaster).__name__)
    origins = _span_ordinals(span, series)

    kept: list[int] = []
    rows: list[np.ndarray] = []
    skipped: list[tuple[str, str]] = []
    for ordinal in origins:
        idx = int(ordinal - series.start_ordinal)
        history = series.slice(0, idx + 1)
        k_avail = min(horizon, len(series) - (idx + 1))
        child_seed = int(
            np.random.SeedSequence([int(seed), int(ordinal)]).generate_state(1)[0]
        )
        try:
            forecast = np.asarray(
                forecaster_obj.forecast(history, k_avail, seed=child_seed,
                                        estimation_lag=estimation_lag),
                dtype=np.float64,
            )
        except ParpaError as exc:
            skipped.append((format_month(*ordinal_month(int(ordinal))), str(exc)))
            continue
        if forecast.shape != (k_avail,):
            raise ValueError(
                f"forecaster returned shape {forecast.shape}, expected ({k_avail},)"
            )
        row = np.full(horizon, np.nan)
        row[:k_avail] = forecast - series.values[idx + 1: idx + 1 + k_avail]
        kept.append(int(ordinal))
        rows.append(row)
    return ErrorPanel(
        origin_ordinals=np.asarray(kept, dtype=np.int64),
        errors=np.vstack(rows) if rows else np.empty((0, horizon)),
        forecaster_id=forecaster_id,
        subsystem=series.label,
        skipped=tuple(skipped),
    )


# Published k-step and cumulative bias (average GW) reported for externally
# implemented reference models on the same Southeast/Northeast assessment.
# These are display-only comparison constants; none of these model stacks is
# implemented here.
PUBLISHED_REFERENCE_BIAS_GW = {
    "SE": {
        "sarima": {1: 1.64, 6: 3.22, 12: 3.21, 24: 3.63, "cumulative": 71.04},
        "xgboost": {1: 0.80, 6: 2.11, 12: 3.28, 24: 1.87, "cumulative": 51.83},
        "prophet": {1: 2.31, 6: 3.02, 12: 3.43, 24: 4.21, "cumulative": 75.85},
        "chronos": {1: 1.04, 6: 4.13, 12: 4.25, 24: 3.85, "cumulative": 89.50},
    },
    "NE": {
        "sarima": {1: 0.37, 6: 0.60, 12: 0.67, 24: 0.72, "cumulative": 14.55},
        "xgboost": {1: -0.09, 6: 0.20, 12: 0.16, 24: 0.30, "cumulative": 3.83},
        "prophet": {1: -0.20, 6: -0.11, 12: -0.07, 24: 0.08, "cumulative": -0.98},
        "chronos": {1: -0.15, 6: -0.05, 12: -0.06, 24: 0.01, "cumulative": -1.99},
    },
}
