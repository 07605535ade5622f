"""Benchmark forecasters behind one interface consumable by the backtest harness.

Variants of the annual periodic model (windowed history, recency-weighted
least squares, adjusted long-term mean) plus the seasonal naive reference
and a perfect-foresight diagnostic. Every forecaster maps
``(history, horizon)`` to a vector of positive finite values.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError
from .models import (
    DEFAULT_P_MAX,
    FitMethod,
    PeriodicModel,
    fit_parp,
    fit_parpa,
    point_forecast,
    select_orders,
)
from .scenarios import simulate
from .series import MonthlySeries


class ForecasterKind(str, enum.Enum):
    OFFICIAL_PARPA = "official_parpa"
    OFFICIAL_PARP = "official_parp"
    SEASONAL_NAIVE = "seasonal_naive"
    WINDOWED_PARPA = "windowed_parpa"
    WEIGHTED_PARPA = "weighted_parpa"
    ALTM_PARPA = "altm_parpa"
    # Diagnostic only: returns the realized future, for harness validation.
    PERFECT_FORESIGHT = "perfect_foresight"


class ForecastFunctional(str, enum.Enum):
    SCENARIO_MEAN = "scenario_mean"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class EstimationSettings:
    """Shared knobs for the model-based forecasters."""

    method: FitMethod = FitMethod.YULE_WALKER
    p_max: int = DEFAULT_P_MAX
    orders: tuple[int, ...] | None = None
    functional: ForecastFunctional = ForecastFunctional.SCENARIO_MEAN
    n_scenarios: int = 2000

    def resolve_orders(self, series: MonthlySeries) -> np.ndarray:
        if self.orders is not None:
            return np.asarray(self.orders, dtype=np.int64)
        return select_orders(series, self.p_max)


@dataclass(frozen=True)
class ForecasterSpec:
    """Identifies one benchmark forecaster and its parameters."""

    kind: ForecasterKind
    window_years: float | None = None
    recency_weight: float | None = None
    altm_window: int = 12
    settings: EstimationSettings = field(default_factory=EstimationSettings)

    def __post_init__(self):
        object.__setattr__(self, "kind", ForecasterKind(self.kind))
        windowed = self.kind == ForecasterKind.WINDOWED_PARPA
        if windowed != (self.window_years is not None):
            raise ValueError("window_years must be given exactly for the windowed kind")
        weighted = self.kind == ForecasterKind.WEIGHTED_PARPA
        if weighted != (self.recency_weight is not None):
            raise ValueError("recency_weight must be given exactly for the weighted kind")
        if weighted and not self.recency_weight > 1.0:
            raise ValueError(f"recency_weight must exceed 1, got {self.recency_weight}")
        if windowed and not self.window_years >= 1:
            raise ValueError(f"window_years must be >= 1, got {self.window_years}")
        if self.altm_window < 1:
            raise ValueError(f"altm_window must be >= 1, got {self.altm_window}")

    @property
    def name(self) -> str:
        if self.kind == ForecasterKind.WINDOWED_PARPA:
            j = self.window_years
            j_txt = "inf" if math.isinf(j) else f"{j:g}"
            return f"windowed_parpa(J={j_txt})"
        if self.kind == ForecasterKind.WEIGHTED_PARPA:
            return f"weighted_parpa(w={self.recency_weight:g})"
        if self.kind == ForecasterKind.ALTM_PARPA and self.altm_window != 12:
            return f"altm_parpa(M={self.altm_window})"
        return self.kind.value


def seasonal_naive_forecast(history: MonthlySeries, horizon: int) -> np.ndarray:
    """Forecast each step with the last observed value of its calendar month."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if len(history) < 12:
        raise InsufficientDataError(
            f"seasonal naive needs 12 observed months, got {len(history)}"
        )
    last12 = history.values[-12:]
    out = np.empty(horizon)
    for k in range(horizon):
        out[k] = last12[k % 12]
    return out


def windowed_fit(series: MonthlySeries, window_years: float, orders=None,
                 p_max: int = DEFAULT_P_MAX,
                 method: FitMethod = FitMethod.YULE_WALKER) -> PeriodicModel:
    """Annual-variant fit on only the most recent ``window_years`` of data.

    ``math.inf`` (or any window at least as long as the series) reduces to
    the fit on the full series.
    """
    if window_years < 1:
        raise ValueError(f"window_years must be >= 1, got {window_years}")
    if math.isfinite(window_years):
        keep = int(round(window_years * 12))
        if keep < len(series):
            series = series.tail(keep)
    if orders is None:
        orders = select_orders(series, p_max)
    return fit_parpa(series, orders, method)


def weighted_fit(series: MonthlySeries, recency_weight: float, orders=None,
                 p_max: int = DEFAULT_P_MAX) -> PeriodicModel:
    """Least-squares annual-variant fit where rows targeting the most recent
    12 months carry weight ``recency_weight`` on their squared error."""
    if not recency_weight > 1.0:
        raise ValueError(f"recency_weight must exceed 1, got {recency_weight}")
    if orders is None:
        orders = select_orders(series, p_max)
    weights = np.ones(len(series))
    weights[-12:] = recency_weight
    return fit_parpa(series, orders, FitMethod.LEAST_SQUARES, weights=weights)


def altm_transform(series: MonthlySeries, window: int = 12) -> MonthlySeries:
    """Re-anchor the series' local log-level to its most recent value.

    In log space, the trailing ``window``-mean (including the current value;
    shortened to the available prefix early on) is subtracted and the final
    trailing mean added back, so the whole history is expressed at the
    origin's local level. Strictly positive input yields strictly positive
    output.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if len(series) <= window:
        raise InsufficientDataError(
            f"series has {len(series)} observations, need more than window={window}"
        )
    z = np.log(series.values)
    csum = np.concatenate(([0.0], np.cumsum(z)))
    idx = np.arange(len(series))
    lo = np.maximum(0, idx - window + 1)
    local = (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)
    adjusted = z - local + local[-1]
    return MonthlySeries(series.start_year, series.start_month,
                         np.exp(adjusted), label=series.label)


def altm_fit(series: MonthlySeries, window: int = 12, orders=None,
             p_max: int = DEFAULT_P_MAX,
             method: FitMethod = FitMethod.YULE_WALKER) -> PeriodicModel:
    """Annual-variant fit on the level-adjusted series.

    Forecasts from this model are produced on the adjusted scale and
    reported directly: the adjustment already anchors the level at the
    forecast origin, so no inverse shift applies.
    """
    adjusted = altm_transform(series, window)
    if orders is None:
        orders = select_orders(adjusted, p_max)
    return fit_parpa(adjusted, orders, method)


class _ModelForecaster:
    """Fit-then-forecast wrapper for the periodic-model family."""

    def __init__(self, spec: ForecasterSpec):
        self.spec = spec

    def _fit(self, fit_series: MonthlySeries) -> PeriodicModel:
        spec, st = self.spec, self.spec.settings
        if spec.kind == ForecasterKind.OFFICIAL_PARP:
            return fit_parp(fit_series, st.resolve_orders(fit_series), st.method)
        if spec.kind == ForecasterKind.OFFICIAL_PARPA:
            return fit_parpa(fit_series, st.resolve_orders(fit_series), st.method)
        if spec.kind == ForecasterKind.WINDOWED_PARPA:
            return windowed_fit(fit_series, spec.window_years, st.orders, st.p_max, st.method)
        if spec.kind == ForecasterKind.WEIGHTED_PARPA:
            return weighted_fit(fit_series, spec.recency_weight, st.orders, st.p_max)
        if spec.kind == ForecasterKind.ALTM_PARPA:
            return altm_fit(fit_series, spec.altm_window, st.orders, st.p_max, st.method)
        raise ValueError(f"not a model-based kind: {spec.kind}")

    def forecast(self, history: MonthlySeries, horizon: int, seed: int = 0,
                 estimation_lag: int = 0) -> np.ndarray:
        spec, st = self.spec, self.spec.settings
        fit_series = history
        if estimation_lag > 0:
            if len(history) <= estimation_lag:
                raise InsufficientDataError(
                    f"estimation lag {estimation_lag} leaves no data to fit on"
                )
            fit_series = history.slice(0, len(history) - estimation_lag)
        model = self._fit(fit_series)
        state = history
        if spec.kind == ForecasterKind.ALTM_PARPA:
            state = altm_transform(history, spec.altm_window)
        if st.functional == ForecastFunctional.DETERMINISTIC:
            return point_forecast(model, state, horizon)
        panel = simulate(model, state, horizon=horizon,
                         n_scenarios=st.n_scenarios, seed=seed)
        return panel.mean_forecast()[:, 0]


class _SeasonalNaiveForecaster:
    def __init__(self, spec: ForecasterSpec):
        self.spec = spec

    def forecast(self, history, horizon, seed: int = 0, estimation_lag: int = 0):
        return seasonal_naive_forecast(history, horizon)


class _PerfectForesightForecaster:
    """Returns the realized future; only meaningful inside a backtest."""

    def __init__(self, spec: ForecasterSpec, truth: MonthlySeries):
        self.spec = spec
        self.truth = truth

    def forecast(self, history, horizon, seed: int = 0, estimation_lag: int = 0):
        start = history.end_ordinal + 1 - self.truth.start_ordinal
        if start < 0 or start + horizon > len(self.truth):
            raise InsufficientDataError(
                "perfect foresight has no truth for the requested horizon"
            )
        return self.truth.values[start: start + horizon].copy()


def make_forecaster(spec: ForecasterSpec, truth: MonthlySeries | None = None):
    """Instantiate the forecaster for a spec; ``truth`` is required only for
    the perfect-foresight diagnostic."""
    if spec.kind == ForecasterKind.SEASONAL_NAIVE:
        return _SeasonalNaiveForecaster(spec)
    if spec.kind == ForecasterKind.PERFECT_FORESIGHT:
        if truth is None:
            raise ValueError("perfect foresight needs the full truth series")
        return _PerfectForesightForecaster(spec, truth)
    return _ModelForecaster(spec)
