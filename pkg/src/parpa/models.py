"""Estimation of periodic autoregressive models.

Two fitting routes are provided and kept deliberately distinct:

* ``YULE_WALKER`` builds each month's normal equations from periodic
  autocorrelations, each moment estimated on the largest sample of pairs
  available for that (month, lag) combination.
* ``LEAST_SQUARES`` regresses the normalized target on its normalized lags
  (plus the normalized trailing-annual term for the annual variant) over
  complete rows only.

They differ in finite samples and must converge on long ones; tests assert
that agreement rather than assuming it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMonthError, InsufficientDataError, SingularSystemError
from .series import (
    AnnualStats,
    MonthlySeries,
    PeriodicStats,
    annual_stats,
    month_name,
    normalize,
    periodic_stats,
)

DEFAULT_P_MAX = 6
ANNUAL_WINDOW = 12

# Condition-number ceiling beyond which a moment/design matrix is treated
# as singular rather than silently solved.
_COND_LIMIT = 1e12


class FitMethod(str, enum.Enum):
    YULE_WALKER = "yule_walker"
    LEAST_SQUARES = "least_squares"


class ModelKind(str, enum.Enum):
    PARP = "parp"
    PARPA = "parpa"


@dataclass(frozen=True)
class PeriodicModel:
    """Fitted per-month autoregression.

    ``phi[m]`` holds the lag coefficients for calendar month ``m + 1``, zero
    padded beyond ``orders[m]``. ``psi`` and ``annual`` are present exactly
    when ``kind`` is the annual variant.
    """

    orders: np.ndarray
    phi: np.ndarray
    psi: np.ndarray | None
    resid_std: np.ndarray
    stats: PeriodicStats
    annual: AnnualStats | None
    kind: ModelKind
    method: FitMethod = FitMethod.YULE_WALKER

    def __post_init__(self):
        orders = np.asarray(self.orders, dtype=np.int64)
        if orders.shape != (12,) or np.any(orders < 1):
            raise ValueError("orders must be 12 integers, all >= 1")
        phi = np.asarray(self.phi, dtype=np.float64)
        if phi.ndim != 2 or phi.shape[0] != 12 or phi.shape[1] < orders.max():
            raise ValueError("phi must be (12, >=max order)")
        resid = np.asarray(self.resid_std, dtype=np.float64)
        if resid.shape != (12,) or not np.all(np.isfinite(resid)) or np.any(resid < 0):
            raise ValueError("resid_std must be 12 finite values >= 0")
        is_annual = self.kind == ModelKind.PARPA
        if is_annual != (self.psi is not None) or is_annual != (self.annual is not None):
            raise ValueError("psi and annual stats must be present exactly for the annual kind")
        psi = None
        if self.psi is not None:
            psi = np.asarray(self.psi, dtype=np.float64)
            if psi.shape != (12,):
                raise ValueError("psi must have shape (12,)")
            psi.setflags(write=False)
        for arr in (orders, phi, resid):
            arr.setflags(write=False)
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "resid_std", resid)

    @property
    def max_order(self) -> int:
        return int(self.orders.max())


def _periodic_autocorr(x: np.ndarray, months: np.ndarray, max_lag: int) -> np.ndarray:
    """Plug-in periodic autocorrelations of a normalized series.

    ``rho[m, l]`` is the mean of ``x_t * x_{t-l}`` over all t of calendar
    month ``m + 1`` with the lag available; ``rho[m, 0] == 1``. NaN marks
    (month, lag) pairs with no data.
    """
    rho = np.full((12, max_lag + 1), np.nan)
    rho[:, 0] = 1.0
    for lag in range(1, max_lag + 1):
        prod = x[lag:] * x[:-lag]
        mm = months[lag:]
        cnt = np.bincount(mm, minlength=12)
        tot = np.bincount(mm, weights=prod, minlength=12)
        has = cnt > 0
        rho[has, lag] = tot[has] / cnt[has]
    return rho


def _yw_matrix(rho: np.ndarray, m: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Month-m Yule-Walker system of order p from the periodic autocorrelations."""
    a = np.empty((p, p))
    for j in range(1, p + 1):
        for i in range(1, p + 1):
            if i == j:
                a[j - 1, i - 1] = 1.0
            else:
                lo, hi = min(i, j), max(i, j)
                a[j - 1, i - 1] = rho[(m - lo) % 12, hi - lo]
    b = rho[m, 1: p + 1]
    return a, b


def _solve_checked(a: np.ndarray, b: np.ndarray, month: int) -> np.ndarray:
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise InsufficientDataError(
            f"month {month + 1} ({month_name(month + 1)}): some moments have no data"
        )
    if np.linalg.cond(a) > _COND_LIMIT:
        raise SingularSystemError(
            f"month {month + 1} ({month_name(month + 1)}): singular moment system"
        )
    return np.linalg.solve(a, b)


def select_orders(series: MonthlySeries, p_max: int = DEFAULT_P_MAX) -> np.ndarray:
    """Choose each month's autoregressive order by periodic PACF thresholding.

    For month m, the order is the largest lag ``l <= p_max`` whose partial
    autocorrelation exceeds ``1.96 / sqrt(N_m)`` in absolute value, with a
    fallback of 1 when none does.
    """
    if p_max < 1:
        raise ValueError(f"p_max must be >= 1, got {p_max}")
    stats = periodic_stats(series)
    x = normalize(series, stats)
    months = series.month_index()
    rho = _periodic_autocorr(x, months, p_max)
    if np.any(np.isnan(rho[:, 1:])):
        raise InsufficientDataError(
            f"series too short for partial autocorrelations up to lag {p_max} in every month"
        )
    orders = np.ones(12, dtype=np.int64)
    for m in range(12):
        threshold = 1.96 / np.sqrt(stats.count[m])
        for p in range(1, p_max + 1):
            a, b = _yw_matrix(rho, m, p)
            pacf = _solve_checked(a, b, m)[-1]
            if abs(pacf) > threshold:
                orders[m] = p
    return orders


def _norm_annual(series: MonthlySeries, ann: AnnualStats) -> np.ndarray:
    """Normalized trailing-annual regressor aligned with series positions (NaN before it exists)."""
    months = series.month_index()
    if np.any(ann.a_std[np.unique(months[ann.first_index:])] <= 0.0):
        raise DegenerateMonthError("zero dispersion in the trailing-annual averages")
    out = np.full(len(series), np.nan)
    idx = np.arange(ann.first_index, len(series))
    out[idx] = (ann.a_series - ann.a_mean[months[idx]]) / ann.a_std[months[idx]]
    return out


def _month_rows(months: np.ndarray, m: int, p: int, t_min: int) -> np.ndarray:
    t = np.flatnonzero(months == m)
    return t[t >= max(p, t_min)]


def _fit_ls(x, months, orders, alpha=None, t_min=0, weights=None, psi_zero=False):
    """Per-month least squares. Returns (phi, psi_or_None, residual arrays)."""
    p_width = int(orders.max())
    phi = np.zeros((12, p_width))
    with_annual = alpha is not None and not psi_zero
    psi = np.zeros(12) if alpha is not None else None
    resid_t: list[np.ndarray] = []
    resid_v: list[np.ndarray] = []
    for m in range(12):
        p = int(orders[m])
        rows = _month_rows(months, m, p, t_min)
        ncol = p + (1 if with_annual else 0)
        if rows.size < p + 2:
            raise InsufficientDataError(
                f"month {m + 1} ({month_name(m + 1)}): {rows.size} regression rows, "
                f"need at least {p + 2}"
            )
        design = np.empty((rows.size, ncol))
        for i in range(p):
            design[:, i] = x[rows - (i + 1)]
        if with_annual:
            design[:, p] = alpha[rows]
        target = x[rows]
        if weights is not None:
            sw = np.sqrt(weights[rows])
            coef, _, rank, _ = np.linalg.lstsq(design * sw[:, None], target * sw, rcond=None)
        else:
            coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
        if rank < ncol:
            raise SingularSystemError(
                f"month {m + 1} ({month_name(m + 1)}): rank-deficient design "
                "(collinear regressors)"
            )
        phi[m, :p] = coef[:p]
        if with_annual:
            psi[m] = coef[p]
        resid_t.append(rows)
        resid_v.append(target - design @ coef)
    return phi, psi, resid_t, resid_v


def _fit_yw(x, months, orders, alpha=None, t_min=0, psi_zero=False):
    """Per-month moment fit; the annual variant extends the system with the
    sample covariances of the annual regressor."""
    max_p = int(orders.max())
    rho = _periodic_autocorr(x, months, max_p)
    with_annual = alpha is not None and not psi_zero
    phi = np.zeros((12, max_p))
    psi = np.zeros(12) if alpha is not None else None
    resid_t: list[np.ndarray] = []
    resid_v: list[np.ndarray] = []
    for m in range(12):
        p = int(orders[m])
        a, b = _yw_matrix(rho, m, p)
        if with_annual:
            valid = np.flatnonzero((months == m) & ~np.isnan(alpha))
            if valid.size < 2:
                raise InsufficientDataError(
                    f"month {m + 1} ({month_name(m + 1)}): no annual-term sample"
                )
            c = np.empty(p + 1)
            for j in range(1, p + 1):
                tt = valid[valid >= j]
                c[j] = np.mean(x[tt - j] * alpha[tt]) if tt.size else np.nan
            c[0] = np.mean(x[valid] * alpha[valid])
            d = np.mean(alpha[valid] ** 2)
            a_ext = np.empty((p + 1, p + 1))
            a_ext[:p, :p] = a
            a_ext[:p, p] = c[1:]
            a_ext[p, :p] = c[1:]
            a_ext[p, p] = d
            coef = _solve_checked(a_ext, np.concatenate([b, c[:1]]), m)
            phi[m, :p] = coef[:p]
            psi[m] = coef[p]
        else:
            phi[m, :p] = _solve_checked(a, b, m)

        rows = _month_rows(months, m, p, t_min)
        if rows.size < p + 2:
            raise InsufficientDataError(
                f"month {m + 1} ({month_name(m + 1)}): {rows.size} usable rows, "
                f"need at least {p + 2}"
            )
        pred = np.zeros(rows.size)
        for i in range(p):
            pred += phi[m, i] * x[rows - (i + 1)]
        if alpha is not None:
            pred += psi[m] * alpha[rows]
        resid_t.append(rows)
        resid_v.append(x[rows] - pred)
    return phi, psi, resid_t, resid_v


def _resid_std(resid_t, resid_v, months):
    out = np.zeros(12)
    for m in range(12):
        vals = resid_v[m]
        out[m] = float(np.std(vals, ddof=1))
    return out


def _finish(series, orders, phi, psi, resid_t, resid_v, stats, ann, kind, method):
    resid_std = _resid_std(resid_t, resid_v, series.month_index())
    return PeriodicModel(
        orders=orders,
        phi=phi,
        psi=psi,
        resid_std=resid_std,
        stats=stats,
        annual=ann,
        kind=kind,
        method=method,
    )


def _check_orders(orders) -> np.ndarray:
    orders = np.asarray(orders, dtype=np.int64)
    if orders.shape != (12,):
        raise ValueError("orders must be a 12-vector")
    if np.any(orders < 1):
        raise ValueError("every order must be >= 1")
    return orders


def fit_parp(series: MonthlySeries, orders, method: FitMethod = FitMethod.YULE_WALKER,
             _t_min: int = 0) -> PeriodicModel:
    """Fit the plain periodic autoregression.

    ``orders`` is a 12-vector of per-month lags. ``_t_min`` restricts usable
    rows to positions ``>= _t_min`` (diagnostic use only; keeps row sets
    comparable with the annual variant).
    """
    orders = _check_orders(orders)
    method = FitMethod(method)
    stats = periodic_stats(series)
    x = normalize(series, stats)
    months = series.month_index()
    if method == FitMethod.LEAST_SQUARES:
        phi, _, rt, rv = _fit_ls(x, months, orders, t_min=_t_min)
    else:
        phi, _, rt, rv = _fit_yw(x, months, orders, t_min=_t_min)
    return _finish(series, orders, phi, None, rt, rv, stats, None, ModelKind.PARP, method)


def fit_parpa(series: MonthlySeries, orders, method: FitMethod = FitMethod.YULE_WALKER,
              weights: np.ndarray | None = None, psi_zero: bool = False) -> PeriodicModel:
    """Fit the annual variant: lags plus the normalized trailing-annual term.

    ``weights`` (least-squares only) multiplies each row's squared error.
    ``psi_zero`` keeps the annual variant's regression rows but drops the
    annual regressor, forcing its coefficient to zero (diagnostic use).
    """
    orders = _check_orders(orders)
    method = FitMethod(method)
    if len(series) < ANNUAL_WINDOW + 1:
        raise InsufficientDataError(
            f"series has {len(series)} observations; the annual variant needs more than "
            f"{ANNUAL_WINDOW}"
        )
    stats = periodic_stats(series)
    x = normalize(series, stats)
    months = series.month_index()
    ann = annual_stats(series, ANNUAL_WINDOW)
    alpha = _norm_annual(series, ann)
    if method == FitMethod.LEAST_SQUARES:
        phi, psi, rt, rv = _fit_ls(x, months, orders, alpha=alpha, t_min=ANNUAL_WINDOW,
                                   weights=weights, psi_zero=psi_zero)
    else:
        if weights is not None:
            raise ValueError("row weights require the least-squares method")
        phi, psi, rt, rv = _fit_yw(x, months, orders, alpha=alpha, t_min=ANNUAL_WINDOW,
                                   psi_zero=psi_zero)
    if psi_zero:
        psi = np.zeros(12)
    return _finish(series, orders, phi, psi, rt, rv, stats, ann, ModelKind.PARPA, method)


def residuals(model: PeriodicModel, series: MonthlySeries) -> tuple[np.ndarray, np.ndarray]:
    """Time-ordered in-sample normalized residuals.

    Returns ``(positions, values)`` where ``positions`` are indices into the
    series, suitable for aligning residuals across subsystems.
    """
    x = normalize(series, model.stats)
    months = series.month_index()
    t_min = ANNUAL_WINDOW if model.kind == ModelKind.PARPA else 0
    alpha = None
    if model.kind == ModelKind.PARPA:
        alpha = _norm_annual(series, annual_stats(series, ANNUAL_WINDOW))
    pos: list[int] = []
    vals: list[float] = []
    for m in range(12):
        p = int(model.orders[m])
        rows = _month_rows(months, m, p, t_min)
        pred = np.zeros(rows.size)
        for i in range(p):
            pred += model.phi[m, i] * x[rows - (i + 1)]
        if alpha is not None:
            pred += model.psi[m] * alpha[rows]
        pos.extend(rows.tolist())
        vals.extend((x[rows] - pred).tolist())
    order = np.argsort(pos)
    return np.asarray(pos, dtype=np.int64)[order], np.asarray(vals)[order]


def point_forecast(model: PeriodicModel, history: MonthlySeries, horizon: int) -> np.ndarray:
    """Zero-noise recursion of the fitted model, ``horizon`` steps past the history end.

    This is the cheap deterministic forecast; scenario-mean forecasts come
    from the scenario engine. The trailing-annual term rolls forward over a
    mix of observed and already-forecast values.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    is_annual = model.kind == ModelKind.PARPA
    need = max(model.max_order, ANNUAL_WINDOW if is_annual else 0)
    if len(history) < need:
        raise InsufficientDataError(
            f"history has {len(history)} observations, need at least {need} "
            "to seed the recursion"
        )
    tail = history.tail(need)
    x_tail = normalize(tail, model.stats)
    lagbuf = list(x_tail[::-1][: model.max_order])  # most recent first
    annbuf = list(history.values[-ANNUAL_WINDOW:]) if is_annual else []

    out = np.empty(horizon)
    month0 = (history.month_of(len(history) - 1) - 1 + 1) % 12  # month of first step
    for k in range(horizon):
        m = (month0 + k) % 12
        sigma = model.stats.std[m]
        if not np.isfinite(sigma) or sigma <= 0:
            raise DegenerateMonthError(f"month {m + 1} has unusable std at forecast time")
        c = 0.0
        for i in range(int(model.orders[m])):
            c += model.phi[m, i] * lagbuf[i]
        if is_annual:
            a_bar = sum(annbuf) / ANNUAL_WINDOW
            c += model.psi[m] * (a_bar - model.annual.a_mean[m]) / model.annual.a_std[m]
        y = model.stats.mean[m] + sigma * c
        out[k] = y
        lagbuf.insert(0, c)
        lagbuf.pop()
        if is_annual:
            annbuf.pop(0)
            annbuf.append(y)
    return out
