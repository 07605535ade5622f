"""Scenario generation with state-dependent shifted log-normal residuals.

Each simulated step draws a residual from a three-parameter (shifted)
log-normal whose shift is the infimum of residual values keeping the next
value strictly positive. The shift therefore depends on the lagged state,
which makes the sampled residual distribution state-dependent even though
its mean (zero) and standard deviation (the month's residual std) are fixed.

Cross-subsystem dependence enters through per-month correlation matrices of
the fitted models' residuals: independent standard normals are mixed with
the Cholesky factor of the month's matrix before driving each subsystem's
marginal sampler.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import run_paths
from .errors import (
    DegenerateMonthError,
    InsufficientDataError,
    PositivityViolationError,
    SingularSystemError,
)
from .models import ANNUAL_WINDOW, ModelKind, PeriodicModel
from .series import MonthlySeries, format_month, month_name, normalize, ordinal_month

# Jitter ladder used to repair numerically semidefinite sample correlation
# matrices before Cholesky. Escalates tenfold from 1e-10 and gives up past 1e-6.
_JITTER_LADDER = tuple(10.0 ** -e for e in range(10, 5, -1))


@dataclass(frozen=True)
class ShiftedLogNormalParams:
    """Parameters of one step's residual distribution: ``eps = exp(xi) + shift``
    with ``xi ~ N(mu_xi, sigma_xi)``. Construction guarantees mean zero and the
    requested standard deviation."""

    shift: float
    theta: float
    mu_xi: float
    sigma_xi: float

    def __post_init__(self):
        if not self.shift < 0:
            raise ValueError("shift must be negative")
        if not self.theta > 1.0:
            raise ValueError("theta must exceed 1")
        # Zero-mean and variance identities are construction invariants.
        mean_gap = math.exp(self.mu_xi + 0.5 * self.sigma_xi ** 2) + self.shift
        if abs(mean_gap) > 1e-9 * max(1.0, abs(self.shift)):
            raise ValueError(f"zero-mean identity violated by {mean_gap!r}")
        if abs(self.sigma_xi ** 2 - math.log(self.theta)) > 1e-12:
            raise ValueError("variance identity violated")

    @property
    def resid_std(self) -> float:
        """Standard deviation of the sampled residual (analytic)."""
        return abs(self.shift) * math.sqrt(self.theta - 1.0)


def shifted_lognormal_params(shift: float, resid_std: float) -> ShiftedLogNormalParams:
    """Solve the two-moment conditions for the underlying normal.

    ``theta = 1 + resid_std**2 / shift**2``; ``sigma_xi**2 = ln(theta)``;
    ``mu_xi = ln(shift**2 / theta) / 2`` (an algebraically equivalent but
    cancellation-free form of ``ln(resid_std**2 / (theta**2 - theta)) / 2``).

    Raises
    ------
    PositivityViolationError
        If ``shift >= 0``: the model state admits a nonpositive conditional
        mean and no valid shifted distribution exists.
    ValueError
        If ``resid_std <= 0``.
    """
    if not np.isfinite(shift) or shift >= 0.0:
        raise PositivityViolationError(
            f"residual shift must be negative, got {shift!r}; "
            "the conditional mean of the series is not positive"
        )
    if not np.isfinite(resid_std) or resid_std <= 0.0:
        raise ValueError(f"resid_std must be positive, got {resid_std!r}")
    theta = 1.0 + (resid_std * resid_std) / (shift * shift)
    sigma_xi = math.sqrt(math.log(theta))
    mu_xi = 0.5 * math.log((shift * shift) / theta)
    return ShiftedLogNormalParams(shift=shift, theta=theta, mu_xi=mu_xi, sigma_xi=sigma_xi)


def lambda_bound(model: PeriodicModel, month: int, norm_lags,
                 norm_annual: float | None = None) -> float:
    """Infimum of admissible residual values at the given state.

    Parameters
    ----------
    model : PeriodicModel
    month : int
        Calendar month (1..12) of the step being generated.
    norm_lags : sequence of float
        Normalized lagged values, most recent first; at least the month's
        order must be supplied.
    norm_annual : float, optional
        Normalized trailing-annual term; required for annual-variant models.

    The bound equals ``-mean[m]/std[m] - (conditional mean in normalized
    units)`` and is negative exactly when the conditional mean of the raw
    series is positive.
    """
    if not 1 <= month <= 12:
        raise ValueError(f"month must be in 1..12, got {month}")
    m = month - 1
    sigma = model.stats.std[m]
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise DegenerateMonthError(f"month {month} ({month_name(month)}) has unusable std")
    p = int(model.orders[m])
    lags = np.asarray(norm_lags, dtype=np.float64)
    if lags.size < p:
        raise ValueError(f"need {p} lagged values for month {month}, got {lags.size}")
    c = 0.0
    for i in range(p):
        c += model.phi[m, i] * lags[i]
    if model.kind == ModelKind.PARPA:
        if norm_annual is None:
            raise ValueError("norm_annual is required for annual-variant models")
        c += model.psi[m] * norm_annual
    return float(-model.stats.mean[m] / sigma - c)


@dataclass(frozen=True)
class CorrelationSet:
    """Per-month cross-subsystem residual correlation matrices and their
    Cholesky factors. ``chol[m] @ chol[m].T == corr[m]`` by construction;
    ``jitter[m]`` records any diagonal repair that was applied."""

    corr: np.ndarray
    chol: np.ndarray
    jitter: np.ndarray
    subsystems: tuple[str, ...] = ()

    def __post_init__(self):
        corr = np.asarray(self.corr, dtype=np.float64)
        chol = np.asarray(self.chol, dtype=np.float64)
        if corr.ndim != 3 or corr.shape[0] != 12 or corr.shape[1] != corr.shape[2]:
            raise ValueError("corr must have shape (12, S, S)")
        if chol.shape != corr.shape:
            raise ValueError("chol must match corr's shape")
        for arr in (corr, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "jitter", np.asarray(self.jitter, dtype=np.float64))

    @property
    def n_subsystems(self) -> int:
        return self.corr.shape[1]


def identity_correlation(n_sub: int, subsystems: tuple[str, ...] = ()) -> CorrelationSet:
    eye = np.broadcast_to(np.eye(n_sub), (12, n_sub, n_sub)).copy()
    return CorrelationSet(corr=eye, chol=eye.copy(), jitter=np.zeros(12),
                          subsystems=subsystems)


def build_correlation(months: np.ndarray, resid: np.ndarray,
                      subsystems: tuple[str, ...] = ()) -> CorrelationSet:
    """Per-month sample correlation of aligned residual vectors across subsystems.

    Parameters
    ----------
    months : array of int
        0-based calendar month of each row.
    resid : array, shape (T, S)
        Residual value of each subsystem at each aligned time.

    Numerically semidefinite months are repaired by blending toward the
    identity with an escalating jitter before factorization.
    """
    resid = np.asarray(resid, dtype=np.float64)
    if resid.ndim == 1:
        resid = resid[:, None]
    months = np.asarray(months, dtype=np.int64)
    if months.shape[0] != resid.shape[0]:
        raise ValueError("months and resid must have the same length")
    n_sub = resid.shape[1]
    corr = np.empty((12, n_sub, n_sub))
    chol = np.empty((12, n_sub, n_sub))
    jitter = np.zeros(12)
    for m in range(12):
        rows = resid[months == m]
        if rows.shape[0] < 2:
            raise InsufficientDataError(
                f"month {m + 1} ({month_name(m + 1)}) has {rows.shape[0]} aligned "
                "residual observations, need at least 2"
            )
        if n_sub == 1:
            u = np.ones((1, 1))
        else:
            sd = rows.std(axis=0)
            if np.any(sd <= 0.0):
                which = int(np.flatnonzero(sd <= 0.0)[0])
                raise DegenerateMonthError(
                    f"month {m + 1} ({month_name(m + 1)}): residuals of subsystem "
                    f"{which} have zero variance"
                )
            u = np.corrcoef(rows, rowvar=False)
        u = 0.5 * (u + u.T)
        np.fill_diagonal(u, 1.0)
        for level in (0.0,) + _JITTER_LADDER:
            repaired = u if level == 0.0 else (u + level * np.eye(n_sub)) / (1.0 + level)
            try:
                b = np.linalg.cholesky(repaired)
            except np.linalg.LinAlgError:
                continue
            corr[m], chol[m], jitter[m] = repaired, b, level
            break
        else:
            raise SingularSystemError(
                f"month {m + 1} ({month_name(m + 1)}): correlation matrix not positive "
                f"definite even after jitter {_JITTER_LADDER[-1]!r}"
            )
    return CorrelationSet(corr=corr, chol=chol, jitter=jitter, subsystems=subsystems)


@dataclass(frozen=True)
class ScenarioPanel:
    """Simulated future values: ``values[w, k, s]`` is scenario ``w``'s value
    ``k + 1`` months past the origin for subsystem ``s``. Regenerating with
    the same seed, origin, and models reproduces the panel bit-exactly."""

    values: np.ndarray
    origin_year: int
    origin_month: int
    seed: int
    subsystems: tuple[str, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise ValueError("values must be (n_scenarios, horizon, n_subsystems)")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "subsystems", tuple(self.subsystems))

    @property
    def n_scenarios(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def mean_forecast(self) -> np.ndarray:
        """Scenario-mean point forecast, shape (horizon, n_subsystems)."""
        return self.values.mean(axis=0)

    def step_stamp(self, k: int) -> str:
        """Calendar stamp of step ``k`` (1-based)."""
        year, month = ordinal_month(
            self.origin_year * 12 + (self.origin_month - 1) + k
        )
        return format_month(year, month)

    def write_csv(self, path) -> None:
        """Long-format dump: one row per (scenario, step, subsystem)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["omega", "k", "subsystem", "value"])
            for w in range(self.n_scenarios):
                for k in range(self.horizon):
                    for s, name in enumerate(self.subsystems):
                        writer.writerow([w + 1, k + 1, name, repr(self.values[w, k, s])])


def _as_list(obj):
    if isinstance(obj, (list, tuple)):
        return list(obj)
    return [obj]


def _pack_models(models: list[PeriodicModel], histories: list[MonthlySeries]):
    n_sub = len(models)
    p_width = max(m.max_order for m in models)
    mu = np.empty((n_sub, 12))
    sigma = np.empty((n_sub, 12))
    sig_eps = np.empty((n_sub, 12))
    phi = np.zeros((n_sub, 12, p_width))
    orders = np.empty((n_sub, 12), dtype=np.int64)
    psi = np.zeros((n_sub, 12))
    has_annual = np.zeros(n_sub, dtype=np.uint8)
    a_mean = np.zeros((n_sub, 12))
    a_std = np.ones((n_sub, 12))
    init_lags = np.zeros((n_sub, p_width))
    init_ann = np.zeros((n_sub, 12))
    for s, (model, hist) in enumerate(zip(models, histories)):
        mu[s] = model.stats.mean
        sigma[s] = model.stats.std
        sig_eps[s] = model.resid_std
        orders[s] = model.orders
        phi[s, :, : model.phi.shape[1]] = model.phi
        annual = model.kind == ModelKind.PARPA
        need = max(model.max_order, ANNUAL_WINDOW if annual else 0)
        if len(hist) < need:
            raise InsufficientDataError(
                f"subsystem {hist.label or s}: history of {len(hist)} months cannot "
                f"seed a model needing {need}"
            )
        tail = hist.tail(need)
        x_tail = normalize(tail, model.stats)
        init_lags[s, : model.max_order] = x_tail[::-1][: model.max_order]
        if annual:
            has_annual[s] = 1
            psi[s] = model.psi
            a_mean[s] = model.annual.a_mean
            a_std[s] = model.annual.a_std
            init_ann[s] = hist.values[-ANNUAL_WINDOW:]
    return dict(mu=mu, sigma=sigma, sig_eps=sig_eps, phi=phi, orders=orders, psi=psi,
                has_annual=has_annual, a_mean=a_mean, a_std=a_std,
                init_lags=init_lags, init_ann=init_ann)


def _validate_months(models, histories, month0, horizon):
    visited = np.unique(month0[:horizon])
    for s, (model, hist) in enumerate(zip(models, histories)):
        label = hist.label or f"#{s}"
        for m in visited:
            if not np.isfinite(model.stats.std[m]) or model.stats.std[m] <= 0.0:
                raise DegenerateMonthError(
                    f"subsystem {label}: month {m + 1} has unusable std"
                )
            if model.resid_std[m] <= 0.0:
                raise ValueError(
                    f"subsystem {label}: residual std for month {m + 1} is zero; "
                    "the shifted log-normal is undefined at zero dispersion"
                )
            if model.kind == ModelKind.PARPA and (
                not np.isfinite(model.annual.a_std[m]) or model.annual.a_std[m] <= 0.0
            ):
                raise DegenerateMonthError(
                    f"subsystem {label}: annual std for month {m + 1} is unusable"
                )


def simulate(models, histories, corr: CorrelationSet | None = None, *,
             horizon: int = 60, n_scenarios: int = 2000, seed: int = 0,
             backend: str | None = None) -> ScenarioPanel:
    """Generate chronologically linked scenario paths past the histories' end.

    Parameters
    ----------
    models : PeriodicModel or sequence of PeriodicModel
        One fitted model per subsystem.
    histories : MonthlySeries or sequence of MonthlySeries
        Observed series per subsystem; all must end at the same calendar
        month (the simulation origin).
    corr : CorrelationSet, optional
        Per-month residual correlation; identity when omitted.
    horizon, n_scenarios : int
        Steps ahead and number of scenarios.
    seed : int
        Philox key for the pre-drawn standard normals; identical inputs and
        seed reproduce the panel bit-exactly regardless of thread count.
    backend : str, optional
        Kernel override ("numba" or "numpy"); defaults to the environment
        selection.

    Raises
    ------
    PositivityViolationError
        If any scenario reaches a state whose conditional mean is not
        positive (no admissible residual shift); reported with the scenario,
        step, and subsystem.
    """
    models = _as_list(models)
    histories = _as_list(histories)
    if len(models) != len(histories):
        raise ValueError("models and histories must pair up one per subsystem")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if n_scenarios < 1:
        raise ValueError(f"n_scenarios must be >= 1, got {n_scenarios}")
    end = histories[0].end_ordinal
    for hist in histories[1:]:
        if hist.end_ordinal != end:
            raise ValueError(
                f"histories end at different months: {histories[0].stamp(len(histories[0]) - 1)} "
                f"vs {hist.stamp(len(hist) - 1)}"
            )
    n_sub = len(models)
    if corr is None:
        corr = identity_correlation(n_sub, tuple(h.label for h in histories))
    if corr.n_subsystems != n_sub:
        raise ValueError(
            f"correlation set is for {corr.n_subsystems} subsystems, got {n_sub}"
        )
    month0 = (end + 1 + np.arange(horizon)) % 12
    _validate_months(models, histories, month0, horizon)
    packed = _pack_models(models, histories)

    rng = np.random.Generator(np.random.Philox(key=seed))
    normals = rng.standard_normal((n_scenarios, horizon, n_sub))
    paths, status = run_paths(normals, month0, packed["mu"], packed["sigma"],
                              packed["sig_eps"], packed["phi"], packed["orders"],
                              packed["psi"], packed["has_annual"], packed["a_mean"],
                              packed["a_std"], corr.chol, packed["init_lags"],
                              packed["init_ann"], backend=backend)
    bad = status >= 0
    if bad.any():
        earliest = int(status[bad].min())
        scenario = int(np.flatnonzero(bad & (status == earliest))[0])
        k, s = divmod(earliest, n_sub)
        label = histories[s].label or f"#{s}"
        raise PositivityViolationError(
            f"nonpositive conditional mean at scenario {scenario + 1}, step {k + 1}, "
            f"subsystem {label}; the fitted state admits no valid residual shift"
        )
    if not np.all(paths > 0.0) or not np.all(np.isfinite(paths)):
        raise PositivityViolationError("scenario panel contains nonpositive or non-finite values")
    year, month = ordinal_month(end)
    return ScenarioPanel(values=paths, origin_year=year, origin_month=month,
                         seed=int(seed), subsystems=tuple(h.label for h in histories))
