"""Periodic autoregressive monthly inflow models with strictly positive
scenario simulation and rolling-origin forecast bias monitoring."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateMonthError,
    InsufficientDataError,
    ParpaError,
    PositivityViolationError,
    SingularSystemError,
)
from .series import (
    AnnualStats,
    MonthlySeries,
    PeriodicStats,
    annual_stats,
    denormalize,
    normalize,
    periodic_stats,
)
from .models import (
    FitMethod,
    ModelKind,
    PeriodicModel,
    fit_parp,
    fit_parpa,
    point_forecast,
    residuals,
    select_orders,
)
from .scenarios import (
    CorrelationSet,
    ScenarioPanel,
    ShiftedLogNormalParams,
    build_correlation,
    identity_correlation,
    lambda_bound,
    shifted_lognormal_params,
    simulate,
)
from .benchmarks import (
    EstimationSettings,
    ForecastFunctional,
    ForecasterKind,
    ForecasterSpec,
    altm_fit,
    altm_transform,
    make_forecaster,
    seasonal_naive_forecast,
    weighted_fit,
    windowed_fit,
)
from .monitor import (
    BiasReport,
    ErrorPanel,
    bias,
    bias_ci,
    bias_report,
    cumulative_bias,
    pct_bias,
    rolling_backtest,
)
from .io import RunConfig, ingest_csv, read_config, run, write_series_csv

__all__ = [name for name in dir() if not name.startswith("_")]
