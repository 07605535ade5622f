"""CSV ingestion, run configuration, and the end-to-end run orchestration."""
from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import active_backend
from .benchmarks import (
    EstimationSettings,
    ForecastFunctional,
    ForecasterKind,
    ForecasterSpec,
)
from .errors import ConfigError, DataFormatError
from .models import FitMethod
from .monitor import BiasReport, ErrorPanel, bias_report, rolling_backtest
from .series import MonthlySeries, format_month, month_ordinal, ordinal_month, parse_month

SUMMARY_STEPS = (1, 6, 12, 24)
OUTPUT_DIR_ENV = "PARPA_OUTPUT_DIR"


def ingest_csv(path, date_col: str = "date", value_col: str = "value",
               subsystem_col: str = "subsystem", subsystem: str | None = None,
               label: str | None = None) -> MonthlySeries:
    """Read a contiguous monthly series from a CSV file.

    Expected columns: ``date`` (YYYY-MM), ``value`` (positive decimal), and
    optionally ``subsystem``. Rows must be sorted and contiguous by month;
    column names can be remapped via the ``*_col`` arguments. When a
    subsystem column is present with several distinct values, ``subsystem``
    selects which one to load.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or date_col not in reader.fieldnames:
            raise DataFormatError(f"{path}: missing {date_col!r} column")
        if value_col not in reader.fieldnames:
            raise DataFormatError(f"{path}: missing {value_col!r} column")
        has_sub = subsystem_col in (reader.fieldnames or ())
        ordinals: list[int] = []
        values: list[float] = []
        seen_subs: set[str] = set()
        for line_no, row in enumerate(reader, start=2):
            if has_sub:
                sub = (row[subsystem_col] or "").strip()
                seen_subs.add(sub)
                if subsystem is not None and sub != subsystem:
                    continue
            try:
                year, month = parse_month(row[date_col])
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{line_no}: {exc}") from None
            try:
                value = float(row[value_col])
            except (TypeError, ValueError):
                raise DataFormatError(
                    f"{path}:{line_no}: value {row[value_col]!r} is not a number"
                ) from None
            if not math.isfinite(value) or value <= 0.0:
                raise DataFormatError(
                    f"{path}:{line_no}: value {value!r} must be finite and > 0"
                )
            ordinal = month_ordinal(year, month)
            if ordinals:
                if ordinal <= ordinals[-1]:
                    raise DataFormatError(
                        f"{path}:{line_no}: dates not strictly increasing at "
                        f"{row[date_col]}"
                    )
                if ordinal != ordinals[-1] + 1:
                    missing = format_month(*ordinal_month(ordinals[-1] + 1))
                    raise DataFormatError(
                        f"{path}:{line_no}: gap in monthly dates, missing {missing}"
                    )
            ordinals.append(ordinal)
            values.append(value)
    if has_sub and subsystem is None and len(seen_subs) > 1:
        raise DataFormatError(
            f"{path}: several subsystems present ({sorted(seen_subs)}); "
            "pass subsystem=... to pick one"
        )
    if not values:
        raise DataFormatError(f"{path}: no rows" + (f" for subsystem {subsystem!r}" if subsystem else ""))
    year, month = ordinal_month(ordinals[0])
    if label is None:
        label = subsystem or (next(iter(seen_subs)) if len(seen_subs) == 1 else path.stem)
    return MonthlySeries(year, month, np.asarray(values), label=label)


def write_series_csv(series: MonthlySeries, path) -> None:
    """Write a series in the ingestible format (round-trips exactly)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "value", "subsystem"])
        for i, value in enumerate(series.values):
            writer.writerow([series.stamp(i), repr(float(value)), series.label])


_SPEC_RE = re.compile(r"^([a-z_]+)(?:\((.*)\))?$")
_SPEC_KEYS = {"J": "window_years", "w": "recency_weight", "M": "altm_window"}


def parse_forecaster(token: str, settings: EstimationSettings) -> ForecasterSpec:
    """Parse a forecaster token such as ``official_parpa`` or ``windowed_parpa(J=30)``."""
    match = _SPEC_RE.match(token.strip())
    if match is None:
        raise ConfigError(f"malformed forecaster {token!r}")
    name, args = match.group(1), match.group(2)
    try:
        kind = ForecasterKind(name)
    except ValueError:
        known = ", ".join(k.value for k in ForecasterKind)
        raise ConfigError(f"unknown forecaster {name!r}; known kinds: {known}") from None
    kwargs: dict[str, float] = {}
    if args:
        for part in args.split(","):
            key, _, raw = part.partition("=")
            key = key.strip()
            if key not in _SPEC_KEYS:
                raise ConfigError(f"unknown forecaster parameter {key!r} in {token!r}")
            try:
                value = float(raw) if raw.strip() != "inf" else math.inf
            except ValueError:
                raise ConfigError(f"bad value for {key!r} in {token!r}") from None
            kwargs[_SPEC_KEYS[key]] = int(value) if key == "M" else value
    try:
        return ForecasterSpec(kind=kind, settings=settings, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid forecaster {token!r}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    """Everything a backtest run needs; defaults follow the monitoring protocol."""

    data: dict[str, str]
    span_start: tuple[int, int] = (2012, 1)
    span_end: tuple[int, int] = (2024, 8)
    k_max: int = 24
    horizon: int = 60
    n_scenarios: int = 2000
    seed: int = 0
    estimation_lag: int = 0
    method: FitMethod = FitMethod.YULE_WALKER
    p_max: int = 6
    functional: ForecastFunctional = ForecastFunctional.SCENARIO_MEAN
    forecaster_tokens: tuple[str, ...] = ("official_parpa",)
    pct_method: str = "ratio_of_means"
    output_dir: str = "out"

    def __post_init__(self):
        if not self.data:
            raise ConfigError("no data.<SUBSYSTEM> entries configured")
        if self.k_max < 1 or self.horizon < 1:
            raise ConfigError("k_max and horizon must be >= 1")
        if self.k_max > self.horizon:
            raise ConfigError(
                f"k_max={self.k_max} exceeds the simulation horizon {self.horizon}"
            )
        if self.n_scenarios < 1:
            raise ConfigError("scenarios must be >= 1")
        if self.estimation_lag < 0:
            raise ConfigError("estimation.lag_months must be >= 0")
        if month_ordinal(*self.span_start) > month_ordinal(*self.span_end):
            raise ConfigError("span.start is after span.end")
        if self.pct_method not in ("ratio_of_means", "mean_of_ratios"):
            raise ConfigError(f"unknown pct.method {self.pct_method!r}")

    @property
    def settings(self) -> EstimationSettings:
        return EstimationSettings(method=self.method, p_max=self.p_max,
                                  functional=self.functional,
                                  n_scenarios=self.n_scenarios)

    def forecasters(self) -> tuple[ForecasterSpec, ...]:
        return tuple(parse_forecaster(t, self.settings) for t in self.forecaster_tokens)

    def to_jsonable(self) -> dict:
        d = asdict(self)
        d["span_start"] = format_month(*self.span_start)
        d["span_end"] = format_month(*self.span_end)
        d["method"] = self.method.value
        d["functional"] = self.functional.value
        d["forecaster_tokens"] = list(self.forecaster_tokens)
        return d


_CONFIG_INT = {"k_max": "k_max", "horizon": "horizon", "scenarios": "n_scenarios",
               "seed": "seed", "estimation.lag_months": "estimation_lag",
               "estimation.p_max": "p_max"}


def read_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse the flat ``key = value`` run-configuration file.

    ``overrides`` (already-typed field values, e.g. from CLI flags) win over
    file contents.
    """
    fields: dict = {"data": {}}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, value = key.strip(), value.strip()
            if key.startswith("data."):
                fields["data"][key[5:]] = value
            elif key in _CONFIG_INT:
                try:
                    fields[_CONFIG_INT[key]] = int(value)
                except ValueError:
                    raise ConfigError(f"{path}:{line_no}: {key} must be an integer") from None
            elif key == "span.start":
                fields["span_start"] = parse_month(value)
            elif key == "span.end":
                fields["span_end"] = parse_month(value)
            elif key == "estimation.method":
                try:
                    fields["method"] = FitMethod(value)
                except ValueError:
                    raise ConfigError(f"{path}:{line_no}: unknown method {value!r}") from None
            elif key == "forecast.functional":
                try:
                    fields["functional"] = ForecastFunctional(value)
                except ValueError:
                    raise ConfigError(f"{path}:{line_no}: unknown functional {value!r}") from None
            elif key == "forecasters":
                fields["forecaster_tokens"] = tuple(
                    t.strip() for t in value.split(",") if t.strip()
                )
            elif key == "pct.method":
                fields["pct_method"] = value
            elif key == "output.dir":
                fields["output_dir"] = value
            else:
                raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
    if overrides:
        fields.update({k: v for k, v in overrides.items() if v is not None})
    env_out = os.environ.get(OUTPUT_DIR_ENV)
    if env_out:
        fields["output_dir"] = env_out
    try:
        return RunConfig(**fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def slug(name: str) -> str:
    """Filesystem-safe token for a forecaster or subsystem name."""
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name.replace("=", "")).strip("_")


def write_errors_csv(panel: ErrorPanel, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin", "k", "error_avgMW"])
        for i in range(panel.n_origins):
            stamp = panel.origin_stamp(i)
            for k in range(1, panel.horizon + 1):
                value = panel.errors[i, k - 1]
                if not np.isnan(value):
                    writer.writerow([stamp, k, repr(float(value))])


def read_errors_csv(path, forecaster_id: str, subsystem: str) -> ErrorPanel:
    """Rebuild an error panel from its CSV dump."""
    rows: dict[int, dict[int, float]] = {}
    k_max = 0
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ordinal = month_ordinal(*parse_month(row["origin"]))
            k = int(row["k"])
            k_max = max(k_max, k)
            rows.setdefault(ordinal, {})[k] = float(row["error_avgMW"])
    origins = sorted(rows)
    errors = np.full((len(origins), k_max), np.nan)
    for i, ordinal in enumerate(origins):
        for k, value in rows[ordinal].items():
            errors[i, k - 1] = value
    return ErrorPanel(origin_ordinals=np.asarray(origins, dtype=np.int64),
                      errors=errors, forecaster_id=forecaster_id, subsystem=subsystem)


def write_metrics_csv(report: BiasReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "n_k", "bias_avgMW", "ci_low", "ci_high", "pct_bias"])
        for i in range(report.bias.size):
            writer.writerow([
                i + 1,
                int(report.n[i]),
                repr(float(report.bias[i])),
                repr(float(report.ci_low[i])),
                repr(float(report.ci_high[i])),
                repr(float(report.pct_bias[i])),
            ])


def write_summary_csv(reports: list[BiasReport], path, k_max: int) -> None:
    """Table-shaped summary: one row per forecaster, bias columns in avg GW."""
    steps = [k for k in SUMMARY_STEPS if k <= k_max]
    by_sub: dict[str, dict[str, BiasReport]] = {}
    for rep in reports:
        by_sub.setdefault(rep.subsystem, {})[rep.forecaster_id] = rep
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subsystem", "forecaster"]
                        + [f"bias_k{k}_avgGW" for k in steps]
                        + ["cumulative_avgGW", "pct_of_official"])
        for sub in sorted(by_sub):
            official = by_sub[sub].get("official_parpa")
            for fid in by_sub[sub]:
                rep = by_sub[sub][fid]
                row = [sub, fid]
                row += [repr(float(rep.bias[k - 1] / 1000.0)) for k in steps]
                row.append(repr(float(rep.cumulative / 1000.0)))
                if official is not None and official.cumulative != 0.0:
                    row.append(repr(float(rep.cumulative / official.cumulative)))
                else:
                    row.append("")
                writer.writerow(row)


def run(config: RunConfig) -> dict:
    """Execute the full backtest for every (forecaster, subsystem) pair.

    All artifacts are computed first and written in one pass at the end;
    files already written are removed if a later write fails. Returns the
    manifest dictionary.
    """
    series_by_sub = {lbl: ingest_csv(p, label=lbl) for lbl, p in sorted(config.data.items())}
    specs = config.forecasters()

    panels: list[ErrorPanel] = []
    reports: list[BiasReport] = []
    for f_idx, spec in enumerate(specs):
        for s_idx, (lbl, series) in enumerate(sorted(series_by_sub.items())):
            pair_seed = int(np.random.SeedSequence(
                [int(config.seed), f_idx, s_idx]
            ).generate_state(1)[0])
            panel = rolling_backtest(series, spec,
                                     (config.span_start, config.span_end),
                                     config.k_max,
                                     estimation_lag=config.estimation_lag,
                                     seed=pair_seed)
            if panel.n_origins == 0:
                raise ConfigError(
                    f"every origin failed for {spec.name} on {lbl}: "
                    + (panel.skipped[0][1] if panel.skipped else "no origins in span")
                )
            panels.append(panel)
            reports.append(bias_report(panel, series, pct_method=config.pct_method))

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    manifest = {
        "package_version": __version__,
        "backend": active_backend(),
        "config": config.to_jsonable(),
        "panels": [],
        "outputs": [],
    }
    try:
        for panel, report in zip(panels, reports):
            base = f"{slug(panel.forecaster_id)}__{slug(panel.subsystem)}"
            errors_path = out_dir / f"errors_{base}.csv"
            metrics_path = out_dir / f"metrics_{base}.csv"
            write_errors_csv(panel, errors_path)
            written.append(errors_path)
            write_metrics_csv(report, metrics_path)
            written.append(metrics_path)
            manifest["panels"].append({
                "forecaster": panel.forecaster_id,
                "subsystem": panel.subsystem,
                "errors_csv": errors_path.name,
                "metrics_csv": metrics_path.name,
                "n_origins": panel.n_origins,
                "n_k": panel.counts().tolist(),
                "skipped_origins": [list(s) for s in panel.skipped],
            })
        summary_path = out_dir / "summary.csv"
        write_summary_csv(reports, summary_path, config.k_max)
        written.append(summary_path)
        manifest["outputs"] = [p.name for p in written] + ["manifest.json"]
        manifest_path = out_dir / "manifest.json"
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(manifest_path)
    except BaseException:
        for p in written:
            try:
                p.unlink()
            except OSError:
                pass
        raise
    return manifest
