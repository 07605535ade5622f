"""Command-line surface: fit, simulate, backtest, and report."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ._kernels import active_backend
from .benchmarks import EstimationSettings
from .errors import ConfigError, DataFormatError, ParpaError
from .io import (
    ingest_csv,
    read_config,
    read_errors_csv,
    run,
    write_metrics_csv,
    write_summary_csv,
)
from .models import FitMethod, ModelKind, fit_parp, fit_parpa, residuals, select_orders
from .monitor import bias_report
from .scenarios import build_correlation, simulate
from .series import parse_month

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _parse_orders(text):
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 12
    if len(parts) != 12:
        raise argparse.ArgumentTypeError("orders must be one integer or 12 comma-separated")
    return tuple(parts)


def _add_data_arg(parser, multiple=False):
    help_txt = "CSV path, or LABEL=path to name the subsystem"
    if multiple:
        parser.add_argument("--data", action="append", required=True,
                            metavar="LABEL=PATH", help=help_txt + " (repeatable)")
    else:
        parser.add_argument("--data", required=True, metavar="PATH", help=help_txt)


def _load_one(token):
    label, sep, path = token.partition("=")
    if sep:
        return ingest_csv(path, label=label)
    return ingest_csv(token)


def _fit_model(series, kind, method, p_max, orders):
    orders = np.asarray(orders if orders else select_orders(series, p_max))
    if kind == "parp":
        return fit_parp(series, orders, method)
    return fit_parpa(series, orders, method)


def cmd_fit(args) -> int:
    series = _load_one(args.data)
    model = _fit_model(series, args.kind, FitMethod(args.method), args.p_max, args.orders)
    payload = {
        "subsystem": series.label,
        "kind": model.kind.value,
        "method": model.method.value,
        "orders": model.orders.tolist(),
        "phi": [model.phi[m, : model.orders[m]].tolist() for m in range(12)],
        "psi": model.psi.tolist() if model.psi is not None else None,
        "resid_std": model.resid_std.tolist(),
        "month_mean": model.stats.mean.tolist(),
        "month_std": model.stats.std.tolist(),
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"subsystem {series.label}: {model.kind.value} via {model.method.value}")
        for m in range(12):
            phi_txt = ", ".join(f"{v:+.4f}" for v in model.phi[m, : model.orders[m]])
            psi_txt = f"  psi={model.psi[m]:+.4f}" if model.psi is not None else ""
            print(f"  month {m + 1:2d}: p={model.orders[m]}  phi=[{phi_txt}]{psi_txt}"
                  f"  resid_std={model.resid_std[m]:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    series_list = [_load_one(tok) for tok in args.data]
    method = FitMethod(args.method)
    models = [_fit_model(s, args.kind, method, args.p_max, args.orders)
              for s in series_list]
    corr = None
    if len(series_list) > 1:
        starts = {s.start_ordinal for s in series_list}
        lengths = {len(s) for s in series_list}
        if len(starts) > 1 or len(lengths) > 1:
            raise DataFormatError("subsystem series must share the same calendar range")
        pos_sets = [residuals(m, s) for m, s in zip(models, series_list)]
        common = pos_sets[0][0]
        for pos, _ in pos_sets[1:]:
            common = np.intersect1d(common, pos)
        resid = np.column_stack([
            vals[np.isin(pos, common)] for pos, vals in pos_sets
        ])
        months = series_list[0].month_index()[common]
        corr = build_correlation(months, resid,
                                 subsystems=tuple(s.label for s in series_list))
    panel = simulate(models, series_list, corr, horizon=args.horizon,
                     n_scenarios=args.scenarios, seed=args.seed)
    panel.write_csv(args.out)
    mean = panel.mean_forecast()
    print(f"wrote {args.out}: {panel.n_scenarios} scenarios x {panel.horizon} steps "
          f"x {len(panel.subsystems)} subsystems (seed {panel.seed})")
    for s, name in enumerate(panel.subsystems):
        print(f"  {name}: mean forecast k=1 {mean[0, s]:.2f}, "
              f"k={panel.horizon} {mean[-1, s]:.2f}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    overrides = {
        "seed": args.seed,
        "n_scenarios": args.scenarios,
        "k_max": args.k_max,
        "output_dir": args.output_dir,
        "span_start": parse_month(args.span_start) if args.span_start else None,
        "span_end": parse_month(args.span_end) if args.span_end else None,
    }
    config = read_config(args.config, overrides)
    manifest = run(config)
    print(f"backend {manifest['backend']}; wrote {len(manifest['outputs'])} files "
          f"to {config.output_dir}")
    for entry in manifest["panels"]:
        print(f"  {entry['forecaster']} on {entry['subsystem']}: "
              f"{entry['n_origins']} origins"
              + (f", {len(entry['skipped_origins'])} skipped"
                 if entry["skipped_origins"] else ""))
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = args.run_dir
    with open(f"{run_dir}/manifest.json") as fh:
        manifest = json.load(fh)
    config = manifest["config"]
    reports = []
    for entry in manifest["panels"]:
        panel = read_errors_csv(f"{run_dir}/{entry['errors_csv']}",
                                entry["forecaster"], entry["subsystem"])
        observed = ingest_csv(config["data"][entry["subsystem"]],
                              label=entry["subsystem"])
        report = bias_report(panel, observed, pct_method=config["pct_method"])
        write_metrics_csv(report, f"{run_dir}/{entry['metrics_csv']}")
        reports.append(report)
    write_summary_csv(reports, f"{run_dir}/summary.csv", config["k_max"])
    print(f"re-rendered {len(reports)} metric files and summary.csv in {run_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parpa",
        description="Periodic autoregressive inflow models: estimation, positive "
                    "scenario simulation, and rolling-origin bias monitoring.",
    )
    parser.add_argument("--backend", choices=["numba", "numpy"], default=None,
                        help="kernel backend override (default: PARPA_BACKEND or numba)")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a periodic model and print it")
    _add_data_arg(fit)
    fit.add_argument("--kind", choices=["parp", "parpa"], default="parpa")
    fit.add_argument("--method", choices=[m.value for m in FitMethod],
                     default=FitMethod.YULE_WALKER.value)
    fit.add_argument("--p-max", type=int, default=6)
    fit.add_argument("--orders", type=_parse_orders, default=None)
    fit.add_argument("--json", action="store_true", help="print the model as JSON")
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="emit a scenario panel CSV")
    _add_data_arg(sim, multiple=True)
    sim.add_argument("--kind", choices=["parp", "parpa"], default="parpa")
    sim.add_argument("--method", choices=[m.value for m in FitMethod],
                     default=FitMethod.YULE_WALKER.value)
    sim.add_argument("--p-max", type=int, default=6)
    sim.add_argument("--orders", type=_parse_orders, default=None)
    sim.add_argument("--horizon", type=int, default=60)
    sim.add_argument("--scenarios", type=int, default=2000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.set_defaults(func=cmd_simulate)

    back = sub.add_parser("backtest", help="rolling-origin evaluation from a config file")
    back.add_argument("--config", required=True)
    back.add_argument("--seed", type=int, default=None)
    back.add_argument("--scenarios", type=int, default=None)
    back.add_argument("--k-max", type=int, default=None)
    back.add_argument("--span-start", default=None, metavar="YYYY-MM")
    back.add_argument("--span-end", default=None, metavar="YYYY-MM")
    back.add_argument("--output-dir", default=None)
    back.set_defaults(func=cmd_backtest)

    rep = sub.add_parser("report", help="re-render metrics from a stored run")
    rep.add_argument("--run-dir", required=True)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.backend:
        import os

        os.environ["PARPA_BACKEND"] = args.backend
    try:
        active_backend()
        return args.func(args)
    except (ConfigError, DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ParpaError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
