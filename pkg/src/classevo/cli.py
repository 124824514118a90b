"""``classevo`` command line: simulate, fit, analyze, montecarlo, reproduce.

Data goes to CSV files; each command prints one JSON summary line on
standard output.  Exit status is 0 on success, 1 on a runtime error and 2 on
a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import montecarlo, reproduce
from .dataio import SchemaError, export_simulation, read_dataset, write_dataset
from .estimators import (
    age_size_regression,
    fit_exponential_mle,
    fit_heaps,
    fit_negbin_shape,
    fit_ols,
)
from .sim import DEFAULT_B, DEFAULT_C0, Constant, HeapsSchedule, Model, SimParams, run

logger = logging.getLogger("classevo")

FULL_HORIZON = 9_847_315
REDUCED_HORIZON = 1_000_000
INSET_COLUMNS = ("heaps_b", "negbin_r", "age_established_coef", "age_first_coef")

# generic CSV columns per estimator when fitting a single file
FILE_COLUMNS = {
    "heaps": ("patents", "categories"),
    "exponential": (None, "size"),
    "negbin": (None, "size"),
    "age_size": ("year", "size"),
    "ols": ("x", "y"),
}


class UsageError(Exception):
    pass


def _emit(summary: dict):
    print(json.dumps(summary, sort_keys=True, default=_json_value))


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return None if math.isnan(v) else float(v)
    return str(v)


def _finite(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


# --- shared options ---------------------------------------------------------

def _add_model_flags(p, horizon_default=REDUCED_HORIZON):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=[m.value for m in Model], default="split")
    g.add_argument("--alpha", type=float, default=None,
                   help="constant innovation probability (default: Heaps schedule)")
    g.add_argument("--c0", type=float, default=DEFAULT_C0, help="schedule prefactor")
    g.add_argument("--b", type=float, default=DEFAULT_B, help="schedule exponent")
    g.add_argument("--no-first-step-one", action="store_true",
                   help="use the schedule value at t=1 instead of 1")
    h = g.add_mutually_exclusive_group()
    h.add_argument("--horizon", type=int, default=None,
                   help=f"number of patents (default {horizon_default})")
    h.add_argument("--full-horizon", action="store_true",
                   help=f"use the full horizon of {FULL_HORIZON} patents")
    g.add_argument("--calendar", type=Path, default=None,
                   help="patents_per_year.csv mapping arrivals to years")


def _add_data_flags(p, required=True):
    p.add_argument("--data", type=Path, required=required, help="dataset directory")
    p.add_argument("--strictness", choices=["strict", "lenient"], default="strict")
    p.add_argument("--exclude-classes", default="",
                   help="comma-separated class codes left out of size statistics")


def _sim_params(args, seed, horizon_default=REDUCED_HORIZON) -> SimParams:
    if args.alpha is not None:
        alpha = Constant(args.alpha)
    else:
        alpha = HeapsSchedule(args.c0, args.b, first_step_one=not args.no_first_step_one)
    horizon = FULL_HORIZON if args.full_horizon else (args.horizon or horizon_default)
    calendar = None
    if args.calendar is not None:
        table = pd.read_csv(args.calendar)
        missing = [c for c in ("year", "count") if c not in table.columns]
        if missing:
            raise SchemaError(f"{args.calendar}: missing required column(s) {', '.join(missing)}")
        calendar = tuple(zip(table["year"].astype(int), table["count"].astype(int)))
    return SimParams(model=args.model, alpha=alpha, horizon=horizon, seed=seed, calendar=calendar)


def _exclusions(args):
    return tuple(c.strip() for c in args.exclude_classes.split(",") if c.strip())


def _check_input(path: Path, kind="path"):
    if not path.exists():
        raise UsageError(f"{kind} {path} does not exist")


def _prepare_out(path: Path):
    if path.exists() and not path.is_dir():
        raise UsageError(f"output {path} exists and is not a directory")
    path.mkdir(parents=True, exist_ok=True)


# --- commands ---------------------------------------------------------------

def cmd_simulate(args):
    if args.calendar is not None:
        _check_input(args.calendar, "calendar")
    _prepare_out(args.out)
    params = _sim_params(args, args.seed)
    result = run(params)
    files = write_dataset(export_simulation(result), args.out)
    series = pd.DataFrame({"patents": result.grid, "historical": result.historical,
                           "reconstructed": result.reconstructed,
                           "established": result.established})
    sizes = pd.DataFrame({"category": result.category_ids, "size": result.sizes,
                          "established_step": result.established_step,
                          "first_patent_step": result.first_patent_step})
    cohort, share, n = result.cohort_shares(
        edges=None if params.calendar is not None else result.grid)
    cohorts = pd.DataFrame({"cohort": cohort, "share": share, "n": n})
    extra = {"series.csv": series, "final_sizes.csv": sizes, "cohorts.csv": cohorts}
    for name, frame in extra.items():
        frame.to_csv(args.out / name, index=False, lineterminator="\n")
    _emit({"command": "simulate", "final_count": result.n_categories,
           "reclassified_share": result.reclassified_share, "n_splits": result.n_splits,
           "horizon": params.horizon, "seed": params.seed,
           "files": sorted([p.name for p in files] + list(extra))})
    return 0


def _fit_from_file(args):
    table = pd.read_csv(args.input)
    x_default, y_default = FILE_COLUMNS[args.estimator]
    x_col, y_col = args.x or x_default, args.y or y_default
    for col in (x_col, y_col):
        if col is not None and col not in table.columns:
            raise SchemaError(f"{args.input}: missing required column {col!r}")
    y = table[y_col].to_numpy(dtype=float)
    x = table[x_col].to_numpy(dtype=float) if x_col else None
    if args.estimator == "heaps":
        return fit_heaps(x, y)
    if args.estimator == "exponential":
        return fit_exponential_mle(y)
    if args.estimator == "negbin":
        return fit_negbin_shape(y)
    if args.estimator == "age_size":
        return age_size_regression(y, x, log_size=args.log_size)
    return fit_ols(x, y)


def _fit_from_dataset(args):
    dataset, _ = read_dataset(args.input, args.strictness)
    if args.estimator == "heaps":
        points = reproduce.heaps_points(dataset)
        return fit_heaps(points["patents"], points["classes"])
    sizes = reproduce.class_sizes(dataset, _exclusions(args))
    if args.estimator == "exponential":
        return fit_exponential_mle(sizes.to_numpy())
    if args.estimator == "negbin":
        return fit_negbin_shape(sizes.to_numpy())
    if args.estimator == "age_size":
        if dataset.classes is None:
            raise reproduce.MissingInput("classes.csv not supplied")
        col = "date_established" if args.age_by == "established" else "first_patent_year"
        table = dataset.classes.merge(sizes.rename("size"), left_on="class_code",
                                      right_index=True).dropna(subset=[col])
        return age_size_regression(table["size"], table[col].astype(float), log_size=args.log_size)
    raise UsageError("ols needs a CSV file input, not a dataset directory")


def cmd_fit(args):
    _check_input(args.input, "input")
    fit = _fit_from_dataset(args) if args.input.is_dir() else _fit_from_file(args)
    row = fit.to_row()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([row]).to_csv(args.out, index=False, lineterminator="\n")
    _emit({"command": "fit", **{k: _finite(v) for k, v in row.items()}})
    return 0


def cmd_analyze(args):
    _check_input(args.data, "data directory")
    _prepare_out(args.out)
    dataset, report = read_dataset(args.data, args.strictness)
    arts = reproduce.dataset_artifacts(dataset, _exclusions(args), analytics_only=True)
    manifest = reproduce.write_artifacts(arts, args.out, {"validation": report.summary()})
    _emit({"command": "analyze", "produced": [p["name"] for p in manifest["produced"]],
           "skipped": [s["name"] for s in manifest["skipped"]],
           "errors": [e["name"] for e in manifest["errors"]], "dropped_rows": report.dropped})
    return 1 if arts.errors else 0


def cmd_montecarlo(args):
    if args.runs < 2:
        raise UsageError("--runs must be at least 2")
    if args.calendar is not None:
        _check_input(args.calendar, "calendar")
    _prepare_out(args.out)
    params = _sim_params(args, 0)
    stats = tuple(args.statistic) if args.statistic else tuple(montecarlo.STATISTICS)
    table = montecarlo.run_experiment(params, args.runs, args.master_seed, stats, args.workers)
    montecarlo.with_summary(table).to_csv(args.out / "runs.csv", index=False, lineterminator="\n")
    written = ["runs.csv"]
    for col in INSET_COLUMNS:
        if col in table.columns:
            name = f"histogram_{col}.csv"
            montecarlo.histogram(table[col], args.bins).to_csv(
                args.out / name, index=False, lineterminator="\n")
            written.append(name)
    summary = montecarlo.summarize(table).set_index("stat")
    _emit({"command": "montecarlo", "runs": args.runs, "horizon": params.horizon,
           "failed_runs": int((table["status"] != "ok").sum()), "files": written,
           "median": {c: _finite(float(summary.loc["q50", c])) for c in summary.columns}})
    return 0


def cmd_reproduce(args):
    if args.data is not None:
        _check_input(args.data, "data directory")
    if args.calendar is not None:
        _check_input(args.calendar, "calendar")
    _prepare_out(args.out)
    parts, extra = [], {"mode": "simulation" if args.data is None else "full"}
    if args.data is not None:
        dataset, report = read_dataset(args.data, args.strictness)
        parts.append(reproduce.dataset_artifacts(dataset, _exclusions(args)))
        extra["validation"] = report.summary()
    if args.data is None or not args.no_simulation:
        params = _sim_params(args, args.seed)
        parts.append(reproduce.simulation_panels(run(params)))
        extra["simulation_params"] = {"model": params.model.value, "horizon": params.horizon,
                                      "seed": params.seed, "alpha": repr(params.alpha)}
    arts = reproduce.merge(*parts)
    manifest = reproduce.write_artifacts(arts, args.out, extra)
    _emit({"command": "reproduce", "mode": extra["mode"],
           "produced": [p["name"] for p in manifest["produced"]],
           "skipped": [s["name"] for s in manifest["skipped"]],
           "errors": [e["name"] for e in manifest["errors"]]})
    return 1 if arts.errors else 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="classevo", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation and export it as a dataset")
    _add_model_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one estimator to a dataset directory or a CSV file")
    p.add_argument("--estimator", choices=sorted(FILE_COLUMNS), required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output CSV file")
    p.add_argument("--x", default=None, help="regressor column for file input")
    p.add_argument("--y", default=None, help="response or size column for file input")
    p.add_argument("--log-size", action="store_true", help="age_size: regress log size")
    p.add_argument("--age-by", choices=["established", "first"], default="established")
    p.add_argument("--strictness", choices=["strict", "lenient"], default="strict")
    p.add_argument("--exclude-classes", default="")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("analyze", help="reclassification and citation analytics")
    _add_data_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("montecarlo", help="repeat simulations and tabulate statistics")
    _add_model_flags(p)
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--statistic", action="append", choices=sorted(montecarlo.STATISTICS),
                   help="statistic to compute (repeatable; default all)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("reproduce", help="write figure and table CSVs with a manifest")
    _add_model_flags(p)
    _add_data_flags(p, required=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-simulation", action="store_true",
                   help="with --data, skip the simulated panels")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (ValueError, KeyError, OSError, reproduce.MissingInput, RuntimeError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
