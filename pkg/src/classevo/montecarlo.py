"""Repeated simulation runs with per-run statistics.

Run ``i`` of an experiment with master seed ``m`` simulates with seed
``derive_seed(m, i)``: the first 64 bits of ``numpy.random.SeedSequence([m, i])``.
Seeds therefore depend only on ``(m, i)``, never on worker scheduling, and
results are merged by run index.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import pandas as pd

from .estimators import (
    age_size_regression,
    fit_exponential_mle,
    fit_heaps,
    fit_negbin_shape,
    rank_size,
)
from .sim import SimParams, SimResult, run

logger = logging.getLogger(__name__)

QUANTILES = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95)
COHORT_FRACTION = 0.01


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed for run ``index``, mixed from ``(master_seed, index)``."""
    if master_seed < 0 or index < 0:
        raise ValueError("master seed and run index must be non-negative")
    lo, hi = np.random.SeedSequence([master_seed, index]).generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


# --- per-run statistics -----------------------------------------------------
# Each takes a SimResult and returns a dict of named floats.

def _heaps(r: SimResult):
    fit = fit_heaps(r.grid, r.reconstructed)
    return {"heaps_b": fit.estimate, "heaps_c0": fit.extras["c0"], "heaps_r2": fit.r_squared}


def _heaps_historical(r: SimResult):
    fit = fit_heaps(r.grid, r.historical)
    return {"heaps_hist_b": fit.estimate, "heaps_hist_r2": fit.r_squared}


def _rank_size(r: SimResult):
    fit = rank_size(r.sizes).fit()
    return {"rank_size_slope": fit.estimate, "rank_size_r2": fit.r_squared}


def _exponential(r: SimResult):
    return {"exp_rate": fit_exponential_mle(r.sizes).estimate}


def _negbin(r: SimResult):
    return {"negbin_r": fit_negbin_shape(r.sizes).estimate}


def _age_established(r: SimResult):
    est, _ = r.category_years()
    return {"age_established_coef": age_size_regression(r.sizes, est, log_size=True).estimate}


def _age_first(r: SimResult):
    _, first = r.category_years()
    return {"age_first_coef": age_size_regression(r.sizes, first, log_size=True).estimate}


def _cohorts(r: SimResult):
    return dict(zip(("cohort_first_min", "cohort_last_max"), cohort_extremes(r)))


def _counts(r: SimResult):
    return {"final_count": float(r.n_categories), "reclassified_share": r.reclassified_share}


STATISTICS = {
    "counts": _counts,
    "heaps": _heaps,
    "heaps_historical": _heaps_historical,
    "rank_size": _rank_size,
    "exponential": _exponential,
    "negbin": _negbin,
    "age_established": _age_established,
    "age_first": _age_first,
    "cohorts": _cohorts,
}


def cohort_extremes(result: SimResult, fraction: float = COHORT_FRACTION) -> tuple[float, float]:
    """(lowest share among the earliest cohorts, highest among the latest).

    Cohorts are the bins between consecutive points of the sampling grid,
    which is log-spaced by default; ``fraction`` of them (at least one) is
    taken at each end.
    """
    _, share, _ = result.cohort_shares(edges=result.grid)
    k = max(1, int(math.floor(fraction * share.size)))
    return float(share[:k].min()), float(share[-k:].max())


def _one_run(args):
    params, index, names = args
    result = run(params)
    row = {"run": index, "seed": params.seed, "status": "ok", "error": ""}
    failed = []
    for name in names:
        try:
            row.update(STATISTICS[name](result))
        except Exception as exc:  # recorded, not raised
            failed.append(f"{name}: {type(exc).__name__}: {exc}")
    if failed:
        row["status"] = "failed"
        row["error"] = "; ".join(failed)
    return row


def run_experiment(params: SimParams, runs: int, master_seed: int = 0,
                   statistics=tuple(STATISTICS), workers: int = 1) -> pd.DataFrame:
    """Simulate ``runs`` independent replicates and tabulate per-run statistics.

    ``params.seed`` is ignored; each run gets ``derive_seed(master_seed, i)``.
    A statistic that raises leaves NaN in its columns and marks the row
    ``status == "failed"`` with the message in ``error``.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    unknown = [s for s in statistics if s not in STATISTICS]
    if unknown:
        raise ValueError(f"unknown statistic(s) {unknown}; choose from {sorted(STATISTICS)}")
    jobs = [(replace(params, seed=derive_seed(master_seed, i)), i, tuple(statistics))
            for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_one_run, jobs, chunksize=max(1, runs // (4 * workers))))
    else:
        rows = [_one_run(job) for job in jobs]
    rows.sort(key=lambda row: row["run"])
    table = pd.DataFrame(rows)
    table["run"] = table["run"].astype("Int64")
    table["seed"] = table["seed"].astype("UInt64")
    n_failed = int((table["status"] != "ok").sum())
    if n_failed:
        logger.warning("%d of %d runs had estimator failures", n_failed, runs)
    return table


def value_columns(table: pd.DataFrame) -> list[str]:
    return [c for c in table.columns if c not in ("run", "seed", "status", "error")]


def summarize(table: pd.DataFrame) -> pd.DataFrame:
    """Mean, sd (ddof=1), count and quantiles of every statistic column."""
    cols = value_columns(table)
    values = table[cols].astype(float)
    rows = {"mean": values.mean(), "sd": values.std(ddof=1), "count": values.count()}
    for q in QUANTILES:
        rows[f"q{round(q * 100):02d}"] = values.quantile(q)
    out = pd.DataFrame(rows).T
    out.index.name = "stat"
    return out.reset_index()


def with_summary(table: pd.DataFrame) -> pd.DataFrame:
    """Per-run rows followed by summary rows labelled in the ``status`` column."""
    summary = summarize(table).rename(columns={"stat": "status"})
    return pd.concat([table, summary], ignore_index=True)[list(table.columns)]


def histogram(values, bins: int = 30) -> pd.DataFrame:
    """Counts of finite ``values`` in equal-width bins."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return pd.DataFrame({"bin_low": [], "bin_high": [], "count": []})
    counts, edges = np.histogram(v, bins=bins)
    return pd.DataFrame({"bin_low": edges[:-1], "bin_high": edges[1:], "count": counts})
