"""Plot-ready CSV artifacts from a simulation run and from a patent dataset.

Every artifact writer returns the frames to save; missing optional inputs
produce a skip entry instead.  :func:`write_artifacts` saves the frames and a
``manifest.json`` listing what was produced and what was skipped, and why.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import analytics
from .dataio import Dataset
from .estimators import (
    age_size_regression,
    fit_exponential_mle,
    fit_heaps,
    fit_negbin_shape,
    rank_size,
)
from .sim import SimResult

logger = logging.getLogger(__name__)


class MissingInput(Exception):
    """An optional table or column needed by an artifact is absent."""


@dataclass
class Artifacts:
    frames: dict[str, pd.DataFrame] = field(default_factory=dict)
    descriptions: dict[str, str] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def add(self, name, frame, description):
        self.frames[name] = frame
        self.descriptions[name] = description

    def attempt(self, name, description, build):
        """Run ``build()``; record a skip on MissingInput, an error on anything else."""
        try:
            self.add(name, build(), description)
        except MissingInput as exc:
            self.skipped[name] = str(exc)
            logger.info("skipping %s: %s", name, exc)
        except Exception as exc:
            self.errors[name] = f"{type(exc).__name__}: {exc}"
            logger.error("artifact %s failed: %s", name, exc)


def fit_frame(fits: dict) -> pd.DataFrame:
    """One row per named FitResult."""
    rows = [{"fit": name, **fit.to_row()} for name, fit in fits.items()]
    return pd.DataFrame(rows)


# --- simulation panels ------------------------------------------------------

def simulation_panels(result: SimResult) -> Artifacts:
    """The six panels comparing a simulated system with the empirical figures."""
    out = Artifacts()
    grid = result.grid
    panel_a = pd.DataFrame({"patents": grid, "historical": result.historical,
                            "reconstructed": result.reconstructed,
                            "established": result.established})
    out.add("panel_a_counts", panel_a,
            "category counts against patents so far: historical (live), reconstructed "
            "(final categories with a patent by then), established (final categories "
            "created by then)")

    def heaps():
        fits = {"historical": fit_heaps(grid, result.historical),
                "reconstructed": fit_heaps(grid, result.reconstructed)}
        return fit_frame(fits)
    out.attempt("panel_b_heaps", "log-log fits of category count on patents; "
                "estimate is the Heaps exponent, c0 its prefactor", heaps)

    est, first = result.category_years()
    out.add("panel_c_age_established",
            pd.DataFrame({"category": result.category_ids, "size": result.sizes,
                          "established": est}),
            "final size against the step (or year) each category was created")
    out.add("panel_d_age_first",
            pd.DataFrame({"category": result.category_ids, "size": result.sizes,
                          "first_patent": first}),
            "final size against the step (or year) of its oldest patent")

    rs = rank_size(result.sizes)
    out.add("panel_e_rank_size",
            pd.DataFrame({"rank": rs.ranks, "size": rs.sizes, "predicted_rank": rs.predicted_rank}),
            "sizes in descending order; predicted_rank is N exp(-rate size) at the "
            "exponential MLE")

    edges = None if result.params.calendar is not None else grid
    cohort, share, n = result.cohort_shares(edges=edges)
    out.add("panel_f_cohort_share", pd.DataFrame({"cohort": cohort, "share": share, "n": n}),
            "share of each arrival cohort now in a different category; cohorts are "
            "calendar years or the bins ending at each grid point")
    out.info["simulation"] = {
        "final_count": result.n_categories,
        "reclassified_share": result.reclassified_share,
        "n_splits": result.n_splits,
    }
    return out


# --- dataset artifacts ------------------------------------------------------

def _need(table, what):
    if table is None:
        raise MissingInput(f"{what} not supplied")
    return table


def class_sizes(dataset: Dataset, exclude=()) -> pd.Series:
    """Patents per current class, largest first (ties by code), excluding listed classes."""
    sizes = dataset.patents["class_current"].value_counts().sort_index()
    sizes = sizes.sort_values(ascending=False, kind="stable")
    sizes = sizes[~sizes.index.isin(list(exclude))]
    if sizes.empty:
        raise MissingInput("no patents left after exclusions")
    return sizes


def heaps_points(dataset: Dataset) -> pd.DataFrame:
    """Historical class count against cumulative patents, by year."""
    counts = _need(dataset.class_counts, "class_counts.csv")
    per_year = _need(dataset.patents_per_year, "patents_per_year.csv")
    cum = per_year.assign(patents=per_year["count"].cumsum())[["year", "patents"]]
    out = counts.rename(columns={"count": "classes"}).merge(cum, on="year", how="inner")
    out = out[(out["patents"] > 0) & (out["classes"] > 0)]
    if len(out) < 3:
        raise MissingInput("fewer than three years shared by class_counts and patents_per_year")
    return out[["year", "patents", "classes"]].reset_index(drop=True)


def reconstructed_points(dataset: Dataset) -> pd.DataFrame:
    """Current classes holding a patent by each year, against cumulative patents."""
    classes = _need(dataset.classes, "classes.csv")
    per_year = _need(dataset.patents_per_year, "patents_per_year.csv")
    first = classes["first_patent_year"].dropna().astype(np.int64).to_numpy()
    if first.size == 0:
        raise MissingInput("classes.csv has no first_patent_year values")
    years = per_year["year"].to_numpy()
    out = pd.DataFrame({"year": years, "patents": per_year["count"].cumsum().to_numpy(),
                        "classes": np.searchsorted(np.sort(first), years, side="right")})
    return out[(out["patents"] > 0) & (out["classes"] > 0)].reset_index(drop=True)


def _estimator_artifacts(out, dataset, exclude):
    out.attempt("class_counts", "historical number of classes by year",
                lambda: _need(dataset.class_counts, "class_counts.csv").copy())

    def heaps():
        fits = {}
        hist = heaps_points(dataset)
        fits["historical"] = fit_heaps(hist["patents"], hist["classes"])
        try:
            rec = reconstructed_points(dataset)
            fits["reconstructed"] = fit_heaps(rec["patents"], rec["classes"])
        except MissingInput as exc:
            out.skipped["heaps_fit.reconstructed"] = str(exc)
        return fit_frame(fits)
    out.attempt("heaps_points", "year, cumulative patents, historical class count",
                lambda: heaps_points(dataset))
    out.attempt("heaps_fit", "Heaps exponent fits on the historical and reconstructed curves",
                heaps)

    def size_rank():
        sizes = class_sizes(dataset, exclude)
        rs = rank_size(sizes.to_numpy())
        codes = sizes.index.to_numpy()[np.argsort(-sizes.to_numpy(), kind="stable")]
        return pd.DataFrame({"class_code": codes, "rank": rs.ranks, "size": rs.sizes,
                             "predicted_rank": rs.predicted_rank})
    out.attempt("rank_size", "current class sizes by rank with the exponential prediction",
                size_rank)

    def size_fits():
        sizes = class_sizes(dataset, exclude).to_numpy()
        rs = rank_size(sizes)
        return fit_frame({"exponential": fit_exponential_mle(sizes),
                          "negbin_shape": fit_negbin_shape(sizes),
                          "rank_size": rs.fit()})
    out.attempt("size_fits", "exponential rate, negative-binomial shape and rank-size fit",
                size_fits)

    def age_points():
        classes = _need(dataset.classes, "classes.csv")
        sizes = class_sizes(dataset, exclude)
        table = classes.merge(sizes.rename("size"), left_on="class_code", right_index=True)
        return table[["class_code", "size", "date_established", "first_patent_year"]] \
            .sort_values("class_code").reset_index(drop=True)

    def age_fits():
        table = age_points()
        fits = {}
        for col in ("date_established", "first_patent_year"):
            sub = table.dropna(subset=[col])
            if len(sub) >= 3:
                fits[col] = age_size_regression(sub["size"], sub[col].astype(float))
                fits[col + "_log"] = age_size_regression(sub["size"], sub[col].astype(float),
                                                         log_size=True)
        if not fits:
            raise MissingInput("fewer than three classes with known dates")
        return fit_frame(fits)
    out.attempt("age_size_points", "class size with its establishment and first-patent years",
                age_points)
    out.attempt("age_size_fits", "class size (and log size) regressed on each date", age_fits)


def dataset_artifacts(dataset: Dataset, exclude=(), analytics_only: bool = False) -> Artifacts:
    """Every artifact the dataset supports; ``exclude`` drops classes from size statistics."""
    out = Artifacts()
    exclude = tuple(exclude)

    if not analytics_only:
        _estimator_artifacts(out, dataset, exclude)

    out.attempt("reclassification_rate", "share of each grant-year cohort reclassified since",
                lambda: analytics.reclassification_rate_by_cohort(dataset.patents))

    def cited():
        if dataset.patents["citations"].isna().any() or dataset.patents.empty:
            raise MissingInput("citation counts missing for some or all patents")
        return dataset.patents
    out.attempt("citation_summary", "citations of all, non-reclassified and reclassified patents",
                lambda: analytics.citation_summary(cited()))

    def regressions():
        res = analytics.citation_regression_by_year(cited())
        if res.skipped:
            out.info["citation_regression_skipped"] = [list(s) for s in res.skipped]
        return res.table
    out.attempt("citation_regression", "per-year coefficient on the reclassification dummy",
                regressions)

    def origins():
        classes = _need(dataset.classes, "classes.csv")
        known = classes.dropna(subset=["date_established"])
        rows = []
        for code, year in zip(known["class_code"], known["date_established"].astype(int)):
            table = analytics.new_class_origins(dataset.patents, code, year)
            for origin, count in zip(table.table["origin"], table.table["count"]):
                rows.append({"class_code": code, "established": year, "origin": origin,
                             "count": int(count), "share": count / table.total})
        out.info["origin_concentration"] = _clean(analytics.origin_concentration(
            dataset.patents, dict(zip(known["class_code"], known["date_established"].astype(int)))))
        return pd.DataFrame(rows, columns=["class_code", "established", "origin", "count", "share"])
    out.attempt("new_class_origins", "birth classes of patents that predate their current class",
                origins)

    def flows():
        groups = _need(dataset.group_map(), "groups.csv")
        return analytics.flow_matrix(dataset.patents, groups).long()
    out.attempt("flow_matrix", "reclassified patents by origin and destination group", flows)
    return out


def _clean(v):
    return None if isinstance(v, float) and math.isnan(v) else v


# --- output -----------------------------------------------------------------

def write_artifacts(artifacts: Artifacts, out_dir, extra: dict | None = None) -> dict:
    """Write one CSV per frame plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    produced = []
    for name in sorted(artifacts.frames):
        frame = artifacts.frames[name]
        path = out / f"{name}.csv"
        frame.to_csv(path, index=False, lineterminator="\n")
        produced.append({"name": name, "file": path.name, "rows": int(len(frame)),
                         "columns": [str(c) for c in frame.columns],
                         "description": artifacts.descriptions[name]})
    manifest = {
        "produced": produced,
        "skipped": [{"name": k, "reason": v} for k, v in sorted(artifacts.skipped.items())],
        "errors": [{"name": k, "reason": v} for k, v in sorted(artifacts.errors.items())],
        "info": artifacts.info,
        **(extra or {}),
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return manifest


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def merge(*parts: Artifacts) -> Artifacts:
    out = Artifacts()
    for p in parts:
        out.frames.update(p.frames)
        out.descriptions.update(p.descriptions)
        out.skipped.update(p.skipped)
        out.errors.update(p.errors)
        out.info.update(p.info)
    return out
