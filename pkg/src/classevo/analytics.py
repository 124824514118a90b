"""Reclassification and citation analytics over patent-level records.

Every function accepts either a :class:`pandas.DataFrame` with the
``patents.csv`` columns or an iterable of :class:`PatentRecord`.  A patent is
reclassified when its class at grant differs from its current class.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .estimators import fit_ols

logger = logging.getLogger(__name__)

PATENT_COLUMNS = ["patent_id", "grant_year", "class_birth", "class_current", "citations"]


@dataclass(frozen=True)
class PatentRecord:
    patent_id: str
    grant_year: int
    class_birth: str
    class_current: str
    citations: int | None = None

    @property
    def reclassified(self) -> bool:
        return self.class_birth != self.class_current


def as_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        missing = [c for c in PATENT_COLUMNS[:4] if c not in records.columns]
        if missing:
            raise ValueError(f"patent table lacks columns {missing}")
        df = records
    else:
        df = pd.DataFrame([r.__dict__ for r in records], columns=PATENT_COLUMNS)
    if "citations" not in df.columns:
        df = df.assign(citations=pd.array([pd.NA] * len(df), dtype="Int64"))
    return df


def _reclassified(df):
    return (df["class_birth"] != df["class_current"]).to_numpy()


def _citations(df):
    cites = df["citations"]
    if cites.isna().any():
        raise ValueError("citation counts are missing for some records")
    return cites.to_numpy(dtype=np.float64)


def reclassification_rate_by_cohort(records) -> pd.DataFrame:
    """Share of each grant-year cohort whose class has changed since grant."""
    df = as_frame(records)
    moved = pd.Series(_reclassified(df), index=df.index)
    g = moved.groupby(df["grant_year"].to_numpy())
    out = pd.DataFrame({"share": g.mean(), "n": g.size()})
    out.index.name = "year"
    return out.reset_index()


def citation_summary(records) -> pd.DataFrame:
    """Citation statistics for all, non-reclassified and reclassified patents.

    ``share`` is in percent; ``sd`` is the sample standard deviation.
    """
    df = as_frame(records)
    cites = _citations(df)
    moved = _reclassified(df)
    rows = []
    for label, mask in (("All", np.ones(len(df), dtype=bool)),
                        ("Non reclassified", ~moved), ("Reclassified", moved)):
        c = cites[mask]
        rows.append({
            "population": label,
            "share": 100.0 * mask.sum() / len(df) if len(df) else math.nan,
            "n": int(mask.sum()),
            "mean": c.mean() if c.size else math.nan,
            "median": float(np.median(c)) if c.size else math.nan,
            "sd": c.std(ddof=1) if c.size > 1 else math.nan,
        })
    return pd.DataFrame(rows)


@dataclass
class YearRegressions:
    """Per-year coefficients on the reclassification dummy.

    ``table`` has one row per (year, specification); ``specification`` is
    ``"pooled"`` (no class dummies) or ``"class_fe"`` (class-at-birth dummies).
    """

    table: pd.DataFrame
    skipped: list[tuple[int, str, str]] = field(default_factory=list)


def _within(values, groups):
    means = pd.Series(values).groupby(groups).transform("mean").to_numpy()
    return values - means


def class_fe_coefficient(log_c, moved, classes):
    """Slope on the dummy with class-at-birth fixed effects, by demeaning.

    Returns (beta, stderr, n_groups) or None when the demeaned dummy is
    identically zero or no residual degrees of freedom remain.
    """
    codes = pd.factorize(classes)[0]
    y = _within(log_c, codes)
    x = _within(moved.astype(np.float64), codes)
    sxx = x @ x
    n_groups = int(codes.max()) + 1
    dof = log_c.size - n_groups - 1
    if sxx <= 1e-12 * log_c.size or dof <= 0:
        return None
    beta = (x @ y) / sxx
    resid = y - beta * x
    se = math.sqrt((resid @ resid) / dof / sxx)
    return float(beta), se, n_groups


def citation_regression_by_year(records, min_group: int = 2) -> YearRegressions:
    """Regress log citations on the reclassification dummy, year by year.

    Patents without citations are dropped.  A year is used only if it keeps
    at least ``min_group`` reclassified and ``min_group`` other patents.
    """
    df = as_frame(records)
    cites = _citations(df)
    keep = cites >= 1
    years = df["grant_year"].to_numpy()[keep]
    log_c = np.log(cites[keep])
    moved = _reclassified(df)[keep]
    classes = df["class_birth"].to_numpy()[keep]

    rows, skipped = [], []
    for year in np.unique(years):
        sel = years == year
        r = moved[sel]
        n_moved = int(r.sum())
        if n_moved < min_group or r.size - n_moved < min_group:
            skipped.append((int(year), "both", f"{n_moved} reclassified of {r.size} cited patents"))
            continue
        pooled = fit_ols(r.astype(np.float64), log_c[sel])
        rows.append(_reg_row(year, "pooled", pooled.estimate, pooled.stderr, r.size))
        fe = class_fe_coefficient(log_c[sel], r, classes[sel])
        if fe is None:
            skipped.append((int(year), "class_fe", "dummy constant within every class at birth"))
        else:
            rows.append(_reg_row(year, "class_fe", fe[0], fe[1], r.size))
    for year, spec, why in skipped:
        logger.warning("citation regression for %d (%s) skipped: %s", year, spec, why)
    table = pd.DataFrame(rows, columns=["year", "specification", "beta", "stderr",
                                        "ci_low", "ci_high", "n"])
    return YearRegressions(table, skipped)


def _reg_row(year, spec, beta, se, n):
    return {"year": int(year), "specification": spec, "beta": beta, "stderr": se,
            "ci_low": beta - 1.96 * se, "ci_high": beta + 1.96 * se, "n": int(n)}


@dataclass(frozen=True)
class GroupMap:
    """Class code -> group label, with an optional catch-all group."""

    mapping: Mapping[str, str]
    default: str | None = None

    def __post_init__(self):
        if any(not label for label in self.mapping.values()) or self.default == "":
            raise ValueError("group labels must be non-empty")

    def __call__(self, code: str) -> str:
        try:
            return self.mapping[code]
        except KeyError:
            if self.default is None:
                raise KeyError(f"class {code!r} has no group and no default is set") from None
            return self.default


@dataclass(frozen=True)
class FlowMatrix:
    """Reclassified-patent counts, rows = origin group, columns = destination."""

    counts: pd.DataFrame

    @property
    def total(self) -> int:
        return int(self.counts.to_numpy().sum())

    @property
    def origin_totals(self) -> pd.Series:
        return self.counts.sum(axis=1)

    @property
    def destination_totals(self) -> pd.Series:
        return self.counts.sum(axis=0)

    def long(self) -> pd.DataFrame:
        out = self.counts.stack().rename("count").reset_index()
        out.columns = ["origin", "destination", "count"]
        return out


def flow_matrix(records, groups: GroupMap | Mapping[str, str]) -> FlowMatrix:
    if not isinstance(groups, GroupMap):
        groups = GroupMap(dict(groups))
    df = as_frame(records)
    moved = df[_reclassified(df)]
    origin = [groups(c) for c in moved["class_birth"]]
    dest = [groups(c) for c in moved["class_current"]]
    labels = sorted(set(groups.mapping.values()) | set(origin) | set(dest))
    table = pd.DataFrame(0, index=pd.Index(labels, name="origin"),
                         columns=pd.Index(labels, name="destination"), dtype=np.int64)
    for (o, d), count in Counter(zip(origin, dest)).items():
        table.loc[o, d] = count
    return FlowMatrix(table)


@dataclass(frozen=True)
class OriginTable:
    target_class: str
    established_year: int
    total: int
    table: pd.DataFrame

    @property
    def top_share(self) -> float:
        return self.table["count"].iloc[0] / self.total if self.total else math.nan


def new_class_origins(records, target_class: str, established_year: int) -> OriginTable:
    """Birth classes of patents granted before ``target_class`` existed and now in it."""
    df = as_frame(records)
    if not (df["class_current"] == target_class).any():
        logger.warning("class %s holds no patents", target_class)
    sel = df[(df["class_current"] == target_class) & (df["grant_year"] < established_year)]
    counts = sel["class_birth"].value_counts()
    # ties listed by class code so the output is order-independent
    table = (pd.DataFrame({"origin": counts.index.astype(str), "count": counts.to_numpy()})
             .sort_values(["count", "origin"], ascending=[False, True], kind="stable")
             .reset_index(drop=True))
    return OriginTable(target_class, int(established_year), int(len(sel)), table)


def origin_concentration(records, established_years: Mapping[str, int],
                         threshold: float = 0.9) -> float:
    """Fraction of new classes whose pre-birth patents mostly come from one class.

    Classes with no pre-birth patents are left out; NaN if none remain.
    """
    df = as_frame(records)
    shares = []
    for code, year in sorted(established_years.items()):
        origins = new_class_origins(df, code, year)
        if origins.total:
            shares.append(origins.top_share)
    if not shares:
        return math.nan
    return float(np.mean(np.array(shares) > threshold))
