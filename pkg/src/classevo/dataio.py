"""Normalized CSV tables for real and simulated patent data.

Files (comma-separated, header row, LF line endings, empty field = absent)::

    patents.csv           patent_id,grant_year,class_birth,class_current,citations
    classes.csv           class_code,date_established,first_patent_year
    groups.csv            class_code,group
    class_counts.csv      year,count
    patents_per_year.csv  year,count

Only ``patents.csv`` is required.  ``strict`` reading raises on the first
violation; ``lenient`` reading drops offending rows and counts them.
"""

from __future__ import annotations

import csv
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .analytics import GroupMap
from .sim import SimResult, years_for_steps

logger = logging.getLogger(__name__)

SCHEMAS = {
    "patents": ["patent_id", "grant_year", "class_birth", "class_current", "citations"],
    "classes": ["class_code", "date_established", "first_patent_year"],
    "groups": ["class_code", "group"],
    "class_counts": ["year", "count"],
    "patents_per_year": ["year", "count"],
}


class SchemaError(ValueError):
    """Header of an input file does not match its schema."""


class DataValidationError(ValueError):
    """A row violates the schema in strict mode."""


@dataclass
class ValidationReport:
    rows_read: Counter = field(default_factory=Counter)
    rows_kept: Counter = field(default_factory=Counter)
    reasons: Counter = field(default_factory=Counter)

    @property
    def dropped(self) -> int:
        return sum(self.rows_read.values()) - sum(self.rows_kept.values())

    def summary(self) -> dict:
        return {
            "rows_read": dict(self.rows_read),
            "rows_kept": dict(self.rows_kept),
            "dropped": self.dropped,
            "reasons": {f"{t}: {r}": n for (t, r), n in sorted(self.reasons.items())},
        }


@dataclass
class Dataset:
    patents: pd.DataFrame
    classes: pd.DataFrame | None = None
    groups: pd.DataFrame | None = None
    class_counts: pd.DataFrame | None = None
    patents_per_year: pd.DataFrame | None = None

    def group_map(self, default: str | None = None) -> GroupMap | None:
        if self.groups is None:
            return None
        return GroupMap(dict(zip(self.groups["class_code"], self.groups["group"])), default)

    def calendar(self) -> list[tuple[int, int]] | None:
        if self.patents_per_year is None:
            return None
        return list(zip(self.patents_per_year["year"].tolist(),
                        self.patents_per_year["count"].tolist()))

    def tables(self):
        for name in SCHEMAS:
            table = getattr(self, name)
            if table is not None:
                yield name, table


def _empty(name):
    return _coerce(name, pd.DataFrame({c: pd.Series([], dtype=str) for c in SCHEMAS[name]}))


def _coerce(name, df):
    """Cast a validated all-string frame to the canonical dtypes."""
    df = df.copy()
    if name == "patents":
        df["grant_year"] = df["grant_year"].str.strip().astype(np.int64)
        df["citations"] = _optional_int(df["citations"])
    elif name == "classes":
        for c in ("date_established", "first_patent_year"):
            df[c] = _optional_int(df[c])
    elif name in ("class_counts", "patents_per_year"):
        for c in ("year", "count"):
            df[c] = df[c].str.strip().astype(np.int64)
    return df.reset_index(drop=True)


def _optional_int(col):
    return pd.array([None if v == "" else int(v) for v in col.str.strip()], dtype="Int64")


def _is_int(col, allow_empty=False, non_negative=False):
    s = col.str.strip()
    ok = s.str.fullmatch(r"-?\d+")
    if non_negative:
        ok &= ~s.str.startswith("-")
    if allow_empty:
        ok |= s == ""
    return ok.to_numpy()


def _row_checks(name, df):
    """Boolean masks of rows failing each check, keyed by reason."""
    checks = {}
    if name == "patents":
        checks["empty patent_id"] = (df["patent_id"] == "").to_numpy()
        checks["unparseable grant_year"] = ~_is_int(df["grant_year"])
        checks["empty class code"] = ((df["class_birth"] == "") | (df["class_current"] == "")).to_numpy()
        checks["bad citations"] = ~_is_int(df["citations"], allow_empty=True, non_negative=True)
    elif name == "classes":
        checks["empty class_code"] = (df["class_code"] == "").to_numpy()
        checks["unparseable year"] = ~(_is_int(df["date_established"], allow_empty=True)
                                       & _is_int(df["first_patent_year"], allow_empty=True))
    elif name == "groups":
        checks["empty field"] = ((df["class_code"] == "") | (df["group"] == "")).to_numpy()
    else:
        checks["unparseable year"] = ~_is_int(df["year"])
        checks["bad count"] = ~_is_int(df["count"], non_negative=True)
    return checks


def _read_table(name, path, strict, report, year_range=None):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        missing = [c for c in SCHEMAS[name] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")
        extra = [c for c in header if c not in SCHEMAS[name]]
        if extra and strict:
            raise SchemaError(f"{path}: unexpected column(s) {', '.join(extra)}")
        rows = list(reader)
    width = len(header)
    bad_width = np.array([len(r) != width for r in rows], dtype=bool)
    padded = [r if len(r) == width else (r + [""] * width)[:width] for r in rows]
    df = pd.DataFrame(padded, columns=header, dtype=str)[SCHEMAS[name]] if rows else \
        pd.DataFrame({c: pd.Series([], dtype=str) for c in SCHEMAS[name]})

    checks = {"wrong number of fields": bad_width} if rows else {}
    if rows:
        checks.update(_row_checks(name, df))
        if name == "patents" and year_range is not None:
            years = pd.to_numeric(df["grant_year"], errors="coerce").to_numpy()
            checks["grant_year out of range"] = ~((years >= year_range[0]) & (years <= year_range[1]))
        key = {"patents": "patent_id", "classes": "class_code", "groups": "class_code"}.get(name)
        if key:
            checks[f"duplicate {key}"] = df[key].duplicated(keep="first").to_numpy()

    report.rows_read[name] += len(rows)
    drop = np.zeros(len(rows), dtype=bool)
    for reason, mask in checks.items():
        mask = mask & ~drop
        if mask.any():
            if strict:
                row = int(np.flatnonzero(mask)[0]) + 1
                raise DataValidationError(f"{path}: data row {row}: {reason}")
            report.reasons[(name, reason)] += int(mask.sum())
            drop |= mask
    kept = _coerce(name, df[~drop]) if rows else _empty(name)

    if name in ("class_counts", "patents_per_year") and kept["year"].diff().le(0).any():
        if strict:
            raise DataValidationError(f"{path}: years must be strictly increasing")
        before = len(kept)
        kept = kept.drop_duplicates("year").sort_values("year").reset_index(drop=True)
        report.reasons[(name, "duplicate year")] += before - len(kept)
    report.rows_kept[name] += len(kept)
    return kept


def read_dataset(paths, strictness: str = "strict", year_range: tuple[int, int] | None = None):
    """Read a dataset from a directory or a ``{table: path}`` mapping.

    Returns ``(Dataset, ValidationReport)``.
    """
    if strictness not in ("strict", "lenient"):
        raise ValueError(f"strictness must be 'strict' or 'lenient', got {strictness!r}")
    strict = strictness == "strict"
    if isinstance(paths, (str, os.PathLike)):
        root = Path(paths)
        paths = {n: root / f"{n}.csv" for n in SCHEMAS if (root / f"{n}.csv").exists()}
    paths = {k: Path(v) for k, v in paths.items()}
    unknown = set(paths) - set(SCHEMAS)
    if unknown:
        raise ValueError(f"unknown table(s): {sorted(unknown)}")
    if "patents" not in paths:
        raise FileNotFoundError("patents.csv is required")

    report = ValidationReport()
    tables = {n: _read_table(n, p, strict, report, year_range) for n, p in paths.items()}

    if "classes" in tables:
        known = set(tables["classes"]["class_code"])
        pats = tables["patents"]
        orphan = ~pats["class_current"].isin(known).to_numpy()
        if orphan.any():
            if strict:
                code = pats["class_current"][orphan].iloc[0]
                raise DataValidationError(f"current class {code!r} not listed in classes.csv")
            report.reasons[("patents", "current class not in classes.csv")] += int(orphan.sum())
            report.rows_kept["patents"] -= int(orphan.sum())
            tables["patents"] = pats[~orphan].reset_index(drop=True)

    if report.dropped:
        logger.warning("dropped %d row(s): %s", report.dropped, report.summary()["reasons"])
    return Dataset(**tables), report


def _fmt(v):
    if v is None or v is pd.NA or (isinstance(v, float) and np.isnan(v)):
        return ""
    return str(v)


def write_dataset(dataset: Dataset, out_dir) -> list[Path]:
    """Write every present table; patents are sorted by ``patent_id``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in dataset.tables():
        cols = SCHEMAS[name]
        if name == "patents":
            table = table.sort_values("patent_id", kind="stable")
        elif name in ("classes", "groups"):
            table = table.sort_values("class_code", kind="stable")
        path = out / f"{name}.csv"
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for row in table[cols].itertuples(index=False, name=None):
                    w.writerow([_fmt(v) for v in row])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    return written


def export_simulation(result: SimResult, patents_per_year=None) -> Dataset:
    """Express a simulation run in the patent-data schema.

    Without a calendar a patent's grant year is its arrival index.
    Citations are absent (the model does not generate them).
    """
    h = result.params.horizon
    calendar = patents_per_year if patents_per_year is not None else result.params.calendar
    idx = np.arange(1, h + 1)
    if calendar is not None:
        calendar = [(int(y), int(c)) for y, c in calendar]
        if sum(c for _, c in calendar) < h:
            raise ValueError("calendar covers fewer patents than the simulation horizon")
        to_year = lambda steps: years_for_steps(steps, calendar)  # noqa: E731
    else:
        to_year = lambda steps: np.asarray(steps)  # noqa: E731

    width = len(str(h))
    ids = np.char.add("S", np.char.zfill(idx.astype(str), width))
    code = lambda c: np.char.add("C", np.asarray(c).astype(str))  # noqa: E731
    patents = pd.DataFrame({
        "patent_id": ids,
        "grant_year": to_year(idx).astype(np.int64),
        "class_birth": code(result.birth),
        "class_current": code(result.current),
        "citations": pd.array([pd.NA] * h, dtype="Int64"),
    })
    classes = pd.DataFrame({
        "class_code": code(result.category_ids),
        "date_established": pd.array(to_year(result.established_step), dtype="Int64"),
        "first_patent_year": pd.array(to_year(result.first_patent_step), dtype="Int64"),
    })
    if calendar is not None:
        cum = np.cumsum([c for _, c in calendar])
        inside = cum <= h
        points, years = cum[inside], np.array([y for y, _ in calendar])[inside]
        per_year = pd.DataFrame({"year": [y for y, _ in calendar],
                                 "count": np.diff(np.minimum(np.concatenate([[0], cum]), h))})
        per_year = per_year[per_year["count"] > 0].reset_index(drop=True)
    else:
        points, years = result.grid, result.grid
        per_year = None
    counts = pd.DataFrame({"year": np.asarray(years, dtype=np.int64),
                           "count": result.historical_at(points)})
    return Dataset(patents=patents, classes=classes, class_counts=counts,
                   patents_per_year=per_year)
