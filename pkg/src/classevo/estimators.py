"""Regressions and likelihood fits for category counts and sizes."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

MAX_ITER = 200


class DegenerateDataError(ValueError):
    """Raised when the data cannot identify the requested fit."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, last):
        super().__init__(f"{message} (last iterate {last!r})")
        self.last = last


@dataclass(frozen=True)
class FitResult:
    """Estimate of one parameter of interest plus optional companions.

    For regressions ``estimate`` is the slope; ``intercept`` is filled in.
    Pure likelihood fits leave ``r_squared`` empty and set ``log_likelihood``.
    """

    kind: str
    estimate: float
    stderr: float
    n: int
    intercept: float | None = None
    intercept_stderr: float | None = None
    r_squared: float | None = None
    p_value: float | None = None
    log_likelihood: float | None = None
    extras: dict = field(default_factory=dict)

    def ci95(self) -> tuple[float, float]:
        """Approximate 95% interval, estimate +/- 1.96 stderr."""
        half = 1.96 * self.stderr
        return self.estimate - half, self.estimate + half

    def to_row(self) -> dict:
        row = {
            "kind": self.kind,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n": self.n,
            "intercept": self.intercept,
            "intercept_stderr": self.intercept_stderr,
            "r_squared": self.r_squared,
            "p_value": self.p_value,
            "log_likelihood": self.log_likelihood,
        }
        row.update(self.extras)
        return row


def _as_1d(values, name):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def fit_ols(x: Sequence[float], y: Sequence[float], kind: str = "ols") -> FitResult:
    """Simple linear regression of ``y`` on ``x`` with classical standard errors.

    Two points give the exact line with undefined (NaN) standard errors.
    A constant ``y`` gives slope 0 and R^2 = 0.
    """
    x = _as_1d(x, "x")
    y = _as_1d(y, "y")
    n = x.size
    if n != y.size:
        raise ValueError(f"x and y differ in length ({n} vs {y.size})")
    if n < 2:
        raise DegenerateDataError("need at least two observations")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = dx @ dx
    if sxx == 0.0 or sxx <= 1e-24 * max(1.0, x @ x):
        raise DegenerateDataError("regressor is constant")
    slope = (dx @ dy) / sxx
    intercept = ym - slope * xm
    resid = y - intercept - slope * x
    ssr = resid @ resid
    sst = dy @ dy
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    r2 = min(1.0, max(0.0, r2))
    dof = n - 2
    if dof > 0:
        s2 = ssr / dof
        se = math.sqrt(s2 / sxx)
        se_int = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
        if se > 0:
            p = float(2.0 * stats.t.sf(abs(slope) / se, dof))
        else:
            p = 0.0 if slope != 0 else 1.0
    else:
        se = se_int = p = math.nan
    return FitResult(kind, float(slope), se, n, intercept=float(intercept),
                     intercept_stderr=se_int, r_squared=float(r2), p_value=p)


def fit_heaps(n_patents: Sequence[float], n_categories: Sequence[float]) -> FitResult:
    """Fit C = C0 * n**b by OLS on logs; ``estimate`` is b, ``extras['c0']`` is C0."""
    n_patents = _as_1d(n_patents, "n_patents")
    n_categories = _as_1d(n_categories, "n_categories")
    if n_patents.size != n_categories.size:
        raise ValueError("n_patents and n_categories differ in length")
    if n_patents.size < 3:
        raise DegenerateDataError("Heaps fit needs at least three points")
    if np.any(n_patents <= 0) or np.any(n_categories <= 0):
        raise ValueError("Heaps fit requires strictly positive counts")
    fit = fit_ols(np.log(n_patents), np.log(n_categories), kind="heaps")
    return _with_extras(fit, c0=math.exp(fit.intercept))


def _with_extras(fit, **extras):
    merged = dict(fit.extras)
    merged.update(extras)
    return FitResult(**{**fit.__dict__, "extras": merged})


def _sizes(sample, name="sizes", integer=True):
    arr = _as_1d(sample, name)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if integer and (np.any(arr < 1) or np.any(arr != np.round(arr))):
        raise ValueError(f"{name} must be integers >= 1")
    if not integer and np.any(arr <= 0):
        raise ValueError(f"{name} must be positive")
    return arr


def fit_exponential_mle(sample: Sequence[float]) -> FitResult:
    """Exponential rate by maximum likelihood: one over the mean size."""
    k = _sizes(sample, integer=False)
    n = k.size
    mean = k.mean()
    lam = 1.0 / mean
    loglik = n * math.log(lam) - n
    return FitResult("exponential", lam, lam / math.sqrt(n), n, log_likelihood=loglik,
                     extras={"mean": float(mean)})


@dataclass(frozen=True)
class RankSize:
    ranks: np.ndarray
    sizes: np.ndarray
    predicted_rank: np.ndarray
    rate: float

    def fit(self) -> FitResult:
        """Size regressed on log rank; exponential sizes give a straight line."""
        return fit_ols(np.log(self.ranks), self.sizes, kind="rank_size")


def rank_size(sample: Sequence[float]) -> RankSize:
    """Sizes in descending order with ranks 1..n (ties keep input order).

    ``predicted_rank`` is N * exp(-rate * size) with the exponential MLE rate.
    """
    k = _sizes(sample, integer=False)
    order = np.argsort(-k, kind="stable")
    sizes = k[order]
    lam = fit_exponential_mle(k).estimate
    return RankSize(np.arange(1, k.size + 1), sizes, k.size * np.exp(-lam * sizes), lam)


def negbin_profile_loglik(r: float, counts: np.ndarray) -> float:
    """Negative-binomial log-likelihood at shape ``r`` with mean set to the sample mean.

    ``counts`` are on support {0, 1, ...}.
    """
    y = np.asarray(counts, dtype=np.float64)
    mu = y.mean()
    n = y.size
    terms = [math.fsum(special.gammaln(y + r)), -n * special.gammaln(r),
             -math.fsum(special.gammaln(y + 1)), n * r * math.log(r / (r + mu))]
    if mu > 0:
        terms.append(y.sum() * math.log(mu / (r + mu)))
    return math.fsum(terms)


def geometric_loglik(counts: np.ndarray) -> float:
    """Geometric log-likelihood on {0, 1, ...} at its MLE p = 1 / (1 + mean)."""
    mu = counts.mean()
    p = 1.0 / (1.0 + mu)
    ll = counts.size * math.log(p)
    if mu > 0:
        ll += counts.sum() * math.log1p(-p)
    return float(ll)


def _score(r, y, mu):
    n = y.size
    return float(special.digamma(y + r).sum() - n * special.digamma(r) + n * math.log(r / (r + mu)))


def _score_slope(r, y, mu):
    n = y.size
    return float(special.polygamma(1, y + r).sum() - n * special.polygamma(1, r)
                 + n * (1.0 / r - 1.0 / (r + mu)))


def fit_negbin_shape(sample: Sequence[float], rtol: float = 1e-8) -> FitResult:
    """Negative-binomial shape MLE for ``sizes - 1``, mean profiled out.

    The shape is bracketed on a log scale, located by golden-section search
    on the profile likelihood and polished with Newton steps on the score.
    Samples that are not over-dispersed have no finite maximiser; the result
    then has ``estimate == inf`` and ``extras['boundary'] is True``.
    """
    y = _sizes(sample) - 1.0
    n = y.size
    mu = y.mean()
    var = y.var()
    if mu == 0 or var <= mu:
        return FitResult("negbin_shape", math.inf, math.nan, n,
                         log_likelihood=None, extras={"mu": float(mu), "boundary": True})

    # bracket the root of the score on a log-r grid
    lo, hi = 1.0, 1.0
    iters = 0
    if _score(1.0, y, mu) > 0:
        while _score(hi, y, mu) > 0:
            lo, hi = hi, hi * 4.0
            iters += 1
            if hi > 1e12 or iters >= MAX_ITER:
                return FitResult("negbin_shape", math.inf, math.nan, n,
                                 extras={"mu": float(mu), "boundary": True})
    else:
        while _score(lo, y, mu) <= 0:
            lo, hi = lo / 4.0, lo
            iters += 1
            if lo < 1e-12 or iters >= MAX_ITER:
                raise ConvergenceError("shape parameter drifted to zero", lo)

    # golden-section search on log r
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc = negbin_profile_loglik(math.exp(c), y)
    fd = negbin_profile_loglik(math.exp(d), y)
    while b - a > rtol:
        iters += 1
        if iters > MAX_ITER:
            raise ConvergenceError("golden-section search did not converge", math.exp((a + b) / 2))
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = negbin_profile_loglik(math.exp(c), y)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = negbin_profile_loglik(math.exp(d), y)
    r = math.exp((a + b) / 2)

    # Newton on the score, kept inside the final bracket
    ra, rb = math.exp(a), math.exp(b)
    for _ in range(20):
        g = _score(r, y, mu)
        h = _score_slope(r, y, mu)
        if h >= 0:
            break
        r_new = r - g / h
        if not ra * 0.5 < r_new < rb * 2.0:
            break
        done = abs(r_new - r) <= 1e-14 * r
        r = r_new
        if done:
            break

    info = -_score_slope(r, y, mu)
    se = 1.0 / math.sqrt(info) if info > 0 else math.nan
    return FitResult("negbin_shape", r, se, n, log_likelihood=negbin_profile_loglik(r, y),
                     extras={"mu": float(mu), "boundary": False})


def age_size_regression(sizes: Sequence[float], years: Sequence[float],
                        log_size: bool = False) -> FitResult:
    """Regress size (or log size) on the year a category was born."""
    sizes = _sizes(sizes, integer=False)
    years = _as_1d(years, "years")
    if sizes.size != years.size:
        raise ValueError("sizes and years differ in length")
    if sizes.size < 3:
        raise DegenerateDataError("age-size regression needs at least three categories")
    y = np.log(sizes) if log_size else sizes
    return fit_ols(years, y, kind="age_size_log" if log_size else "age_size")
