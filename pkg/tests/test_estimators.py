import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from classevo.estimators import (
    ConvergenceError,
    DegenerateDataError,
    age_size_regression,
    fit_exponential_mle,
    fit_heaps,
    fit_negbin_shape,
    fit_ols,
    geometric_loglik,
    negbin_profile_loglik,
    rank_size,
)

from oracles import central_difference, ols_by_sums


def profile_gradient(r, y):
    return central_difference(lambda v: negbin_profile_loglik(v, y), r, 1e-3 * r)


# --- OLS --------------------------------------------------------------------

def test_ols_exact_line():
    fit = fit_ols([0, 1, 2], [0, 2, 4])
    assert fit.estimate == 2.0
    assert fit.intercept == 0.0
    assert fit.r_squared == 1.0
    assert fit.stderr == 0.0


def test_ols_two_points():
    fit = fit_ols([1, 3], [5, 1])
    assert fit.estimate == -2.0 and fit.intercept == 7.0
    assert math.isnan(fit.stderr)


def test_ols_three_point_closed_form():
    # points (0,1), (1,2), (2,6): slope 5/2, intercept 2/3
    fit = fit_ols([0, 1, 2], [1, 2, 6])
    assert fit.estimate == pytest.approx(2.5, abs=1e-15)
    assert fit.intercept == pytest.approx(0.5, abs=1e-15)
    ssr = (1 - 0.5) ** 2 + (2 - 3) ** 2 + (6 - 5.5) ** 2
    assert fit.stderr == pytest.approx(math.sqrt(ssr / 1 / 2), rel=1e-14)


def test_ols_permuted_line_against_sums_oracle():
    rng = np.random.default_rng(0)
    x = np.arange(50.0)
    y = rng.permutation(3 * x + 1)
    fit = fit_ols(x, y)
    slope, intercept, r2 = ols_by_sums(x.tolist(), y.tolist())
    assert fit.estimate == pytest.approx(slope, rel=1e-12)
    assert fit.intercept == pytest.approx(intercept, rel=1e-12, abs=1e-12)
    assert fit.r_squared == pytest.approx(r2, rel=1e-10, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=40))
def test_ols_residuals_orthogonal(points):
    x = np.array([p[0] for p in points])
    y = np.array([p[1] for p in points])
    if np.ptp(x) < 1e-3:
        return
    fit = fit_ols(x, y)
    resid = y - fit.intercept - fit.estimate * x
    scale = (np.abs(x).sum() + len(x)) * np.abs(y).sum()
    assert abs(resid.sum()) <= 1e-9 * scale
    assert abs(resid @ x) <= 1e-9 * scale


def test_ols_matches_scipy_linregress():
    rng = np.random.default_rng(4)
    x = rng.normal(size=40)
    y = 0.3 * x + rng.normal(size=40)
    fit = fit_ols(x, y)
    ref = stats.linregress(x, y)
    assert fit.estimate == pytest.approx(ref.slope, rel=1e-12)
    assert fit.stderr == pytest.approx(ref.stderr, rel=1e-10)
    assert fit.intercept_stderr == pytest.approx(ref.intercept_stderr, rel=1e-10)
    assert fit.p_value == pytest.approx(ref.pvalue, rel=1e-8)
    assert fit.r_squared == pytest.approx(ref.rvalue**2, rel=1e-12)


def test_ols_constant_x():
    with pytest.raises(DegenerateDataError):
        fit_ols([2, 2, 2], [1, 2, 3])


def test_ols_length_mismatch():
    with pytest.raises(ValueError):
        fit_ols([1, 2, 3], [1, 2])


def test_ci95():
    fit = fit_ols([0, 1, 2, 3], [0, 1.2, 1.9, 3.1])
    lo, hi = fit.ci95()
    assert hi - fit.estimate == pytest.approx(1.96 * fit.stderr)
    assert fit.estimate - lo == pytest.approx(1.96 * fit.stderr)


# --- Heaps ------------------------------------------------------------------

def test_heaps_exact_power_law():
    n = np.array([10, 100, 1000, 10**4, 10**5], dtype=float)
    fit = fit_heaps(n, 2 * n**0.5)
    assert fit.estimate == pytest.approx(0.5, abs=1e-12)
    assert fit.extras["c0"] == pytest.approx(2.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.05, 0.95), st.floats(0.1, 50))
def test_heaps_recovers_parameters(b, c0):
    n = np.logspace(0, 7, 30)
    fit = fit_heaps(n, c0 * n**b)
    assert fit.estimate == pytest.approx(b, rel=1e-9)
    assert fit.extras["c0"] == pytest.approx(c0, rel=1e-9)


@pytest.mark.parametrize("n,c", [([1, 2, 0], [1, 2, 3]), ([1, 2, 3], [1, -2, 3])])
def test_heaps_rejects_nonpositive(n, c):
    with pytest.raises(ValueError):
        fit_heaps(n, c)


# --- exponential MLE ----------------------------------------------------------

def test_exponential_reciprocal_mean():
    fit = fit_exponential_mle([1, 2, 3])
    assert fit.estimate == 0.5
    assert fit.stderr == pytest.approx(0.5 / math.sqrt(3))
    assert fit.r_squared is None and fit.log_likelihood is not None


@given(st.lists(st.integers(1, 10**6), min_size=1, max_size=500))
def test_exponential_times_mean_is_one(sizes):
    fit = fit_exponential_mle(sizes)
    assert fit.estimate * np.mean(sizes) == pytest.approx(1.0, rel=1e-12)


def test_exponential_sampling_oracle():
    rng = np.random.default_rng(8)
    n = 10**5
    fit = fit_exponential_mle(rng.exponential(100.0, size=n))
    assert abs(fit.estimate - 0.01) <= 0.01 * 3 / math.sqrt(n)


def test_exponential_large_scale_standard_error():
    # 464 classes with mean size 21223
    sizes = np.full(464, 21223.0)
    fit = fit_exponential_mle(sizes)
    assert fit.estimate == pytest.approx(4.71e-5, abs=0.005e-5)
    assert fit.stderr == pytest.approx(0.22e-5, abs=0.005e-5)


# --- rank-size ----------------------------------------------------------------

def test_rank_size_order():
    rs = rank_size([3, 5, 1])
    assert rs.ranks.tolist() == [1, 2, 3]
    assert rs.sizes.tolist() == [5, 3, 1]


def test_rank_size_ties_are_stable():
    rs = rank_size([4, 4, 2])
    assert rs.sizes.tolist() == [4, 4, 2]
    assert rs.ranks.tolist() == [1, 2, 3]


def test_rank_size_prediction_uses_mle_rate():
    rs = rank_size([1, 2, 3])
    assert rs.rate == 0.5
    assert rs.predicted_rank.tolist() == pytest.approx([3 * math.exp(-1.5), 3 * math.exp(-1), 3 * math.exp(-0.5)])


@given(st.lists(st.integers(1, 50), min_size=1, max_size=100))
def test_rank_size_ranks_are_permutation(sizes):
    rs = rank_size(sizes)
    assert sorted(rs.ranks.tolist()) == list(range(1, len(sizes) + 1))
    assert rs.sizes[0] == max(sizes)
    assert np.all(np.diff(rs.sizes) <= 0)


def test_rank_size_exponential_sample_is_linear_in_log_rank():
    rng = np.random.default_rng(21)
    r2 = [rank_size(rng.exponential(20000, 464)).fit().r_squared for _ in range(100)]
    assert np.median(r2) >= 0.97


# --- negative binomial ----------------------------------------------------------

def test_negbin_geometric_data_gives_shape_one():
    rng = np.random.default_rng(2)
    sizes = rng.geometric(0.1, size=10**5)
    fit = fit_negbin_shape(sizes)
    assert 0.95 <= fit.estimate <= 1.05
    assert not fit.extras["boundary"]


def test_negbin_recovers_planted_shape():
    rng = np.random.default_rng(6)
    r, mu = 3.0, 40.0
    y = rng.negative_binomial(r, r / (r + mu), size=20000)
    fit = fit_negbin_shape(y + 1)
    assert abs(fit.estimate - r) <= 4 * fit.stderr


def test_negbin_constant_sample_is_boundary():
    fit = fit_negbin_shape([7] * 20)
    assert math.isinf(fit.estimate) and fit.extras["boundary"]


def test_negbin_all_ones_is_boundary():
    assert fit_negbin_shape([1, 1, 1]).extras["boundary"]


@given(st.lists(st.integers(1, 500), min_size=1, max_size=60))
def test_negbin_at_one_equals_geometric(sizes):
    y = np.asarray(sizes, dtype=float) - 1
    assert negbin_profile_loglik(1.0, y) == pytest.approx(geometric_loglik(y), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_negbin_profile_gradient_vanishes(seed):
    rng = np.random.default_rng(seed)
    shape = rng.uniform(0.5, 4)
    y = rng.negative_binomial(shape, shape / (shape + 200), size=464)
    fit = fit_negbin_shape(y + 1)
    assert abs(profile_gradient(fit.estimate, y)) < 1e-6


def test_negbin_profile_is_unimodal_on_grid():
    rng = np.random.default_rng(1)
    y = rng.negative_binomial(1.5, 1.5 / 101.5, size=300)
    fit = fit_negbin_shape(y + 1)
    grid = np.exp(np.linspace(math.log(fit.estimate) - 3, math.log(fit.estimate) + 3, 61))
    ll = np.array([negbin_profile_loglik(r, y.astype(float)) for r in grid])
    peak = ll.argmax()
    assert np.all(np.diff(ll[:peak + 1]) > 0) and np.all(np.diff(ll[peak:]) < 0)
    assert ll.max() <= fit.log_likelihood + 1e-9


def test_convergence_error_carries_iterate():
    err = ConvergenceError("stuck", 3.5)
    assert err.last == 3.5 and "3.5" in str(err)


# --- age-size ---------------------------------------------------------------------

def test_age_size_equal_sizes():
    fit = age_size_regression([10, 10, 10, 10], [1900, 1910, 1950, 1990])
    assert fit.estimate == 0.0
    assert fit.r_squared == 0.0


def test_age_size_log_matches_ols():
    rng = np.random.default_rng(3)
    sizes = rng.integers(1, 10**5, 50)
    years = rng.integers(1830, 2010, 50)
    a = age_size_regression(sizes, years, log_size=True)
    b = fit_ols(years, np.log(sizes))
    assert a.estimate == b.estimate and a.stderr == b.stderr and a.r_squared == b.r_squared
    assert a.kind == "age_size_log"


def test_age_size_constant_ages():
    with pytest.raises(DegenerateDataError):
        age_size_regression([1, 2, 3], [1950, 1950, 1950])


def test_fit_row_is_flat():
    row = fit_heaps([1, 10, 100], [1, 3, 9]).to_row()
    assert row["kind"] == "heaps" and "c0" in row
    assert all(not isinstance(v, (dict, list)) for v in row.values())
