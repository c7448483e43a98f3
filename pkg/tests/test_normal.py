import time

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from powerweight.normal import (
    DEFAULT_GRID,
    DegenerateError,
    estimate_alpha,
    forecast,
    log_pred_likelihood,
    one_step_terms,
    predictive,
    student_t_logpdf,
    terminal_posterior,
)
from powerweight.weights import Window


def naive_log_pred(y, alpha):
    """Rebuild every prefix predictive from scratch with explicit weights."""
    total = 0.0
    for t in range(2, len(y)):
        prefix = y[:t]
        if prefix.max() == prefix.min():
            continue
        w = alpha ** np.arange(t)[::-1]
        ta = w.sum()
        mean = np.dot(w, prefix) / ta
        second = np.dot(w, prefix ** 2) / ta
        s = ta / (ta - 1) * (second - mean ** 2)
        scale = np.sqrt((ta + 1) / ta * s)
        total += stats.t.logpdf(y[t], df=ta - 1, loc=mean, scale=scale)
    return total


def test_constant_series_is_degenerate():
    with pytest.raises(DegenerateError):
        terminal_posterior([2, 2, 2, 2], 1.0)


def test_two_point_posterior():
    post = terminal_posterior([0, 4], 1.0)
    assert post.mean_loc == 2
    assert post.var_shape == 0.5
    assert post.var_rate == 4


def test_two_point_predictive():
    pred = predictive([0, 4], 1.0)
    assert (pred.df, pred.loc, pred.scale2) == (1, 2, 12)


def test_stationary_posterior_mean():
    y = np.random.default_rng(11).normal(2, 1, 500)
    assert abs(terminal_posterior(y, 1.0).mean_loc - 2) < 3 / np.sqrt(500)


def test_alpha_one_is_classical_predictive():
    rng = np.random.default_rng(5)
    for _ in range(20):
        y = rng.normal(size=rng.integers(3, 60))
        n = y.size
        pred = predictive(y, 1.0)
        assert abs(pred.df - (n - 1)) < 1e-12
        assert abs(pred.loc - y.mean()) < 1e-12
        assert abs(pred.scale2 - (1 + 1 / n) * y.var(ddof=1)) < 1e-12


def test_predictive_mean_is_weighted_average():
    y = np.random.default_rng(2).normal(size=40)
    w = 0.85 ** np.arange(40)[::-1]
    assert abs(predictive(y, 0.85).loc - np.dot(w, y) / w.sum()) < 1e-12


def test_predictive_density_integrates_to_one():
    y = np.random.default_rng(9).standard_normal(300)
    pred = predictive(y, 0.95)
    total, _ = integrate.quad(pred.pdf, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12)
    assert abs(total - 1) < 1e-6


def test_student_t_logpdf_matches_scipy():
    y = np.linspace(-3, 3, 7)
    npt.assert_allclose(student_t_logpdf(y, 4.5, 0.3, 2.0), stats.t.logpdf(y, 4.5, 0.3, np.sqrt(2.0)), rtol=1e-12)


def test_window_weights_equal_last_points():
    y = np.random.default_rng(4).normal(size=50)
    a = predictive(y, Window(12))
    b = predictive(y[-12:], 1.0)
    assert abs(a.loc - b.loc) < 1e-12 and abs(a.scale2 - b.scale2) < 1e-12 and a.df == b.df


def test_three_equal_values_raise():
    with pytest.raises(DegenerateError):
        log_pred_likelihood([1.0, 1.0, 1.0], 0.9)


def test_log_pred_matches_naive_T200():
    y = np.random.default_rng(0).standard_normal(200)
    assert abs(log_pred_likelihood(y, 0.9) - naive_log_pred(y, 0.9)) < 1e-8


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(5, 500), alpha=st.floats(0.5, 1.0))
def test_log_pred_incremental_equals_naive(seed, n, alpha):
    y = np.random.default_rng(seed).normal(size=n)
    assert abs(log_pred_likelihood(y, alpha) - naive_log_pred(y, alpha)) < 1e-8


def test_degenerate_prefix_terms_skipped_symmetrically():
    y = np.array([1.0, 1.0, 1.0, 2.0, 0.5, 3.0, 1.5])
    terms, usable = one_step_terms(y, [0.6, 0.9, 1.0])
    # prefixes (1,1) and (1,1,1) are constant, so y[2] and y[3] are not scored
    npt.assert_array_equal(usable, [False, False, False, False, True, True, True])
    assert np.all(np.isfinite(terms[:, usable]))
    est = estimate_alpha(y, [0.6, 0.9, 1.0])
    assert est.n_terms == 3 and est.n_skipped == 2


def test_argmax_ties_go_to_largest_alpha():
    y = np.random.default_rng(1).normal(size=30)
    est = estimate_alpha(y, [0.7, 0.7 + 1e-9])
    assert est.per_alpha_loglik[1] == pytest.approx(est.per_alpha_loglik[0])
    flat = estimate_alpha(y, [0.8, 0.9], log_prior=lambda a: 0.0)
    assert flat.alpha_star == flat.grid[np.argmax(flat.per_alpha_loglik)]
    tied = estimate_alpha(np.array([0.0, 1.0, 0.0, 1.0]), [0.9, 1.0], log_prior=lambda a: -np.inf if a < 1 else 0)
    assert tied.alpha_star == 1.0


def test_prior_at_one_never_lowers_alpha():
    rng = np.random.default_rng(8)
    for _ in range(20):
        y = np.concatenate([rng.normal(0, 1, 50), rng.normal(rng.uniform(0, 3), 1, 50)])
        flat = estimate_alpha(y)
        peaked = estimate_alpha(y, log_prior=lambda a: 50.0 * (a - 1.0))
        assert peaked.alpha_star >= flat.alpha_star


def test_grid_validation():
    y = np.random.default_rng(0).normal(size=10)
    with pytest.raises(ValueError):
        estimate_alpha(y, [])
    with pytest.raises(ValueError):
        estimate_alpha(y, [0.9, 0.8])


def test_stationary_series_alpha_near_one():
    rng = np.random.default_rng(123)
    a = np.array([estimate_alpha(rng.normal(2, 1, 500)).alpha_star for _ in range(400)])
    assert np.median(a) >= 0.97
    assert np.mean(a >= 0.95) >= 0.9


def test_mean_break_gives_alpha_below_one():
    rng = np.random.default_rng(321)
    hits = 0
    for _ in range(400):
        y = np.concatenate([rng.normal(0, 1, 100), rng.normal(4, 1, 100)])
        hits += estimate_alpha(y).alpha_star < 1
    assert hits >= 360


def test_forecast_returns_predictive_at_alpha_star():
    y = np.random.default_rng(6).normal(size=100)
    pred, est = forecast(y)
    assert pred == predictive(y, est.alpha_star)


def test_runtime_roughly_linear():
    rng = np.random.default_rng(0)
    short, long_ = rng.normal(size=2000), rng.normal(size=4000)

    def best(y):
        out = []
        for _ in range(3):
            t0 = time.perf_counter()
            estimate_alpha(y, DEFAULT_GRID)
            out.append(time.perf_counter() - t0)
        return min(out)

    ratio = best(long_) / best(short)
    assert 1.0 < ratio < 4.0
