import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from powerweight.weights import (
    Exponential,
    Explicit,
    Linear,
    WeightedMoments,
    Window,
    materialize,
    moment_paths,
    prefix_weighted_sums,
    update_moments,
)


def test_exponential_alpha_one_is_flat():
    wv = materialize(Exponential(1.0), 5)
    npt.assert_array_equal(wv.w, np.ones(5))
    assert wv.scaled_count == 5


def test_exponential_half():
    wv = materialize(Exponential(0.5), 3)
    npt.assert_allclose(wv.w, [1, 0.5, 0.25])
    assert wv.scaled_count == 1.75


def test_window_weights():
    wv = materialize(Window(2), 4)
    npt.assert_array_equal(wv.w, [1, 1, 0, 0])
    assert wv.scaled_count == 2


def test_linear_weights_reach_zero_at_horizon():
    wv = materialize(Linear(4), 6)
    npt.assert_allclose(wv.w, [1, 0.75, 0.5, 0.25, 0, 0])


def test_explicit_weights():
    wv = materialize(Explicit([1, 0.3, 0.2]), 2)
    npt.assert_allclose(wv.w, [1, 0.3])
    with pytest.raises(ValueError):
        materialize(Explicit([1, 0.3]), 3)


@pytest.mark.parametrize("bad", [lambda: Exponential(1.2), lambda: Exponential(-0.1), lambda: Window(0),
                                 lambda: Linear(0), lambda: Explicit([0.5, 1.5])])
def test_invalid_schemes(bad):
    with pytest.raises(ValueError):
        bad()


def test_update_single_observation():
    m = update_moments(WeightedMoments(), 2.0, 0.9)
    assert m.t_alpha == 1 and m.wmean == 2 and m.wsecond == 4 and m.n == 1


def test_update_unweighted_average():
    m = WeightedMoments()
    for y in (1.0, 3.0):
        m = update_moments(m, y, 1.0)
    assert m.wmean == 2 and m.t_alpha == 2


def test_update_rejects_nonfinite():
    with pytest.raises(ValueError):
        update_moments(WeightedMoments(), np.nan, 0.5)


def naive_moments(y, alpha):
    w = alpha ** np.arange(len(y))[::-1]
    return w.sum(), np.dot(w, y) / w.sum(), np.dot(w, y * y) / w.sum()


def test_update_matches_naive_on_200_draws():
    y = np.random.default_rng(3).standard_normal(200)
    m = WeightedMoments()
    for t, v in enumerate(y):
        m = update_moments(m, v, 0.8)
        ta, mean, second = naive_moments(y[: t + 1], 0.8)
        npt.assert_allclose([m.t_alpha, m.wmean, m.wsecond], [ta, mean, second], rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    y=arrays(np.float64, st.integers(1, 60), elements=st.floats(-100, 100, allow_nan=False)),
    alpha=st.floats(0.0, 1.0),
)
def test_sequential_update_equals_direct(y, alpha):
    m = WeightedMoments()
    for t, v in enumerate(y):
        m = update_moments(m, v, alpha)
        ta, mean, _ = naive_moments(y[: t + 1], alpha) if alpha > 0 else (1.0, v, v * v)
        assert abs(m.wmean - mean) <= 1e-10 * max(1.0, np.abs(y[: t + 1]).max())
        assert m.wsecond >= m.wmean ** 2 - 1e-12 * max(1.0, m.wsecond)
    assert m.n == y.size


@settings(max_examples=30, deadline=None)
@given(
    scheme=st.one_of(
        st.floats(0, 1).map(Exponential),
        st.integers(1, 30).map(Window),
        st.integers(1, 30).map(Linear),
    ),
    length=st.integers(1, 50),
)
def test_weights_nonincreasing_and_in_unit_interval(scheme, length):
    wv = materialize(scheme, length)
    assert np.all(np.diff(wv.w) <= 0)
    assert np.all((wv.w >= 0) & (wv.w <= 1))
    assert abs(wv.scaled_count - wv.w.sum()) <= 1e-12 * max(wv.w.sum(), 1)


@pytest.mark.parametrize("scheme", [Exponential(0.7), Window(5), Linear(6), Explicit(np.linspace(1, 0.1, 30))])
def test_prefix_sums_match_direct(scheme):
    v = np.random.default_rng(0).standard_normal((30, 3))
    out = prefix_weighted_sums(v, scheme)
    for t in range(30):
        w = materialize(scheme, t + 1).w
        npt.assert_allclose(out[t], w @ v[t::-1], rtol=1e-12, atol=1e-12)


def test_moment_paths_match_naive():
    y = np.random.default_rng(1).normal(5, 2, 80)
    alphas = np.array([0.5, 0.9, 1.0])
    paths = moment_paths(y, alphas)
    for g, a in enumerate(alphas):
        for t in range(y.size):
            w = a ** np.arange(t + 1)[::-1]
            mean = np.dot(w, y[: t + 1]) / w.sum()
            m2 = np.dot(w, (y[: t + 1] - mean) ** 2)
            npt.assert_allclose(paths.t_alpha[g, t], w.sum(), rtol=1e-12)
            npt.assert_allclose(paths.mean[g, t], mean, rtol=1e-12)
            npt.assert_allclose(paths.m2[g, t], m2, rtol=1e-9, atol=1e-12)
