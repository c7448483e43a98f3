import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from powerweight.backtest import (
    PWDBMA,
    BacktestConfig,
    HierPWD,
    Method,
    SepPWD,
    StateSpaceLR,
    Stationary,
    StepOutput,
    Window,
    paired_ttest,
    run_backtest,
    trajectory_extract,
)
from powerweight.hier import GibbsConfig, PanelData
from powerweight.normal import DegenerateError

GRID = np.linspace(0.8, 1.0, 5)


def small_panel(seed=0, J=3, T=40):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((T, 2))
    X = np.column_stack([np.ones(T), F])
    Y = np.stack([X @ [0.1, 1.0 + 0.2 * j, -0.5] + 0.3 * rng.standard_normal(T) for j in range(J)])
    return PanelData.from_common(X, Y, dates=np.arange(T) + 1000, covariates=("const", "A", "B"))


class Oracle(Method):
    """Predicts with knowledge of the full panel."""

    name = "Oracle"

    def __init__(self, panel):
        self.panel = panel

    def step(self, hist, x_next):
        return StepOutput(pred=self.panel.y[:, hist.T].copy())


class Flaky(Method):
    """Fails on the listed history lengths."""

    name = "Flaky"

    def __init__(self, bad):
        self.bad = set(bad)

    def step(self, hist, x_next):
        if hist.T in self.bad:
            raise DegenerateError("scripted failure")
        return StepOutput(pred=np.zeros(hist.J))


def test_perfect_foresight_has_zero_sspe():
    panel = small_panel()
    rep = run_backtest(panel, [Stationary(), Oracle(panel)], start_time=10)
    npt.assert_array_equal(rep.sspe("Oracle"), 0.0)
    assert np.all(np.diff(rep.sspe("Stationary")) >= 0)


def test_benchmark_delta_is_zero_and_additive():
    panel = small_panel(1)
    rep = run_backtest(panel, [Stationary(), Window(10), Oracle(panel)], start_time=12)
    npt.assert_array_equal(rep.delta_sspe("Stationary"), 0.0)
    d = rep.delta_sspe("Window-10") + rep.delta_sspe("Stationary", "Window-10")
    npt.assert_allclose(d, 0.0, atol=1e-12)
    npt.assert_allclose(rep.delta_sspe("Window-10", "Oracle"), rep.sspe("Window-10"))
    direct = ((rep.actual - rep.predictions["Window-10"]) ** 2).sum()
    assert rep.sspe("Window-10")[-1] == pytest.approx(direct)


def test_stationary_matches_expanding_ols():
    panel = small_panel(2, J=2)
    rep = run_backtest(panel, [Stationary()], start_time=5)
    for i, t in enumerate(rep.times):
        for j in range(2):
            coef = np.linalg.lstsq(panel.X[j, :t], panel.y[j, :t], rcond=None)[0]
            assert abs(rep.predictions["Stationary"][j, i] - panel.X[j, t] @ coef) < 1e-10
    s = trajectory_extract(rep, "beta_component", "Stationary", group=1, component="A")
    last = np.linalg.lstsq(panel.X[1, :-1], panel.y[1, :-1], rcond=None)[0]
    assert abs(s.iloc[-1] - last[1]) < 1e-10
    npt.assert_array_equal(trajectory_extract(rep, "alpha_star", "Stationary").to_numpy(), 1.0)
    assert list(s.index) == list(panel.dates[rep.times])


def test_failures_are_recorded_and_excluded_everywhere():
    panel = small_panel(3)
    rep = run_backtest(panel, [Stationary(), Flaky({15, 20})], start_time=10)
    assert [f["time"] for f in rep.failures] == [15, 20]
    assert rep.failures[0]["reason"] == "scripted failure"
    assert (~rep.valid).sum() == 2
    assert np.all(np.diff(rep.sspe("Stationary"))[~rep.valid[1:]] == 0)


def test_config_validation():
    panel = small_panel()
    with pytest.raises(ValueError):
        run_backtest(panel, [Stationary()], 10, BacktestConfig(benchmark="nope"))
    with pytest.raises(ValueError):
        run_backtest(panel, [Stationary(), Stationary()], 10)
    with pytest.raises(ValueError):
        run_backtest(panel, [Window(30)], 10)


def all_methods():
    return [
        Stationary(),
        Window(8),
        SepPWD(GRID),
        HierPWD(GRID, GibbsConfig(iterations=60, burn_in=10), refit_every=3),
        HierPWD(GRID, GibbsConfig(iterations=60, burn_in=10), fixed_alpha=1.0),
        StateSpaceLR(refit_every=4),
        PWDBMA(["A", "B"], GRID, refit_every=5),
    ]


def test_no_look_ahead_for_every_method():
    panel = small_panel(4, T=30)
    base = run_backtest(panel, all_methods(), start_time=12)
    cut = 22
    y = panel.y.copy()
    y[:, cut + 1 :] += 100.0
    X = panel.X.copy()
    X[:, cut + 1 :, 1:] *= -3.0
    moved = run_backtest(PanelData(X, y, panel.dates, panel.covariates), all_methods(), start_time=12)
    k = np.searchsorted(base.times, cut + 1)
    for m in base.methods:
        # predictions of rows up to cut + 1 use rows up to cut only
        npt.assert_array_equal(moved.predictions[m][:, :k], base.predictions[m][:, :k])


def test_trajectories_recorded():
    panel = small_panel(5, T=30)
    rep = run_backtest(panel, all_methods(), start_time=12)
    inc = trajectory_extract(rep, "inclusion_prob", "PWD-BMA", group="g0", component="A")
    assert np.all((inc >= 0) & (inc <= 1))
    a = trajectory_extract(rep, "alpha_star", "Sep-PWD", group=0)
    assert set(np.unique(a)) <= set(GRID)
    npt.assert_array_equal(trajectory_extract(rep, "alpha_star", "Stationary-Hier").to_numpy(), 1.0)
    with pytest.raises(KeyError):
        trajectory_extract(rep, "alpha_star", "Window-8")
    with pytest.raises(ValueError):
        trajectory_extract(rep, "velocity", "Stationary")


def test_summary_table():
    panel = small_panel(6)
    rep = run_backtest(panel, [Stationary(), Window(10)], 12)
    tab = rep.summary()
    assert np.isnan(tab.loc["Stationary", "p_value"])
    g = rep.group_mean_spe("Window-10")
    assert tab.loc["Window-10", "se"] == pytest.approx(g.std(ddof=1) / np.sqrt(g.size))
    assert tab.loc["Window-10", "total_sspe"] == pytest.approx(rep.sspe("Window-10")[-1])
    assert list(rep.delta_frame().columns) == ["Stationary", "Window-10"]


def test_welch_matches_scipy_and_edge_cases():
    a, b = np.array([1.0, 2.0, 3.0, 4.0]), np.array([2.0, 4.0, 6.0, 9.0, 1.0])
    t, p = paired_ttest(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert (t, p) == pytest.approx((ref.statistic, ref.pvalue))
    assert paired_ttest([1.0, 1.0], [1.0, 1.0]) == (0.0, 1.0)
    with pytest.raises(ValueError):
        paired_ttest([1.0, 1.0], [2.0, 2.0])
    with pytest.raises(ValueError):
        paired_ttest([1.0], [2.0, 3.0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), n=st.integers(2, 30), m=st.integers(2, 30))
def test_welch_symmetry(seed, n, m):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(n), rng.standard_normal(m) + 0.5
    t1, p1 = paired_ttest(a, b)
    t2, p2 = paired_ttest(b, a)
    assert t1 == pytest.approx(-t2) and p1 == pytest.approx(p2)
    assert 0 <= p1 <= 1
