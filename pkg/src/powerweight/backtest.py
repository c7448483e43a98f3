"""Rolling one-step-ahead evaluation of forecasting methods on a panel.

At step ``t`` every method sees rows ``[: t + 1]`` of every group plus the
covariate row ``t + 1`` and predicts the response at ``t + 1``. Methods only
ever receive these slices, so no method can look ahead.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from . import baselines, bma
from .hier import (
    DEFAULT_GRID,
    GibbsConfig,
    PanelData,
    conditional_beta_mean,
    estimate_alpha_group,
    estimate_alphas_plugin,
    fit_predict_terminal,
    plugin_predictive,
    plugin_terminal,
)
from .normal import DegenerateError

log = logging.getLogger(__name__)


@dataclass
class StepOutput:
    """One method's predictions for every group at one step.

    ``pred`` is (J,); the optional trajectories are (J,), (J, p) and (J, F).
    """

    pred: np.ndarray
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    inclusion: Optional[np.ndarray] = None
    factors: tuple = ()


class Method:
    """Base class; subclasses implement ``step``.

    ``step`` receives a history panel (rows up to the current time) and the
    next covariate rows, and may keep state between calls. ``reset`` is
    called once before a run.
    """

    name = "method"

    def min_history(self, p: int) -> int:
        return p + 1

    def reset(self) -> None:
        pass

    def step(self, hist: PanelData, x_next: np.ndarray) -> StepOutput:
        raise NotImplementedError


class RefitMixin:
    refit_every: int = 1

    def _due(self) -> bool:
        due = self._count % self.refit_every == 0
        self._count += 1
        return due

    def reset(self) -> None:
        self._count = 0


class Stationary(Method):
    """Per-group OLS on the whole history."""

    name = "Stationary"

    def step(self, hist, x_next):
        coef = np.stack([baselines.stationary_ols(hist.X[j], hist.y[j]).coef for j in range(hist.J)])
        return StepOutput(pred=np.einsum("jp,jp->j", coef, x_next), beta=coef, alpha=np.ones(hist.J))


class Window(Method):
    """Per-group OLS on the trailing ``window`` rows."""

    def __init__(self, window: int = 60):
        self.window = int(window)
        self.name = f"Window-{self.window}"

    def min_history(self, p):
        return max(self.window, p + 1)

    def step(self, hist, x_next):
        coef = np.stack(
            [baselines.rolling_window_fit(hist.X[j], hist.y[j], self.window).coef for j in range(hist.J)]
        )
        return StepOutput(pred=np.einsum("jp,jp->j", coef, x_next), beta=coef)


class SepPWD(RefitMixin, Method):
    """Per-group decay by plug-in predictive likelihood, no pooling."""

    name = "Sep-PWD"

    def __init__(self, grid=None, refit_every: int = 1):
        self.grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
        self.refit_every = int(refit_every)
        self.alphas = None

    def min_history(self, p):
        return p + 3

    def reset(self):
        RefitMixin.reset(self)
        self.alphas = None

    def step(self, hist, x_next):
        if self._due() or self.alphas is None:
            self.alphas = np.array(
                [estimate_alpha_group(hist.X[j], hist.y[j], self.grid).alpha_star for j in range(hist.J)]
            )
        coef = np.stack([plugin_terminal(hist.X[j], hist.y[j], float(self.alphas[j]))[0] for j in range(hist.J)])
        return StepOutput(pred=np.einsum("jp,jp->j", coef, x_next), alpha=self.alphas.copy(), beta=coef)


class HierPWD(RefitMixin, Method):
    """Hierarchical regression: plug-in decay iteration, then Gibbs for the terminal coefficients.

    With ``fixed_alpha`` the decay search is skipped (``fixed_alpha=1`` is
    the stationary hierarchical model). Between refits the coefficients are
    conditional means given the last posterior's global parameters and the
    current data.
    """

    def __init__(self, grid=None, gibbs: GibbsConfig = GibbsConfig(), refit_every: int = 1,
                 fixed_alpha: Optional[float] = None, name: Optional[str] = None):
        self.grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
        self.gibbs = gibbs
        self.refit_every = int(refit_every)
        self.fixed_alpha = fixed_alpha
        self.name = name or ("Hier-PWD" if fixed_alpha is None else "Stationary-Hier")
        self.fit = None
        self.alphas = None

    def min_history(self, p):
        return p + 3

    def reset(self):
        RefitMixin.reset(self)
        self.fit = None
        self.alphas = None

    def step(self, hist, x_next):
        if self._due() or self.fit is None:
            if self.fixed_alpha is None:
                self.alphas = estimate_alphas_plugin(hist, self.grid, self.gibbs).alphas
            else:
                self.alphas = np.full(hist.J, float(self.fixed_alpha))
            self.fit = fit_predict_terminal(hist, self.alphas, self.gibbs, x_next)
            coef = self.fit.beta_mean
        else:
            coef = conditional_beta_mean(hist, self.alphas, self.fit)
        return StepOutput(pred=np.einsum("jp,jp->j", coef, x_next), alpha=self.alphas.copy(), beta=coef)


class StateSpaceLR(RefitMixin, Method):
    """Random-walk coefficient regression; the variance ratio is re-estimated on refits."""

    name = "State-Space-LR"

    def __init__(self, refit_every: int = 1):
        self.refit_every = int(refit_every)
        self.q = None

    def min_history(self, p):
        return 3 * p + 1

    def reset(self):
        RefitMixin.reset(self)
        self.q = None

    def step(self, hist, x_next):
        refit = self._due() or self.q is None
        fits = [
            baselines.state_space_lr_fit(hist.X[j], hist.y[j], None if refit else float(self.q[j]))
            for j in range(hist.J)
        ]
        if refit:
            self.q = np.array([f.q for f in fits])
        coef = np.stack([f.coef for f in fits])
        return StepOutput(pred=np.einsum("jp,jp->j", coef, x_next), beta=coef)


class PWDBMA(RefitMixin, Method):
    """Model averaging over factor subsets of the panel covariates.

    The panel covariates are the candidate factors; every model adds an
    intercept. Decays are re-maximised on refits; in between, each model's
    cumulative log score is extended with the newest observation at the
    held decay. ``grid=[1.0]`` gives the stationary version.
    """

    def __init__(self, factors: Sequence[str], grid=None, refit_every: int = 12, name: str = "PWD-BMA"):
        self.factors = tuple(factors)
        self.grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
        self.refit_every = int(refit_every)
        self.name = name
        self.weights = None

    def min_history(self, p):
        return len(self.factors) + 4

    def reset(self):
        RefitMixin.reset(self)
        self.weights = None

    def _models(self, hist):
        return bma.available_models(bma.enumerate_models(self.factors), hist.covariates)

    def _extend(self, hist):
        """Add the log score of the newest row, predicted from the rows before it."""
        prev = hist.head(hist.T - 1)
        w = self.weights
        for k, model in enumerate(w.models):
            idx = [hist.covariates.index(f) for f in model.factors]
            Xk = bma.design(prev, model)
            for j in range(hist.J):
                x = np.concatenate([[1.0], hist.X[j, -1, idx]])
                pred = plugin_predictive(Xk[j], prev.y[j], x, float(w.alpha_star[j, k]))
                w.loglik[j, k] += float(pred.logpdf(hist.y[j, -1]))
        w.probs = bma.normalize_log_weights(w.loglik)

    def step(self, hist, x_next):
        panel = hist.select([f for f in self.factors if f in hist.covariates])
        if self._due() or self.weights is None:
            self.weights = bma.model_weights(panel, self._models(panel), self.grid)
        else:
            self._extend(panel)
        mix = bma.bma_predict(panel, self.weights, x_next[:, [hist.covariates.index(f) for f in panel.covariates]])
        inc = np.stack([bma.inclusion_probability(self.weights, f) for f in panel.covariates], axis=1)
        return StepOutput(pred=mix.mean, inclusion=inc, factors=panel.covariates)


@dataclass
class BacktestConfig:
    benchmark: str = "Stationary"
    reference: Optional[str] = None
    record_trajectories: bool = True


@dataclass
class BacktestReport:
    """Per (method, group, step) predictions and errors plus aggregates.

    ``times`` are the indices of the predicted rows; ``valid`` marks steps
    where every method produced a prediction for every group, and only those
    steps enter ``sspe``, ``delta_sspe`` and ``summary``.
    """

    methods: list
    groups: tuple
    dates: np.ndarray
    times: np.ndarray
    actual: np.ndarray
    predictions: dict
    failures: list
    valid: np.ndarray
    benchmark: str
    reference: str
    alpha: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)
    inclusion: dict = field(default_factory=dict)
    covariates: tuple = ()
    inclusion_factors: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def spe(self, method) -> np.ndarray:
        return (self.actual - self.predictions[method]) ** 2

    def sspe(self, method) -> np.ndarray:
        """Cumulative squared prediction error summed over groups (valid steps)."""
        per_step = np.where(self.valid, self.spe(method).sum(axis=0), 0.0)
        return np.cumsum(per_step)

    def delta_sspe(self, method, benchmark=None) -> np.ndarray:
        return self.sspe(method) - self.sspe(benchmark or self.benchmark)

    def group_mean_spe(self, method) -> np.ndarray:
        return self.spe(method)[:, self.valid].mean(axis=1)

    def summary(self) -> pd.DataFrame:
        """Mean SPE, its standard error across groups and a Welch p-value vs the reference."""
        ref = self.group_mean_spe(self.reference)
        rows = []
        for m in self.methods:
            g = self.group_mean_spe(m)
            spe = self.spe(m)[:, self.valid]
            p = np.nan if m == self.reference else paired_ttest(ref, g)[1]
            rows.append(
                {
                    "method": m,
                    "mean_spe": float(spe.mean()) if spe.size else np.nan,
                    "se": float(g.std(ddof=1) / np.sqrt(g.size)) if g.size > 1 else np.nan,
                    "total_sspe": float(spe.sum()),
                    "p_value": p,
                }
            )
        return pd.DataFrame(rows).set_index("method")

    def delta_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {m: self.delta_sspe(m) for m in self.methods}, index=pd.Index(self.dates, name="date")
        )


def run_backtest(
    panel: PanelData,
    methods: Sequence[Method],
    start_time: int,
    config: BacktestConfig = BacktestConfig(),
    end_time: Optional[int] = None,
) -> BacktestReport:
    """Walk every method through time from ``start_time``.

    At step ``t`` (``start_time <= t < end``) each method is given rows
    ``[: t + 1]`` and predicts row ``t + 1``. A method that raises at a step
    is recorded as missing for that step with the reason.
    """
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")
    if config.benchmark not in names:
        raise ValueError(f"benchmark {config.benchmark!r} is not among the methods")
    reference = config.reference or config.benchmark
    if reference not in names:
        raise ValueError(f"reference {reference!r} is not among the methods")
    need = max(m.min_history(panel.p) for m in methods)
    if start_time + 1 < need:
        raise ValueError(f"start_time {start_time} leaves fewer than {need} rows of history")
    end = panel.T - 1 if end_time is None else min(end_time, panel.T - 1)
    if start_time >= end:
        raise ValueError("no steps to evaluate")
    steps = np.arange(start_time, end)
    times = steps + 1
    J, n = panel.J, steps.size
    preds = {m: np.full((J, n), np.nan) for m in names}
    alpha = {}
    beta = {}
    inclusion = {}
    inclusion_factors = {}
    failures = []
    timings = {m: 0.0 for m in names}
    for m in methods:
        m.reset()
    for i, t in enumerate(steps):
        hist = panel.head(t + 1)
        x_next = panel.X[:, t + 1]
        for m in methods:
            t0 = time.perf_counter()
            try:
                out = m.step(hist, x_next)
            except (DegenerateError, np.linalg.LinAlgError, ValueError) as exc:
                failures.append({"method": m.name, "time": int(t + 1), "reason": str(exc)})
                log.debug("%s failed predicting row %d: %s", m.name, t + 1, exc)
                continue
            finally:
                timings[m.name] += time.perf_counter() - t0
            preds[m.name][:, i] = out.pred
            if out.factors:
                inclusion_factors[m.name] = tuple(out.factors)
            if not config.record_trajectories:
                continue
            for store, val in ((alpha, out.alpha), (beta, out.beta), (inclusion, out.inclusion)):
                if val is None:
                    continue
                arr = store.setdefault(m.name, np.full((J, n) + np.shape(val)[1:], np.nan))
                arr[:, i] = val
    valid = np.all([np.all(np.isfinite(preds[m]), axis=0) for m in names], axis=0)
    return BacktestReport(
        methods=names,
        groups=panel.groups,
        dates=panel.dates[times],
        times=times,
        actual=panel.y[:, times],
        predictions=preds,
        failures=failures,
        valid=valid,
        benchmark=config.benchmark,
        reference=reference,
        alpha=alpha,
        beta=beta,
        inclusion=inclusion,
        covariates=panel.covariates,
        inclusion_factors=inclusion_factors,
        timings=timings,
    )


def paired_ttest(a, b) -> tuple[float, float]:
    """Two-sided Welch t-test of the means of two error samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least two observations per sample")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        if np.mean(a) == np.mean(b):
            return 0.0, 1.0
        raise ValueError("both samples have zero variance")
    res = stats.ttest_ind(a, b, equal_var=False)
    return float(res.statistic), float(res.pvalue)


def trajectory_extract(report: BacktestReport, quantity: str, method: str, group=None, component=None) -> pd.Series:
    """Raw per-step trajectory of a recorded quantity.

    ``quantity`` is ``alpha_star``, ``beta_component`` (``component`` names a
    covariate) or ``inclusion_prob`` (``component`` names a factor). ``group``
    selects a group by name or index; ``None`` averages over groups.
    """
    stores = {"alpha_star": report.alpha, "beta_component": report.beta, "inclusion_prob": report.inclusion}
    if quantity not in stores:
        raise ValueError(f"unknown quantity {quantity!r}")
    store = stores[quantity]
    if method not in store:
        raise KeyError(f"{quantity} was not recorded for method {method!r}")
    arr = store[method]
    if quantity == "beta_component":
        if component is None:
            raise ValueError("beta_component needs a covariate name")
        arr = arr[:, :, report.covariates.index(component)]
    elif quantity == "inclusion_prob":
        if component is None:
            raise ValueError("inclusion_prob needs a factor name")
        arr = arr[:, :, report.inclusion_factors[method].index(component)]
    if group is None:
        values = np.nanmean(arr, axis=0)
    else:
        j = report.groups.index(group) if isinstance(group, str) else int(group)
        values = arr[j]
    return pd.Series(values, index=pd.Index(report.dates, name="date"), name=f"{method}:{quantity}")
