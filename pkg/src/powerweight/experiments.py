"""Terminal-prediction simulation studies.

Each replication trains every method on all but the last time point and
predicts the last one. Per replication the error is summarised as a root
mean square over groups; methods are compared across replications with a
Welch test.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import pandas as pd

from . import baselines, normal
from .backtest import paired_ttest
from .hier import (
    GibbsConfig,
    PanelData,
    estimate_alpha_group,
    estimate_alphas_plugin,
    fit_predict_terminal,
    plugin_terminal,
)
from .synthetic import HierCapmConfig, StationaryMeanConfig, gen_hier_capm, gen_stationary, replication_rngs

STATIONARY_METHODS = ("Stationary", "PWD", "EWMA", "State-Space")
CAPM_METHODS = ("Hier-PWD", "Sep-PWD", "State-Space-LR", "Stationary", "Stationary-Hier")


@dataclass
class SimulationResult:
    """Per-replication errors and their summary.

    ``sq_error[m]`` holds, per replication, the mean over groups of the
    squared terminal error; ``rmse[m]`` is its square root.
    """

    methods: tuple
    sq_error: dict
    rmse: dict
    reference: str
    target: str
    seconds: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def summary(self, scale: float = 1.0) -> pd.DataFrame:
        """Mean and standard error of RMSE and MSE, Welch p-value vs the reference.

        ``scale`` multiplies the MSE columns (1e4 puts them on the scale of
        the published regression tables).
        """
        ref = self.rmse[self.reference]
        rows = []
        for m in self.methods:
            r = self.rmse[m]
            e = self.sq_error[m]
            n = r.size
            rows.append(
                {
                    "method": m,
                    "rmse": float(np.sqrt(e.mean())),
                    "mean_rmse": float(r.mean()),
                    "se_rmse": float(r.std(ddof=1) / np.sqrt(n)) if n > 1 else np.nan,
                    "mean_mse": float(e.mean() * scale),
                    "se_mse": float(e.std(ddof=1) / np.sqrt(n) * scale) if n > 1 else np.nan,
                    "p_value": np.nan if m == self.reference or n < 2 else paired_ttest(ref, r)[1],
                    "ms_per_rep": 1e3 * self.seconds.get(m, np.nan) / max(n, 1),
                }
            )
        return pd.DataFrame(rows).set_index("method")

    def welch(self, a: str, b: str) -> tuple[float, float]:
        return paired_ttest(self.rmse[a], self.rmse[b])


def _stationary_forecasts():
    return {
        "Stationary": lambda y: float(np.mean(y)),
        "EWMA": lambda y: baselines.ewma_fit(y).forecast,
        "State-Space": lambda y: baselines.local_level_filter(y, "mle").m,
    }


def run_stationary_study(cfg: StationaryMeanConfig = StationaryMeanConfig(), target: str = "signal",
                         methods=STATIONARY_METHODS) -> SimulationResult:
    """Normal mean study: train on ``T - 1`` points, predict the last.

    ``target="signal"`` scores the forecast against the true mean;
    ``"observed"`` against the held-out observation.
    """
    if target not in ("signal", "observed"):
        raise ValueError("target must be 'signal' or 'observed'")
    data = gen_stationary(cfg)
    fns = _stationary_forecasts()
    err = {m: np.empty(cfg.replications) for m in methods}
    secs = {m: 0.0 for m in methods}
    alphas = np.empty(cfg.replications)
    for r, series in enumerate(data):
        train = series[:-1]
        truth = cfg.beta if target == "signal" else series[-1]
        alphas[r] = np.nan
        for m in methods:
            t0 = time.perf_counter()
            if m == "PWD":
                pred, est = normal.forecast(train)
                f, alphas[r] = pred.loc, est.alpha_star
            else:
                f = fns[m](train)
            secs[m] += time.perf_counter() - t0
            err[m][r] = (f - truth) ** 2
    return SimulationResult(
        methods=tuple(methods),
        sq_error=err,
        rmse={m: np.sqrt(e) for m, e in err.items()},
        reference="Stationary" if "Stationary" in methods else methods[0],
        target=target,
        seconds=secs,
        extra={"alpha_star": alphas},
    )


def capm_predictors(gibbs: GibbsConfig = GibbsConfig(), grid=None) -> dict[str, Callable]:
    """Terminal predictors ``f(train_panel, x_next) -> (J,)`` for the regression study."""

    def hier(train: PanelData, xn):
        res = estimate_alphas_plugin(train, grid, gibbs)
        return fit_predict_terminal(train, res.alphas, gibbs, xn).pred_mean

    def stat_hier(train, xn):
        return fit_predict_terminal(train, np.ones(train.J), gibbs, xn).pred_mean

    def sep(train, xn):
        out = np.empty(train.J)
        for j in range(train.J):
            a = estimate_alpha_group(train.X[j], train.y[j], grid).alpha_star
            out[j] = xn[j] @ plugin_terminal(train.X[j], train.y[j], a)[0]
        return out

    def sslr(train, xn):
        return np.array([baselines.state_space_lr_fit(train.X[j], train.y[j]).predict(xn[j]) for j in range(train.J)])

    def stat(train, xn):
        return np.array([baselines.stationary_ols(train.X[j], train.y[j]).predict(xn[j]) for j in range(train.J)])

    return {
        "Hier-PWD": hier,
        "Sep-PWD": sep,
        "State-Space-LR": sslr,
        "Stationary": stat,
        "Stationary-Hier": stat_hier,
    }


def run_capm_study(cfg: HierCapmConfig, target: str = "observed", methods=CAPM_METHODS,
                   gibbs: Optional[GibbsConfig] = None, grid=None) -> SimulationResult:
    """Market-model panel study: train on ``T - 1`` points, predict the last for every group.

    ``target="observed"`` scores against the held-out responses;
    ``"signal"`` against their noiseless means ``beta_jT * m_T``. Errors
    against the other target are kept in ``extra``. The Gibbs
    seed of replication ``r`` is ``gibbs.seed + r``.
    """
    if target not in ("signal", "observed"):
        raise ValueError("target must be 'signal' or 'observed'")
    gibbs = gibbs or GibbsConfig(seed=cfg.seed)
    err = {t: {m: np.empty(cfg.replications) for m in methods} for t in ("observed", "signal")}
    secs = {m: 0.0 for m in methods}
    for r, rng in enumerate(replication_rngs(cfg.seed, cfg.replications)):
        sim = gen_hier_capm(cfg, rng)
        panel = sim.panel
        train = panel.head(panel.T - 1)
        xn = panel.X[:, -1]
        truth = {"observed": panel.y[:, -1], "signal": sim.beta[:, -1] * sim.market[-1]}
        fns = capm_predictors(replace(gibbs, seed=gibbs.seed + r), grid)
        for m in methods:
            t0 = time.perf_counter()
            pred = fns[m](train, xn)
            secs[m] += time.perf_counter() - t0
            for t, y in truth.items():
                err[t][m][r] = np.mean((pred - y) ** 2)
    other = "signal" if target == "observed" else "observed"
    return SimulationResult(
        methods=tuple(methods),
        sq_error=err[target],
        rmse={m: np.sqrt(e) for m, e in err[target].items()},
        reference="Hier-PWD" if "Hier-PWD" in methods else methods[0],
        target=target,
        seconds=secs,
        extra={f"sq_error_{other}": err[other]},
    )
