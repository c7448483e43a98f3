"""Reproducible simulation generators.

Every replication draws from its own stream spawned from the configured
seed, so replication ``r`` can be regenerated alone and the output does not
depend on how replications are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .hier import PanelData


@dataclass(frozen=True)
class StationaryMeanConfig:
    T: int = 500
    beta: float = 2.0
    sigma2: float = 1.0
    replications: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.T < 1 or self.replications < 1:
            raise ValueError("T and replications must be positive")


@dataclass(frozen=True)
class HierCapmConfig:
    """Market-model panel with random-walk, group-mean-reverting betas."""

    J: int = 10
    T: int = 100
    mu_m: float = 0.047
    sigma_m: float = 0.045
    sigma: float = 0.04
    tau: float = 0.08
    a: float = 3.0
    b: float = 97.0
    beta_init_mean: float = 1.0
    intercept: bool = False
    replications: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("beta-distribution parameters must be positive")
        if self.sigma_m < 0 or self.sigma < 0 or self.tau < 0:
            raise ValueError("scales must be nonnegative")
        if self.J < 2 or self.T < 1:
            raise ValueError("need J >= 2 groups and T >= 1")


SETTING1 = HierCapmConfig(J=100, T=10)
SETTING2 = HierCapmConfig(J=10, T=100)
PRESETS = {"setting1": SETTING1, "setting2": SETTING2}


def replication_rngs(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def gen_stationary(cfg: StationaryMeanConfig, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``(replications, T)`` i.i.d. normal series around ``cfg.beta``.

    Without ``rng`` each row comes from its own stream spawned from
    ``cfg.seed``; with ``rng`` all rows are drawn from it in order.
    """
    sd = np.sqrt(cfg.sigma2)
    if rng is not None:
        return cfg.beta + sd * rng.standard_normal((cfg.replications, cfg.T))
    rows = [cfg.beta + sd * r.standard_normal(cfg.T) for r in replication_rngs(cfg.seed, cfg.replications)]
    return np.stack(rows)


@dataclass(frozen=True)
class CapmPanel:
    panel: PanelData
    beta: np.ndarray
    market: np.ndarray
    phi: np.ndarray


def gen_hier_capm(cfg: HierCapmConfig, rng: np.random.Generator) -> CapmPanel:
    """One panel from the market model with evolving betas.

    ``beta[:, t]`` is the coefficient in force at ``t``; ``beta[:, 0]`` is
    the initial draw ``N(beta_init_mean, tau^2)``. Each step pulls every beta
    toward the previous cross-group mean by ``phi_j`` and adds
    ``N(0, tau^2)`` noise. One market series is shared by all groups.
    """
    J, T = cfg.J, cfg.T
    phi = rng.beta(cfg.a, cfg.b, size=J)
    market = cfg.mu_m + cfg.sigma_m * rng.standard_normal(T)
    beta = np.empty((J, T))
    beta[:, 0] = cfg.beta_init_mean + cfg.tau * rng.standard_normal(J)
    for t in range(1, T):
        prev = beta[:, t - 1]
        beta[:, t] = prev + phi * (prev.mean() - prev) + cfg.tau * rng.standard_normal(J)
    y = beta * market[None, :] + cfg.sigma * rng.standard_normal((J, T))
    if cfg.intercept:
        X = np.column_stack([np.ones(T), market])
        names = ("const", "MKT")
    else:
        X = market[:, None]
        names = ("MKT",)
    panel = PanelData.from_common(X, y, covariates=names)
    return CapmPanel(panel=panel, beta=beta, market=market, phi=phi)


def gen_hier_capm_replications(cfg: HierCapmConfig):
    """Iterate over ``cfg.replications`` independent panels."""
    for rng in replication_rngs(cfg.seed, cfg.replications):
        yield gen_hier_capm(cfg, rng)


def gen_static_hierarchical(
    J: int,
    T: int,
    beta0,
    tau2,
    sigma2: float,
    rng: np.random.Generator,
    x_scale: float = 1.0,
) -> tuple[PanelData, np.ndarray]:
    """Panel from the stationary hierarchical regression model.

    ``beta_j ~ N(beta0, diag(tau2))``, covariates i.i.d. normal with the
    first column an intercept. Returns the panel and the true ``beta_j``.
    """
    beta0 = np.asarray(beta0, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    p = beta0.size
    betas = beta0 + np.sqrt(tau2) * rng.standard_normal((J, p))
    X = x_scale * rng.standard_normal((J, T, p))
    X[:, :, 0] = 1.0
    y = np.einsum("jtp,jp->jt", X, betas) + np.sqrt(sigma2) * rng.standard_normal((J, T))
    return PanelData(X, y, np.arange(T)), betas


def dump_panel_csv(panel: PanelData, path, factor_names=None, header_lines=()) -> None:
    """Write a panel with common covariates in the ingestible CSV layout.

    Columns are ``date``, the covariates, then one response column per
    group. Dates that are not YYYYMM integers are replaced by a monthly
    sequence starting at 190001.
    """
    X0 = panel.X[0]
    if not np.allclose(panel.X, X0[None]):
        raise ValueError("only panels with covariates shared across groups can be written")
    dates = np.asarray(panel.dates)
    if not (np.issubdtype(dates.dtype, np.integer) and np.all(dates >= 100001)):
        k = np.arange(panel.T)
        dates = (1900 + k // 12) * 100 + k % 12 + 1
    names = list(factor_names or panel.covariates)
    frame = pd.DataFrame(X0, columns=names)
    frame.insert(0, "date", dates)
    for j, g in enumerate(panel.groups):
        frame[g] = panel.y[j]
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        frame.to_csv(fh, index=False, float_format="%.17g")
