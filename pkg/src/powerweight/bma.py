"""Model averaging over factor subsets by one-step-ahead predictive likelihood.

Each model regresses the response on an intercept plus a subset of factor
columns, fitted separately per group with its own decay. Model weights are
proportional to the cumulative predictive likelihood at each model's best
decay, under a uniform prior over models.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .hier import DEFAULT_GRID, PanelData, plugin_predictive, plugin_terms, usable_grid
from .normal import DegenerateError, student_t_logpdf

log = logging.getLogger(__name__)

MAX_FACTORS = 16


@dataclass(frozen=True)
class ModelSpec:
    """Intercept plus the factors whose bits are set in ``mask``."""

    mask: int
    factors: tuple

    @property
    def name(self) -> str:
        return "+".join(("const",) + self.factors)

    def __contains__(self, factor) -> bool:
        return factor in self.factors


def enumerate_models(factor_names: Sequence[str]) -> list[ModelSpec]:
    """All ``2**F`` subsets ordered by bitmask (bit k is factor k)."""
    names = tuple(factor_names)
    if len(names) > MAX_FACTORS:
        raise ValueError(f"at most {MAX_FACTORS} factors are supported")
    if len(set(names)) != len(names):
        raise ValueError("factor names must be unique")
    return [
        ModelSpec(mask=m, factors=tuple(n for k, n in enumerate(names) if m >> k & 1))
        for m in range(1 << len(names))
    ]


def available_models(models: Sequence[ModelSpec], columns: Sequence[str]) -> list[ModelSpec]:
    """Drop models that reference factors missing from ``columns``."""
    cols = set(columns)
    keep = [m for m in models if set(m.factors) <= cols]
    dropped = len(models) - len(keep)
    if dropped:
        log.warning("dropped %d models referencing unavailable factors", dropped)
    return keep


def design(panel: PanelData, model: ModelSpec) -> np.ndarray:
    """(J, T, 1 + |factors|) design with a leading intercept column."""
    idx = [panel.covariates.index(f) for f in model.factors]
    ones = np.ones(panel.X.shape[:2] + (1,))
    return np.concatenate([ones, panel.X[:, :, idx]], axis=2)


@dataclass
class ModelWeights:
    """Per-group model probabilities; arrays are indexed (group, model)."""

    models: list
    groups: tuple
    loglik: np.ndarray
    alpha_star: np.ndarray
    probs: np.ndarray
    n_terms: int = 0

    def model_names(self) -> list[str]:
        return [m.name for m in self.models]


def normalize_log_weights(loglik, log_prior=None, axis=-1) -> np.ndarray:
    """Softmax with max-subtraction; a common shift leaves the result unchanged."""
    ll = np.asarray(loglik, dtype=float)
    if log_prior is not None:
        ll = ll + log_prior
    return np.exp(ll - logsumexp(ll, axis=axis, keepdims=True))


def _group_terms(designs, y, grid, n_min):
    """One group's plug-in terms ``(K, G, T)`` and the usable mask shared by all models."""
    terms = np.empty((len(designs), grid.size, y.size))
    usable = np.ones(y.size, dtype=bool)
    for k, Xk in enumerate(designs):
        pt = plugin_terms(Xk, y, grid, None, n_min)
        terms[k] = pt.terms
        usable &= pt.usable
    return terms, usable


def _prepare(panel, models, grid, n_min):
    if not models:
        raise ValueError("no models to weigh")
    p_max = 1 + max(len(m.factors) for m in models)
    n_min = p_max + 2 if n_min is None else int(n_min)
    grid = usable_grid(DEFAULT_GRID if grid is None else grid, p_max, n_min)
    if grid.size == 0:
        raise DegenerateError("no grid point keeps t_alpha above p + 1 for the largest model")
    return grid, n_min


def model_weights(panel: PanelData, models: Sequence[ModelSpec], grid=None, n_min: Optional[int] = None) -> ModelWeights:
    """Terminal model weights from the full history of every group.

    Every model is scored on the same time points: a term enters only when
    it is well defined for all models and all decays.
    """
    models = list(models)
    grid, n_min = _prepare(panel, models, grid, n_min)
    designs = [design(panel, m) for m in models]
    J, K = panel.J, len(models)
    ll = np.empty((J, K))
    astar = np.empty((J, K))
    n_terms = panel.T
    for j in range(J):
        terms, usable = _group_terms([d[j] for d in designs], panel.y[j], grid, n_min)
        if not usable.any():
            raise DegenerateError(f"group {panel.groups[j]}: no time point usable by every model")
        n_terms = min(n_terms, int(usable.sum()))
        tot = terms[:, :, usable].sum(axis=2)
        # ties go to the largest decay
        best = tot.shape[1] - 1 - np.argmax(tot[:, ::-1], axis=1)
        ll[j] = tot[np.arange(K), best]
        astar[j] = grid[best]
    return ModelWeights(
        models=models,
        groups=panel.groups,
        loglik=ll,
        alpha_star=astar,
        probs=normalize_log_weights(ll),
        n_terms=n_terms,
    )


@dataclass
class WeightPaths:
    """Rolling model weights: arrays indexed (group, model, time).

    Column ``t`` uses observations up to and including ``t``.
    """

    models: list
    groups: tuple
    dates: np.ndarray
    probs: np.ndarray
    alpha_star: np.ndarray

    def inclusion(self, factor) -> np.ndarray:
        """(group, time) inclusion probabilities of ``factor``."""
        mask = _factor_mask(self.models, factor)
        return self.probs[:, mask, :].sum(axis=1)


def model_weight_paths(
    panel: PanelData,
    models: Sequence[ModelSpec],
    grid=None,
    refresh: int = 12,
    n_min: Optional[int] = None,
) -> WeightPaths:
    """Model weights at every time point from data through that point.

    Cumulative predictive log likelihoods are running sums of one-step
    terms, so nothing after ``t`` enters column ``t``. Each model's decay is
    re-maximised every ``refresh`` steps and held in between. Columns
    before the first usable term hold the uniform prior.
    """
    if refresh < 1:
        raise ValueError("refresh must be a positive integer")
    models = list(models)
    grid, n_min = _prepare(panel, models, grid, n_min)
    designs = [design(panel, m) for m in models]
    J, K, T = panel.J, len(models), panel.T
    probs = np.full((J, K, T), 1.0 / K)
    astar = np.full((J, K, T), np.nan)
    for j in range(J):
        terms, usable = _group_terms([d[j] for d in designs], panel.y[j], grid, n_min)
        cum = np.cumsum(np.where(usable, terms, 0.0), axis=2)
        seen = np.cumsum(usable)
        best = None
        for t in range(T):
            if seen[t] == 0:
                continue
            if best is None or t % refresh == 0:
                c = cum[:, :, t]
                best = c.shape[1] - 1 - np.argmax(c[:, ::-1], axis=1)
            probs[j, :, t] = normalize_log_weights(cum[np.arange(K), best, t])
            astar[j, :, t] = grid[best]
    return WeightPaths(models=models, groups=panel.groups, dates=panel.dates, probs=probs, alpha_star=astar)


def _factor_mask(models, factor) -> np.ndarray:
    mask = np.array([factor in m for m in models])
    if not mask.any():
        raise KeyError(f"unknown factor {factor!r}")
    return mask


def inclusion_probability(weights: ModelWeights, factor) -> np.ndarray:
    """Per-group total probability of the models that contain ``factor``."""
    mask = _factor_mask(weights.models, factor)
    return weights.probs[:, mask].sum(axis=1)


@dataclass
class MixturePredictive:
    """Per-group mixture of Student-t predictives; arrays indexed (group, model)."""

    probs: np.ndarray
    df: np.ndarray
    loc: np.ndarray
    scale2: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return (self.probs * self.loc).sum(axis=1)

    def logpdf(self, y, group: int):
        y = np.asarray(y, dtype=float)[..., None]
        comp = student_t_logpdf(y, self.df[group], self.loc[group], self.scale2[group])
        with np.errstate(divide="ignore"):
            return logsumexp(comp + np.log(self.probs[group]), axis=-1)

    def pdf(self, y, group: int):
        return np.exp(self.logpdf(y, group))


def bma_predict(panel: PanelData, weights: ModelWeights, x_next) -> MixturePredictive:
    """Model-averaged predictive for the next response of every group.

    ``x_next`` is (J, F) in the panel's covariate order (no intercept).
    """
    xn = np.broadcast_to(np.asarray(x_next, dtype=float), (panel.J, panel.p))
    J, K = panel.J, len(weights.models)
    df = np.ones((J, K))
    loc = np.zeros((J, K))
    scale2 = np.ones((J, K))
    for k, model in enumerate(weights.models):
        Xk = design(panel, model)
        idx = [panel.covariates.index(f) for f in model.factors]
        for j in range(J):
            x = np.concatenate([[1.0], xn[j, idx]])
            pred = plugin_predictive(Xk[j], panel.y[j], x, float(weights.alpha_star[j, k]))
            df[j, k], loc[j, k], scale2[j, k] = pred.df, pred.loc, pred.scale2
    return MixturePredictive(probs=weights.probs, df=df, loc=loc, scale2=scale2)
