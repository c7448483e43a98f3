"""Power-weighted inference for a univariate normal series.

Unknown mean and variance under the noninformative prior ``p(mu, s2) ~ 1/s2``
with every lagged likelihood term raised to its lag weight. The posterior
predictive for the next observation is a location-scale Student-t; the decay
parameter is chosen on a grid by the one-step-ahead predictive likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .weights import Exponential, WeightScheme, as_scheme, materialize, moment_paths

DEFAULT_GRID = np.linspace(0.5, 1.0, 100)


class DegenerateError(ValueError):
    """Raised when a posterior or predictive distribution is improper."""


@dataclass(frozen=True)
class NormalPosterior:
    """Terminal posterior of (mu_T, sigma2_T).

    ``sigma2_T ~ InvGamma(var_shape, var_rate)`` and
    ``mu_T | sigma2_T ~ N(mean_loc, sigma2_T / t_alpha)``. ``mean_scale2`` is
    the squared scale of the marginal Student-t for ``mu_T``,
    ``S / t_alpha``.
    """

    mean_loc: float
    mean_scale2: float
    var_shape: float
    var_rate: float
    t_alpha: float

    def mean_conditional_var(self, sigma2: float) -> float:
        return sigma2 / self.t_alpha


@dataclass(frozen=True)
class StudentTPredictive:
    """Location-scale Student-t; ``scale2`` is the squared scale."""

    df: float
    loc: float
    scale2: float

    def logpdf(self, y):
        return student_t_logpdf(y, self.df, self.loc, self.scale2)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    @property
    def variance(self) -> float:
        if self.df <= 2:
            return np.inf
        return self.scale2 * self.df / (self.df - 2)


@dataclass(frozen=True)
class AlphaEstimate:
    alpha_star: float
    log_pred_lik: float
    grid: np.ndarray
    per_alpha_loglik: np.ndarray
    n_terms: int = 0
    n_skipped: int = 0
    converged: bool = True
    extra: dict = field(default_factory=dict)


def student_t_logpdf(y, df, loc, scale2):
    """Log density of a location-scale Student-t with squared scale ``scale2``."""
    y = np.asarray(y, dtype=float)
    df = np.asarray(df, dtype=float)
    z2 = (y - loc) ** 2 / scale2
    return (
        gammaln((df + 1.0) / 2.0)
        - gammaln(df / 2.0)
        - 0.5 * np.log(df * np.pi * scale2)
        - (df + 1.0) / 2.0 * np.log1p(z2 / df)
    )


def _weighted_summary(series, weights):
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("series must be one-dimensional with at least two points")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    scheme = as_scheme(weights)
    if isinstance(scheme, Exponential) and scheme.alpha <= 0:
        raise ValueError("alpha must lie in (0, 1]")
    w = materialize(scheme, y.size).w
    y_lag = y[::-1]
    t_alpha = w.sum()
    mean = np.dot(w, y_lag) / t_alpha
    m2 = np.dot(w, (y_lag - mean) ** 2)
    return t_alpha, mean, m2


def terminal_posterior(series, alpha: float | WeightScheme) -> NormalPosterior:
    """Posterior for the terminal mean and variance given the whole series."""
    t_alpha, mean, m2 = _weighted_summary(series, alpha)
    if t_alpha <= 1.0:
        raise DegenerateError(f"scaled count {t_alpha:.6g} <= 1 leaves no degrees of freedom")
    if m2 <= 0.0:
        raise DegenerateError("weighted variance is zero (constant effective history)")
    # (T_a/2)(yhat2 - yhat^2) equals half the weighted centred sum of squares
    rate = 0.5 * m2
    s = m2 / (t_alpha - 1.0)
    return NormalPosterior(
        mean_loc=mean,
        mean_scale2=s / t_alpha,
        var_shape=(t_alpha - 1.0) / 2.0,
        var_rate=rate,
        t_alpha=t_alpha,
    )


def predictive(series, alpha: float | WeightScheme) -> StudentTPredictive:
    """One-step-ahead posterior predictive after observing ``series``."""
    t_alpha, mean, m2 = _weighted_summary(series, alpha)
    df = t_alpha - 1.0
    if df <= 0:
        raise DegenerateError(f"degrees of freedom {df:.6g} <= 0")
    s = m2 / df
    scale2 = (t_alpha + 1.0) / t_alpha * s
    if not scale2 > 0:
        raise DegenerateError("predictive scale is zero (constant effective history)")
    return StudentTPredictive(df=df, loc=mean, scale2=scale2)


def _usable_prefixes(y: np.ndarray) -> np.ndarray:
    """Mask over prefix end index t: prefix y[:t+1] has >= 2 points and is non-constant.

    Depends on the data only, so the same terms are compared across alpha.
    """
    n = y.size
    mask = np.zeros(n, dtype=bool)
    if n < 2:
        return mask
    lo = np.minimum.accumulate(y)
    hi = np.maximum.accumulate(y)
    mask[1:] = hi[1:] > lo[1:]
    return mask


def one_step_terms(series, alphas):
    """Log predictive density of each observation given its past, per decay.

    Returns ``(terms, usable)`` where ``terms`` has shape ``(len(alphas), T)``;
    ``terms[:, t]`` is ``log p(y_t | y_{:t})`` and is NaN where the prefix
    ``y[:t]`` is unusable (fewer than two points or zero spread).
    """
    y = np.asarray(series, dtype=float)
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if np.any(a <= 0) or np.any(a > 1):
        raise ValueError("decay values must lie in (0, 1]")
    paths = moment_paths(y, a)
    usable_prefix = _usable_prefixes(y)
    n = y.size
    terms = np.full((a.size, n), np.nan)
    # prefix ending at index t predicts y[t + 1]
    idx = np.nonzero(usable_prefix[:-1])[0]
    if idx.size:
        t_a = paths.t_alpha[:, idx]
        df = t_a - 1.0
        s = paths.m2[:, idx] / df
        scale2 = (t_a + 1.0) / t_a * s
        terms[:, idx + 1] = student_t_logpdf(y[idx + 1], df, paths.mean[:, idx], scale2)
    usable = np.zeros(n, dtype=bool)
    usable[idx + 1] = True
    return terms, usable


def log_pred_likelihood(series, alpha: float, log_prior_alpha: float = 0.0) -> float:
    """``log p0(alpha) + sum_t log p(y_t | y_{1:t-1}, alpha)`` over usable terms."""
    y = np.asarray(series, dtype=float)
    if y.size < 3:
        raise ValueError("need at least three observations")
    terms, usable = one_step_terms(y, [alpha])
    if not usable.any():
        raise DegenerateError("every prefix has zero spread; no usable predictive terms")
    return float(log_prior_alpha + terms[0, usable].sum())


def estimate_alpha(
    series,
    grid=None,
    log_prior: Optional[Callable[[float], float]] = None,
) -> AlphaEstimate:
    """Grid maximiser of the one-step-ahead predictive likelihood.

    Ties go to the largest alpha.
    """
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty alpha grid")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("alpha grid must be strictly increasing")
    y = np.asarray(series, dtype=float)
    if y.size < 3:
        raise ValueError("need at least three observations")
    terms, usable = one_step_terms(y, grid)
    if not usable.any():
        raise DegenerateError("all grid points degenerate: no usable predictive terms")
    ll = terms[:, usable].sum(axis=1)
    if log_prior is not None:
        ll = ll + np.array([log_prior(a) for a in grid], dtype=float)
    best = _argmax_largest(ll)
    n_possible = max(y.size - 2, 0)
    return AlphaEstimate(
        alpha_star=float(grid[best]),
        log_pred_lik=float(ll[best]),
        grid=grid,
        per_alpha_loglik=ll,
        n_terms=int(usable.sum()),
        n_skipped=int(n_possible - usable.sum()),
    )


def _argmax_largest(values) -> int:
    v = np.asarray(values, dtype=float)
    if not np.any(np.isfinite(v)):
        raise DegenerateError("objective is not finite at any grid point")
    v = np.where(np.isfinite(v), v, -np.inf)
    return int(v.size - 1 - np.argmax(v[::-1]))


def forecast(series, grid=None) -> tuple[StudentTPredictive, AlphaEstimate]:
    """Estimate alpha on the series, then return the predictive at alpha*."""
    est = estimate_alpha(series, grid)
    return predictive(series, est.alpha_star), est
