"""Comparator methods: stationary and rolling OLS, EWMA via ARIMA(0,1,1),
local-level state space models and a random-walk-coefficient regression."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .weights import Exponential, materialize

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class OLSFit:
    coef: np.ndarray
    sigma2: float
    cov: np.ndarray
    resid: np.ndarray

    def predict(self, x):
        return np.asarray(x, dtype=float) @ self.coef


def stationary_ols(X, y) -> OLSFit:
    """Ordinary least squares with the unbiased residual variance."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations ({n}) than covariates ({p})")
    if np.linalg.matrix_rank(X) < p:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    sigma2 = float(resid @ resid) / (n - p)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return OLSFit(coef=coef, sigma2=sigma2, cov=cov, resid=resid)


def rolling_window_fit(X, y, window: int) -> OLSFit:
    """OLS on the trailing ``window`` rows."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if window > y.size:
        raise ValueError(f"window {window} exceeds history length {y.size}")
    if X.ndim == 1:
        X = X[:, None]
    if window <= X.shape[1]:
        raise ValueError("window must exceed the number of covariates")
    return stationary_ols(X[-window:], y[-window:])


# ---------------------------------------------------------------------------
# EWMA / ARIMA(0,1,1)


@dataclass(frozen=True)
class Arima011Fit:
    theta: float
    sigma2: float
    loglik: float
    alpha: float
    forecast: float
    on_boundary: bool


THETA_BOUND = 0.9999


def ma1_loglik(x, thetas) -> tuple[np.ndarray, np.ndarray]:
    """Exact Gaussian log likelihood of an MA(1) series, sigma2 concentrated out.

    Innovations algorithm, vectorised over ``thetas``. Returns
    ``(loglik, sigma2_hat)``.
    """
    x = np.asarray(x, dtype=float)
    th = np.atleast_1d(np.asarray(thetas, dtype=float))
    n = x.size
    g0 = 1.0 + th ** 2
    v = g0.copy()
    xhat = np.zeros_like(th)
    ssq = np.zeros_like(th)
    logv = np.zeros_like(th)
    for i in range(n):
        e = x[i] - xhat
        ssq += e * e / v
        logv += np.log(v)
        coef = th / v
        xhat = coef * e
        v = g0 - coef * th
    sigma2 = ssq / n
    ll = -0.5 * n * (np.log(2 * np.pi * sigma2) + 1.0) - 0.5 * logv
    return ll, sigma2


def ewma_weights_forecast(series, alpha: float) -> float:
    """Exponentially weighted average of the series, lag weights normalised to one."""
    y = np.asarray(series, dtype=float)
    w = materialize(Exponential(alpha), y.size).w
    return float(np.dot(w, y[::-1]) / w.sum())


def ewma_fit(series, grid_size: int = 201) -> Arima011Fit:
    """ARIMA(0,1,1) by exact maximum likelihood on the differenced series.

    The forecast is the exponentially weighted average implied by the MA
    coefficient, with decay ``alpha = -theta`` (clipped at 0).
    """
    y = np.asarray(series, dtype=float)
    if y.size < 10:
        raise ValueError("need at least 10 observations")
    x = np.diff(y)
    if np.all(x == 0):
        return Arima011Fit(theta=-THETA_BOUND, sigma2=0.0, loglik=np.inf, alpha=THETA_BOUND,
                           forecast=float(y[-1]), on_boundary=True)
    grid = np.linspace(-THETA_BOUND, THETA_BOUND, grid_size)
    ll, _ = ma1_loglik(x, grid)
    k = int(np.nanargmax(ll))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda t: -ma1_loglik(x, [t])[0][0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-7})
    theta = float(res.x) if -res.fun >= ll[k] else float(grid[k])
    ll_best, s2 = ma1_loglik(x, [theta])
    on_boundary = abs(theta) >= THETA_BOUND - 1e-4
    if on_boundary:
        log.debug("MA(1) estimate on the invertibility boundary: %.5f", theta)
    alpha = min(max(-theta, 0.0), 1.0)
    return Arima011Fit(
        theta=theta,
        sigma2=float(s2[0]),
        loglik=float(ll_best[0]),
        alpha=alpha,
        forecast=ewma_weights_forecast(y, alpha),
        on_boundary=on_boundary,
    )


# ---------------------------------------------------------------------------
# local level model


@dataclass(frozen=True)
class LocalLevelState:
    m: float
    C: float
    V: float
    W_or_delta: float
    mode: str
    loglik: float = np.nan
    on_boundary: bool = False

    @property
    def forecast(self) -> float:
        return self.m


def local_level_profile(y, qs):
    """Kalman filter of the local level model at signal-to-noise ratios ``qs``.

    Runs in units of the observation variance, conditioning on the first
    observation. Returns ``(loglik, V_hat, m_T, C_T / V)`` arrays.
    """
    y = np.asarray(y, dtype=float)
    q = np.atleast_1d(np.asarray(qs, dtype=float))
    m = np.full(q.shape, y[0])
    C = np.ones_like(q)
    ssq = np.zeros_like(q)
    logf = np.zeros_like(q)
    for t in range(1, y.size):
        R = C + q
        F = R + 1.0
        e = y[t] - m
        ssq += e * e / F
        logf += np.log(F)
        K = R / F
        m = m + K * e
        C = R / F
    n = y.size - 1
    V = np.maximum(ssq / n, VAR_FLOOR)
    ll = -0.5 * n * (np.log(2 * np.pi * V) + 1.0) - 0.5 * logf
    return ll, V, m, C


def local_level_filter(series, mode: str = "mle", delta: Optional[float] = None,
                       V: Optional[float] = None) -> LocalLevelState:
    """Local level model, either MLE of (V, W) or discounted with factor ``delta``.

    Discounted mode is closed form: ``m_T = sum delta^i y_{T-i} / sum delta^i``
    and ``C_T = V / sum delta^i``; ``V`` defaults to the matching weighted
    sample variance.
    """
    y = np.asarray(series, dtype=float)
    if y.size < 10:
        raise ValueError("need at least 10 observations")
    if mode == "discount":
        if delta is None or not 0.0 < delta <= 1.0:
            raise ValueError("discount mode needs delta in (0, 1]")
        w = materialize(Exponential(delta), y.size).w
        t_d = w.sum()
        yl = y[::-1]
        m = float(np.dot(w, yl) / t_d)
        if V is None:
            V = float(np.dot(w, (yl - m) ** 2) / max(t_d - 1.0, VAR_FLOOR))
        V = max(V, VAR_FLOOR)
        return LocalLevelState(m=m, C=V / t_d, V=V, W_or_delta=float(delta), mode="discount")
    if mode != "mle":
        raise ValueError(f"unknown mode {mode!r}")
    qs = np.concatenate([[0.0], np.logspace(-6, 2, 33)])
    ll, Vs, ms, Cs = local_level_profile(y, qs)
    k = int(np.nanargmax(ll))
    q_best = qs[k]
    if 0 < k < qs.size - 1:
        lo, hi = np.log(qs[k - 1]) if k > 1 else np.log(qs[1]) - 2.0, np.log(qs[k + 1])
        res = minimize_scalar(lambda lq: -local_level_profile(y, [np.exp(lq)])[0][0],
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
        if -res.fun > ll[k]:
            q_best = float(np.exp(res.x))
    ll_b, V_b, m_b, C_b = local_level_profile(y, [q_best])
    on_boundary = q_best == 0.0 or q_best >= qs[-1]
    return LocalLevelState(
        m=float(m_b[0]),
        C=float(C_b[0] * V_b[0]),
        V=float(V_b[0]),
        W_or_delta=float(max(q_best * V_b[0], 0.0)),
        mode="mle",
        loglik=float(ll_b[0]),
        on_boundary=bool(on_boundary),
    )


# ---------------------------------------------------------------------------
# regression with random-walk coefficients


@dataclass(frozen=True)
class StateSpaceLRFit:
    coef: np.ndarray
    cov: np.ndarray
    V: float
    q: float
    loglik: float
    converged: bool

    def predict(self, x):
        return np.asarray(x, dtype=float) @ self.coef


DIFFUSE_KAPPA = 1e6


def dlm_profile(X, y, qs):
    """Kalman filter for ``y_t = x_t b_t + v_t``, ``b_t = b_{t-1} + w_t``.

    ``Var(w_t) = q V D`` with ``D = diag(1 / mean(x_k^2))``; filtering runs in
    units of ``V`` from a diffuse start ``b_0 ~ N(0, kappa V D)``, and the
    first ``p`` prediction errors are left out of the likelihood. Vectorised
    over ``qs``. Returns ``(loglik, V_hat, b_T, P_T / V)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    q = np.atleast_1d(np.asarray(qs, dtype=float))
    g = q.size
    d = 1.0 / np.maximum((X ** 2).mean(axis=0), VAR_FLOOR)
    Wd = q[:, None] * d[None, :]
    b = np.zeros((g, p))
    P = np.broadcast_to(DIFFUSE_KAPPA * np.diag(d), (g, p, p)).copy()
    ssq = np.zeros(g)
    logf = np.zeros(g)
    idx = np.arange(p)
    for t in range(n):
        if t > 0:
            P[:, idx, idx] += Wd
        x = X[t]
        Px = P @ x
        F = Px @ x + 1.0
        e = y[t] - b @ x
        if t >= p:
            ssq += e * e / F
            logf += np.log(F)
        K = Px / F[:, None]
        b = b + K * e[:, None]
        P = P - K[:, :, None] * Px[:, None, :]
        P = 0.5 * (P + P.transpose(0, 2, 1))
    m = n - p
    V = np.maximum(ssq / m, VAR_FLOOR)
    ll = -0.5 * m * (np.log(2 * np.pi * V) + 1.0) - 0.5 * logf
    return ll, V, b, P


def state_space_lr_fit(X, y, q: Optional[float] = None) -> StateSpaceLRFit:
    """Random-walk coefficient regression with variances by maximum likelihood.

    ``q`` fixes the evolution-to-observation variance ratio; by default it
    is estimated on a log grid with bounded refinement. If the filter fails
    the fit falls back to discount-style filtering at ``q = 0``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n <= 3 * p:
        raise ValueError(f"need more than 3p = {3 * p} observations")
    converged = True
    if q is None:
        qs = np.concatenate([[0.0], np.logspace(-6, 2, 33)])
        ll, *_ = dlm_profile(X, y, qs)
        if not np.any(np.isfinite(ll)):
            log.warning("state space likelihood not finite; falling back to q = 0")
            q, converged = 0.0, False
        else:
            k = int(np.nanargmax(ll))
            q = float(qs[k])
            if 0 < k < qs.size - 1:
                lo = np.log(qs[k - 1]) if k > 1 else np.log(qs[1]) - 2.0
                res = minimize_scalar(lambda lq: -dlm_profile(X, y, [np.exp(lq)])[0][0],
                                      bounds=(lo, np.log(qs[k + 1])), method="bounded",
                                      options={"xatol": 1e-6})
                if np.isfinite(res.fun) and -res.fun > ll[k]:
                    q = float(np.exp(res.x))
            converged = 0 < k < qs.size - 1 or k == 0
    ll, V, b, P = dlm_profile(X, y, [q])
    return StateSpaceLRFit(coef=b[0], cov=P[0] * V[0], V=float(V[0]), q=float(q),
                           loglik=float(ll[0]), converged=bool(converged))
