"""Hierarchical linear regression with per-group power weighting.

Each group ``j`` has its own regression ``y_jt = x_jt . beta_jt + e_jt`` whose
past observations are down-weighted by ``alpha_j ** lag``. Groups share a
normal prior ``beta_j ~ N(beta0, diag(tau2))``. Inference for the terminal
coefficients uses a Gibbs sampler; per-group decay values are chosen by an
iteration between plug-in estimates and grid maximisation of the plug-in
one-step-ahead predictive likelihood.

All weighted sufficient statistics (``X'AX``, ``X'Ay``, ``y'Ay``, ``t_alpha``)
come from the forward recursion ``S_t = z_t + alpha * S_{t-1}``, so evaluating
the objective for one group and one alpha costs O(T p^2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .normal import AlphaEstimate, DegenerateError, StudentTPredictive, _argmax_largest, student_t_logpdf
from .weights import Exponential, WeightScheme, as_scheme, materialize, prefix_weighted_sums

log = logging.getLogger(__name__)

DEFAULT_GRID = np.linspace(0.5, 1.0, 100)
DIFFUSE_SCALE = 1e6
RIDGE = 1e-8


@dataclass(frozen=True)
class PanelData:
    """J groups observed on a shared time index.

    ``X`` has shape (J, T, p), ``y`` has shape (J, T), ``dates`` has length T.
    """

    X: np.ndarray
    y: np.ndarray
    dates: np.ndarray
    covariates: tuple = ()
    groups: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 3 or y.ndim != 2 or X.shape[:2] != y.shape:
            raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
        dates = np.asarray(self.dates)
        if dates.shape != (y.shape[1],):
            raise ValueError("dates must have one entry per time point")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("panel contains missing or non-finite cells")
        covariates = tuple(self.covariates) or tuple(f"x{k}" for k in range(X.shape[2]))
        groups = tuple(self.groups) or tuple(f"g{j}" for j in range(X.shape[0]))
        if len(covariates) != X.shape[2] or len(groups) != X.shape[0]:
            raise ValueError("covariate/group names do not match panel shape")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_common(cls, X, Y, dates=None, covariates=(), groups=()):
        """Build a panel whose covariates (T, p) are shared by all groups; Y is (J, T)."""
        X = np.asarray(X, dtype=float)
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.ndim == 1:
            X = X[:, None]
        XX = np.broadcast_to(X, (Y.shape[0],) + X.shape).copy()
        if dates is None:
            dates = np.arange(Y.shape[1])
        return cls(XX, Y, dates, covariates, groups)

    @property
    def J(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[2]

    def head(self, n: int) -> "PanelData":
        """The first ``n`` time points."""
        return PanelData(self.X[:, :n], self.y[:, :n], self.dates[:n], self.covariates, self.groups)

    def select(self, covariates: Sequence[str]) -> "PanelData":
        idx = [self.covariates.index(c) for c in covariates]
        return PanelData(self.X[:, :, idx], self.y, self.dates, tuple(covariates), self.groups)

    def subset_groups(self, idx) -> "PanelData":
        idx = list(idx)
        return PanelData(
            self.X[idx], self.y[idx], self.dates, self.covariates, tuple(self.groups[i] for i in idx)
        )


@dataclass(frozen=True)
class GlobalParams:
    beta0: np.ndarray
    tau2: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.beta0, dtype=float))
        t = np.atleast_1d(np.asarray(self.tau2, dtype=float))
        if b.shape != t.shape:
            raise ValueError("beta0 and tau2 must have the same length")
        if np.any(t <= 0):
            raise ValueError("tau2 entries must be positive")
        object.__setattr__(self, "beta0", b)
        object.__setattr__(self, "tau2", t)


@dataclass(frozen=True)
class GroupTerminalState:
    beta: np.ndarray
    sigma2: float
    alpha: float


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 500
    burn_in: int = 100
    seed: int = 0
    alpha_convergence_threshold: float = 0.005
    max_alpha_iterations: int = 50
    # optional InvGamma(shape, rate) hyperprior on tau2; zeros give the 1/tau2 reference prior
    tau2_prior_shape: float = 0.0
    tau2_prior_rate: float = 0.0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be non-negative and below iterations")
        if self.alpha_convergence_threshold <= 0:
            raise ValueError("convergence threshold must be positive")
        if self.tau2_prior_shape < 0 or self.tau2_prior_rate < 0:
            raise ValueError("tau2 hyperprior parameters must be nonnegative")


@dataclass(frozen=True)
class SuffStats:
    """Weighted cross-products; leading dimensions are arbitrary."""

    xtx: np.ndarray
    xty: np.ndarray
    yty: np.ndarray
    t_alpha: np.ndarray

    def rss(self, beta):
        """``sum_i w_i (y_i - x_i beta)^2`` from the cross-products."""
        beta = np.asarray(beta, dtype=float)
        xtxb = np.einsum("...ij,...j->...i", self.xtx, beta)
        return self.yty - 2.0 * np.einsum("...i,...i->...", beta, self.xty) + np.einsum(
            "...i,...i->...", beta, xtxb
        )


def _stack_products(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    z = np.empty((n, p * p + p + 2))
    z[:, : p * p] = (X[:, :, None] * X[:, None, :]).reshape(n, p * p)
    z[:, p * p : p * p + p] = X * y[:, None]
    z[:, -2] = y * y
    z[:, -1] = 1.0
    return z


def _unstack(s, p):
    lead = s.shape[:-1]
    return SuffStats(
        xtx=s[..., : p * p].reshape(lead + (p, p)),
        xty=s[..., p * p : p * p + p],
        yty=s[..., -2],
        t_alpha=s[..., -1],
    )


def weighted_suffstats(X, y, weights: float | WeightScheme = 1.0) -> SuffStats:
    """Cross-products of the full history weighted by lag (lag 0 = last row)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = materialize(as_scheme(weights), y.size).w[::-1]
    z = _stack_products(X, y)
    return _unstack(w @ z, X.shape[1])


def suffstat_paths(X, y, alphas) -> SuffStats:
    """Weighted cross-products of every prefix for every decay: leading shape (G, T)."""
    X = np.asarray(X, dtype=float)
    z = _stack_products(X, y)
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    s = np.stack([prefix_weighted_sums(z, Exponential(float(al))) for al in a])
    return _unstack(s, X.shape[1])


def beta_conditional(stats: SuffStats, sigma2, prior: Optional[GlobalParams]):
    """Mean and covariance of the normal full conditional for the coefficients.

    ``V = (X'AX / s2 + Sigma0^-1)^-1`` and ``m = V (X'Ay / s2 + Sigma0^-1 beta0)``;
    ``prior=None`` drops the prior term.
    """
    s2 = np.asarray(sigma2, dtype=float)[..., None]
    prec = stats.xtx / s2[..., None]
    rhs = stats.xty / s2
    if prior is not None:
        prec = prec + np.diag(1.0 / prior.tau2)
        rhs = rhs + prior.beta0 / prior.tau2
    cov = np.linalg.inv(prec)
    mean = np.linalg.solve(prec, rhs[..., None])[..., 0]
    return mean, cov


def _inv_gamma(shape_gamma_draw, rate):
    # InvGamma(a, b) = b / Gamma(a, 1)
    return rate / shape_gamma_draw


def gibbs_global(betas, rng: np.random.Generator, beta0=None, prior_shape=0.0, prior_rate=0.0) -> GlobalParams:
    """One draw of (tau2, beta0) given the group coefficients.

    ``tau2_k ~ InvGamma(J/2, sum_j (beta_jk - beta0_k)^2 / 2)`` using the
    current ``beta0`` (the coefficient mean if none is given), then
    ``beta0_k ~ N(mean_j beta_jk, tau2_k / J)``. A nonzero hyperprior adds
    ``prior_shape`` and ``prior_rate`` to the shape and rate.
    """
    B = np.atleast_2d(np.asarray(betas, dtype=float))
    J, p = B.shape
    if J < 2:
        raise ValueError("global conditionals need at least two groups")
    b0 = B.mean(axis=0) if beta0 is None else np.asarray(beta0, dtype=float)
    g = rng.standard_gamma(J / 2.0 + prior_shape, size=p)
    z = rng.standard_normal(p)
    tau2, beta0_new = _global_draw(B, b0, g, z, prior_rate)
    return GlobalParams(beta0=beta0_new, tau2=tau2)


def _global_draw(B, beta0, gamma_draw, normal_draw, prior_rate=0.0):
    J = B.shape[0]
    ss = ((B - beta0) ** 2).sum(axis=0)
    scale = np.maximum((B ** 2).mean(axis=0), 1.0)
    ss = np.maximum(ss, 1e-300 * scale)
    tau2 = _inv_gamma(gamma_draw, 0.5 * ss + prior_rate)
    beta0_new = B.mean(axis=0) + np.sqrt(tau2 / J) * normal_draw
    return tau2, beta0_new


def _draw_beta(stats, sigma2, prior, z):
    mean, cov = beta_conditional(stats, sigma2, prior)
    L = np.linalg.cholesky(cov)
    return mean + np.einsum("...ij,...j->...i", L, z)


def gibbs_group_terminal(
    X, y, alpha: float, global_params: GlobalParams, sigma2: float, rng: np.random.Generator
) -> GroupTerminalState:
    """Draw the terminal coefficients, then the terminal residual variance.

    ``beta ~ N(m, V)`` from the weighted conditional at the supplied
    ``sigma2``; then ``sigma2 ~ InvGamma(t_alpha/2, weighted RSS / 2)``.
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    stats = weighted_suffstats(X, y, alpha)
    if stats.t_alpha <= p + 1:
        raise DegenerateError(f"scaled count {stats.t_alpha:.4g} <= p + 1 = {p + 1}")
    try:
        beta = _draw_beta(stats, sigma2, global_params, rng.standard_normal(p))
    except np.linalg.LinAlgError as exc:
        raise DegenerateError("weighted precision matrix is singular") from exc
    rss = max(float(stats.rss(beta)), 1e-300)
    s2 = _inv_gamma(rng.standard_gamma(stats.t_alpha / 2.0), 0.5 * rss)
    return GroupTerminalState(beta=beta, sigma2=float(s2), alpha=float(alpha))


# ---------------------------------------------------------------------------
# plug-in predictive


def _plugin_from_stats(stats: SuffStats, p: int, prior: Optional[GlobalParams]):
    """Plug-in coefficient mean, covariance and residual variance.

    The residual variance is first taken from the weighted least-squares
    fit, the prior-shrunk coefficients are formed with it, and the variance
    is then re-evaluated at the shrunk coefficients. Returns
    ``(beta, V, sigma2, valid)``; invalid entries hold finite placeholders.
    """
    xtx = stats.xtx
    eye = np.broadcast_to(np.eye(p), xtx.shape)
    ev = np.linalg.eigvalsh(xtx)
    valid = ev[..., 0] > 1e-12 * np.maximum(ev[..., -1], 1e-300)
    dof = stats.t_alpha - p
    valid &= dof > 1.0
    safe = np.where(valid[..., None, None], xtx, eye)
    b_wls = np.linalg.solve(safe, stats.xty[..., None])[..., 0]
    s2_0 = stats.rss(b_wls) / np.where(valid, dof, 1.0)
    valid &= s2_0 > 0
    s2_0 = np.where(valid, s2_0, 1.0)
    if prior is None:
        inv_xtx = np.linalg.inv(safe)
        return b_wls, s2_0[..., None, None] * inv_xtx, s2_0, valid
    stats_safe = SuffStats(safe, stats.xty, stats.yty, stats.t_alpha)
    beta, V = beta_conditional(stats_safe, s2_0, prior)
    s2 = stats.rss(beta) / np.where(valid, dof, 1.0)
    valid &= s2 > 0
    s2 = np.where(valid, s2, 1.0)
    return beta, V, s2, valid


def plugin_terminal(X, y, alpha: float | WeightScheme, prior: Optional[GlobalParams] = None):
    """Plug-in ``(beta, V, sigma2)`` from the full history."""
    X = np.asarray(X, dtype=float)
    stats = weighted_suffstats(X, y, alpha)
    beta, V, s2, valid = _plugin_from_stats(stats, X.shape[1], prior)
    if not valid:
        raise DegenerateError("plug-in estimates undefined (singular design or t_alpha <= p + 1)")
    return beta, V, float(s2)


def plugin_predictive(
    X_hist, y_hist, x_next, alpha: float | WeightScheme, prior: Optional[GlobalParams] = None
) -> StudentTPredictive:
    """Student-t predictive for the next response given its covariate row.

    Degrees of freedom ``t_alpha - p - 1``; squared scale
    ``sigma2 + x V x'``. ``prior=None`` is the diffuse (unpooled) case.
    """
    X_hist = np.asarray(X_hist, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    p = X_hist.shape[1]
    stats = weighted_suffstats(X_hist, y_hist, alpha)
    df = stats.t_alpha - p - 1.0
    if df <= 0:
        raise DegenerateError(f"degrees of freedom {df:.4g} <= 0")
    beta, V, s2 = plugin_terminal(X_hist, y_hist, alpha, prior)
    scale2 = s2 + x_next @ V @ x_next
    if not scale2 > 0:
        raise DegenerateError("non-positive predictive scale")
    return StudentTPredictive(df=float(df), loc=float(x_next @ beta), scale2=float(scale2))


def usable_grid(grid, p: int, n_min: int) -> np.ndarray:
    """Grid points whose scaled count after ``n_min`` observations exceeds p + 1."""
    grid = np.asarray(grid, dtype=float)
    t_a = np.array([materialize(Exponential(a), n_min).scaled_count for a in grid])
    return grid[t_a > p + 1 + 1e-12]


@dataclass(frozen=True)
class PluginTerms:
    """Per-decay one-step-ahead plug-in log densities.

    ``terms[g, t]`` is the log density of ``y[t]`` given rows ``[:t]`` at
    ``grid[g]``; ``usable[t]`` marks the terms shared by every grid point.
    """

    grid: np.ndarray
    terms: np.ndarray
    usable: np.ndarray

    def loglik(self):
        return self.terms[:, self.usable].sum(axis=1)


def plugin_terms(X, y, grid, prior: Optional[GlobalParams] = None, n_min: Optional[int] = None) -> PluginTerms:
    """All one-step-ahead plug-in log densities for one group.

    Prediction of ``y[t]`` uses prefix stats of rows ``[:t]`` for
    ``t >= n_min`` (default ``p + 2``). A term is kept only if it is
    well-defined at every grid point.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    n_min = p + 2 if n_min is None else int(n_min)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    terms = np.full((grid.size, n), np.nan)
    usable = np.zeros(n, dtype=bool)
    if n <= n_min or grid.size == 0:
        return PluginTerms(grid, terms, usable)
    paths = suffstat_paths(X[:-1], y[:-1], grid)
    # prefix of length t ends at index t - 1 of the paths
    sl = slice(n_min - 1, n - 1)
    stats = SuffStats(paths.xtx[:, sl], paths.xty[:, sl], paths.yty[:, sl], paths.t_alpha[:, sl])
    beta, V, s2, valid = _plugin_from_stats(stats, p, prior)
    xs = X[n_min:]
    ys = y[n_min:]
    loc = np.einsum("gti,ti->gt", beta, xs)
    scale2 = s2 + np.einsum("ti,gtij,tj->gt", xs, V, xs)
    df = stats.t_alpha - p - 1.0
    valid &= (df > 0) & (scale2 > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        dens = student_t_logpdf(ys[None, :], np.where(valid, df, 1.0), loc, np.where(valid, scale2, 1.0))
    ok = valid.all(axis=0) & np.all(np.isfinite(dens), axis=0)
    terms[:, n_min:] = np.where(ok[None, :], dens, np.nan)
    usable[n_min:] = ok
    return PluginTerms(grid, terms, usable)


def _select_alpha(pt: PluginTerms) -> AlphaEstimate:
    if not pt.usable.any():
        raise DegenerateError("no usable one-step-ahead terms")
    ll = pt.loglik()
    best = _argmax_largest(ll)
    return AlphaEstimate(
        alpha_star=float(pt.grid[best]),
        log_pred_lik=float(ll[best]),
        grid=pt.grid,
        per_alpha_loglik=ll,
        n_terms=int(pt.usable.sum()),
        n_skipped=int((~pt.usable).sum()),
    )


def estimate_alpha_group(X, y, grid=None, prior: Optional[GlobalParams] = None, n_min=None) -> AlphaEstimate:
    """Grid maximiser of one group's plug-in predictive likelihood."""
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    n_min = p + 2 if n_min is None else n_min
    grid = usable_grid(DEFAULT_GRID if grid is None else grid, p, n_min)
    if grid.size == 0:
        raise DegenerateError("no grid point keeps t_alpha above p + 1")
    return _select_alpha(plugin_terms(X, y, grid, prior, n_min))


def cross_group_prior(betas) -> GlobalParams:
    """Plug-in ``(beta0, tau2)``: componentwise mean and (J-1)-variance.

    Components with no usable dispersion (J = 1 or identical coefficients)
    get a diffuse variance so that the prior term vanishes.
    """
    B = np.atleast_2d(np.asarray(betas, dtype=float))
    J = B.shape[0]
    beta0 = B.mean(axis=0)
    scale = np.maximum((B ** 2).mean(axis=0), 1.0)
    if J < 2:
        tau2 = DIFFUSE_SCALE * scale
    else:
        tau2 = B.var(axis=0, ddof=1)
        flat = tau2 <= 1e-12 * scale
        tau2 = np.where(flat, DIFFUSE_SCALE * scale, tau2)
    return GlobalParams(beta0=beta0, tau2=tau2)


@dataclass
class PluginAlphaResult:
    alphas: np.ndarray
    estimates: list
    prior: GlobalParams
    betas: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def estimate_alphas_plugin(
    panel: PanelData, grid=None, config: GibbsConfig = GibbsConfig(), n_min=None
) -> PluginAlphaResult:
    """Alternate plug-in updates and per-group grid maximisation until stable.

    Step 1 recomputes the terminal plug-in coefficients at the current
    decays and, from them, the cross-group ``(beta0, tau2)``. Step 2
    maximises each group's plug-in predictive likelihood under that prior.
    Stops when every decay moves less than the threshold or the iteration
    revisits an earlier state (a limit cycle between neighbouring grid
    points); after ``max_alpha_iterations`` the last iterate is returned
    unconverged.
    """
    p = panel.p
    n_min = p + 2 if n_min is None else n_min
    if panel.T < p + 3:
        raise ValueError(f"need at least p + 3 = {p + 3} time points, got {panel.T}")
    grid = usable_grid(DEFAULT_GRID if grid is None else grid, p, n_min)
    if grid.size == 0:
        raise DegenerateError("no grid point keeps t_alpha above p + 1")
    alphas = np.ones(panel.J)
    prior = None
    history = []
    converged = False
    estimates = []
    betas = None
    it = 0
    for it in range(1, config.max_alpha_iterations + 1):
        betas = np.stack(
            [plugin_terminal(panel.X[j], panel.y[j], float(alphas[j]), prior)[0] for j in range(panel.J)]
        )
        prior = cross_group_prior(betas)
        estimates = [
            _select_alpha(plugin_terms(panel.X[j], panel.y[j], grid, prior, n_min)) for j in range(panel.J)
        ]
        new = np.array([e.alpha_star for e in estimates])
        history.append(new)
        change = np.max(np.abs(new - alphas))
        # a repeated state means the discrete grid iteration has entered a cycle
        cycled = any(np.array_equal(new, h) for h in history[:-1])
        alphas = new
        if change < config.alpha_convergence_threshold or cycled:
            converged = True
            break
    if not converged:
        log.warning("alpha iteration did not converge after %d iterations", it)
    return PluginAlphaResult(alphas, estimates, prior, betas, it, converged, history)


def estimate_alphas_separate(panel: PanelData, grid=None, n_min=None) -> list:
    """Per-group decay estimates with no pooling (diffuse plug-in prior)."""
    return [estimate_alpha_group(panel.X[j], panel.y[j], grid, None, n_min) for j in range(panel.J)]


# ---------------------------------------------------------------------------
# Gibbs sampler for the terminal coefficients


@dataclass
class TerminalFit:
    alphas: np.ndarray
    beta_mean: np.ndarray
    beta_sd: np.ndarray
    sigma2_mean: np.ndarray
    sigma2_sd: np.ndarray
    beta0_mean: np.ndarray
    beta0_sd: np.ndarray
    tau2_mean: np.ndarray
    beta0_draws: np.ndarray
    beta_draws: np.ndarray
    sigma2_draws: np.ndarray
    pred_mean: Optional[np.ndarray] = None
    pred_sd: Optional[np.ndarray] = None

    def beta0_interval(self, level=0.997):
        lo = (1.0 - level) / 2.0
        return np.quantile(self.beta0_draws, [lo, 1.0 - lo], axis=0)


def _init_state(stats: SuffStats, p: int):
    xtx = stats.xtx + RIDGE * np.eye(p)
    beta = np.linalg.solve(xtx, stats.xty[..., None])[..., 0]
    rss = np.maximum(stats.rss(beta), 1e-300)
    sigma2 = rss / np.maximum(stats.t_alpha - p, 1.0)
    return beta, sigma2, cross_group_prior(beta)


def fit_predict_terminal(
    panel: PanelData,
    alphas,
    config: GibbsConfig = GibbsConfig(),
    x_next=None,
) -> TerminalFit:
    """Gibbs sampler for the terminal coefficients of every group.

    Sweep order: residual variances, coefficients, ``tau2``, ``beta0``.
    Random streams: one per group plus one for the global parameters, all
    spawned from ``config.seed``. With a single group the global update is
    skipped and a diffuse prior is held fixed.

    Under the default reference prior on ``tau2`` a chain can drift to
    ``tau2`` near zero and stay there when the groups are only weakly
    separated; a small proper hyperprior (``tau2_prior_shape``,
    ``tau2_prior_rate``) prevents this.

    ``x_next`` (J, p) gives the next covariate rows; when supplied the
    predictive mean and standard deviation of the next responses are returned.
    """
    J, p = panel.J, panel.p
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (J,))
    stats = SuffStats(
        *[
            np.stack(v)
            for v in zip(
                *[
                    (s.xtx, s.xty, s.yty, s.t_alpha)
                    for s in (weighted_suffstats(panel.X[j], panel.y[j], float(alphas[j])) for j in range(J))
                ]
            )
        ]
    )
    if np.any(stats.t_alpha <= p + 1):
        raise DegenerateError("scaled count <= p + 1 in at least one group")

    n_iter, burn = config.iterations, config.burn_in
    seeds = np.random.SeedSequence(config.seed).spawn(J + 1)
    z_beta = np.empty((n_iter, J, p))
    g_sigma = np.empty((n_iter, J))
    for j in range(J):
        rng = np.random.default_rng(seeds[j])
        z_beta[:, j] = rng.standard_normal((n_iter, p))
        g_sigma[:, j] = rng.standard_gamma(stats.t_alpha[j] / 2.0, size=n_iter)
    grng = np.random.default_rng(seeds[J])
    g_tau = grng.standard_gamma(J / 2.0 + config.tau2_prior_shape, size=(n_iter, p)) if J >= 2 else None
    z_b0 = grng.standard_normal((n_iter, p))

    beta, sigma2, prior = _init_state(stats, p)
    beta0, tau2 = prior.beta0, prior.tau2
    keep = n_iter - burn
    beta_draws = np.empty((keep, J, p))
    sigma2_draws = np.empty((keep, J))
    beta0_draws = np.empty((keep, p))
    tau2_draws = np.empty((keep, p))
    for it in range(n_iter):
        rss = np.maximum(stats.rss(beta), 1e-300)
        sigma2 = _inv_gamma(g_sigma[it], 0.5 * rss)
        try:
            beta = _draw_beta(stats, sigma2, GlobalParams(beta0, tau2), z_beta[it])
        except np.linalg.LinAlgError as exc:
            raise DegenerateError("coefficient conditional covariance is singular") from exc
        if J >= 2:
            tau2, beta0 = _global_draw(beta, beta0, g_tau[it], z_b0[it], config.tau2_prior_rate)
        if it >= burn:
            k = it - burn
            beta_draws[k] = beta
            sigma2_draws[k] = sigma2
            beta0_draws[k] = beta0
            tau2_draws[k] = tau2

    fit = TerminalFit(
        alphas=np.array(alphas),
        beta_mean=beta_draws.mean(axis=0),
        beta_sd=beta_draws.std(axis=0, ddof=1) if keep > 1 else np.zeros((J, p)),
        sigma2_mean=sigma2_draws.mean(axis=0),
        sigma2_sd=sigma2_draws.std(axis=0, ddof=1) if keep > 1 else np.zeros(J),
        beta0_mean=beta0_draws.mean(axis=0),
        beta0_sd=beta0_draws.std(axis=0, ddof=1) if keep > 1 else np.zeros(p),
        tau2_mean=tau2_draws.mean(axis=0),
        beta0_draws=beta0_draws,
        beta_draws=beta_draws,
        sigma2_draws=sigma2_draws,
    )
    if x_next is not None:
        xn = np.broadcast_to(np.asarray(x_next, dtype=float), (J, p))
        lin = np.einsum("kjp,jp->kj", beta_draws, xn)
        fit.pred_mean = lin.mean(axis=0)
        fit.pred_sd = np.sqrt(sigma2_draws.mean(axis=0) + lin.var(axis=0))
    return fit


def conditional_beta_mean(panel: PanelData, alphas, fit: TerminalFit) -> np.ndarray:
    """Coefficient conditional means at posterior-mean plug-ins.

    Used between full refits: the global parameters and residual variances
    from an earlier posterior are combined with the current sufficient
    statistics.
    """
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (panel.J,))
    out = np.empty((panel.J, panel.p))
    prior = GlobalParams(fit.beta0_mean, np.maximum(fit.tau2_mean, 1e-300))
    for j in range(panel.J):
        s = weighted_suffstats(panel.X[j], panel.y[j], float(alphas[j]))
        out[j] = beta_conditional(s, fit.sigma2_mean[j], prior)[0]
    return out
