"""Lag-weight schemes and incrementally maintained weighted statistics.

Lag 0 is the most recent observation. Every weighted computation in the
package reduces to sums of the form ``sum_i w_i * z_{t-i}`` over a prefix of
the series; this module produces those sums for all prefixes at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class Exponential:
    """Weight ``alpha**i`` at lag ``i``."""

    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0) or math.isnan(self.alpha):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Linear:
    """Weight ``max(0, 1 - i / horizon)`` at lag ``i``."""

    horizon: int

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon}")


@dataclass(frozen=True)
class Window:
    """Rolling window: weight 1 for lags ``i < length``, 0 beyond."""

    length: int

    def __post_init__(self):
        if int(self.length) != self.length or self.length < 1:
            raise ValueError(f"window length must be a positive integer, got {self.length}")


@dataclass(frozen=True)
class Explicit:
    """User supplied lag weights, lag 0 first."""

    weights: tuple

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise ValueError("explicit weights must be finite and lie in [0, 1]")
        object.__setattr__(self, "weights", tuple(w.tolist()))


WeightScheme = Union[Exponential, Linear, Window, Explicit]


def as_scheme(weights) -> WeightScheme:
    """Interpret a bare float as an exponential decay parameter."""
    if isinstance(weights, (Exponential, Linear, Window, Explicit)):
        return weights
    return Exponential(float(weights))


@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray
    scaled_count: float

    def __len__(self):
        return self.w.size


def lag_weights(scheme: WeightScheme, length: int) -> np.ndarray:
    lags = np.arange(length)
    if isinstance(scheme, Exponential):
        # 0**0 == 1 keeps lag 0 at full weight for alpha == 0
        return np.power(scheme.alpha, lags.astype(float))
    if isinstance(scheme, Window):
        return (lags < scheme.length).astype(float)
    if isinstance(scheme, Linear):
        return np.maximum(0.0, 1.0 - lags / scheme.horizon)
    if isinstance(scheme, Explicit):
        if len(scheme.weights) < length:
            raise ValueError(
                f"explicit scheme has {len(scheme.weights)} weights, {length} required"
            )
        return np.asarray(scheme.weights[:length], dtype=float)
    raise TypeError(f"unknown weight scheme {scheme!r}")


def materialize(scheme: WeightScheme, length: int) -> WeightVector:
    """Lag-ordered weight vector of the given length."""
    if int(length) != length or length < 1:
        raise ValueError(f"length must be a positive integer, got {length}")
    w = lag_weights(as_scheme(scheme), int(length))
    return WeightVector(w=w, scaled_count=float(w.sum()))


def prefix_weighted_sums(values, scheme: WeightScheme) -> np.ndarray:
    """Weighted sums over every prefix of ``values`` (time on axis 0).

    Row ``t`` of the result is ``sum_{i=0}^{t} w_i * values[t - i]``. The
    exponential scheme runs the forward recursion ``S_t = v_t + alpha*S_{t-1}``;
    the window scheme differences a running sum; the others convolve.
    """
    v = np.asarray(values, dtype=float)
    scheme = as_scheme(scheme)
    n = v.shape[0]
    if isinstance(scheme, Exponential):
        return lfilter([1.0], [1.0, -scheme.alpha], v, axis=0)
    if isinstance(scheme, Window):
        csum = np.cumsum(v, axis=0)
        out = csum.copy()
        k = scheme.length
        if k < n:
            out[k:] -= csum[:-k]
        return out
    w = lag_weights(scheme, n)
    flat = v.reshape(n, -1)
    out = np.empty_like(flat)
    for c in range(flat.shape[1]):
        out[:, c] = np.convolve(flat[:, c], w)[:n]
    return out.reshape(v.shape)


@dataclass(frozen=True)
class WeightedMoments:
    """Exponentially weighted count, mean and raw second moment of a series."""

    t_alpha: float = 0.0
    wmean: float = 0.0
    wsecond: float = 0.0
    n: int = 0

    @property
    def wvar(self) -> float:
        """Weighted (population form) variance, ``wsecond - wmean**2``."""
        return self.wsecond - self.wmean ** 2


def update_moments(m: WeightedMoments, y: float, alpha: float) -> WeightedMoments:
    """Append ``y`` as the new lag-0 observation, discounting history by ``alpha``."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    y = float(y)
    if not math.isfinite(y):
        raise ValueError(f"observation must be finite, got {y}")
    old = alpha * m.t_alpha
    t_alpha = 1.0 + old
    # S' = y + alpha*S for the first and second weighted sums, kept as means
    wmean = (y + old * m.wmean) / t_alpha
    wsecond = (y * y + old * m.wsecond) / t_alpha
    return WeightedMoments(t_alpha=t_alpha, wmean=wmean, wsecond=wsecond, n=m.n + 1)


@dataclass(frozen=True)
class MomentPaths:
    """Weighted moments of every prefix, for a grid of decay values.

    Arrays have shape ``(len(alphas), T)``; column ``t`` summarises
    ``y[: t + 1]``. ``m2`` is the weighted sum of squared deviations from the
    weighted mean, so the weighted variance is ``m2 / t_alpha``.
    """

    alphas: np.ndarray
    t_alpha: np.ndarray
    mean: np.ndarray
    m2: np.ndarray


def moment_paths(series, alphas) -> MomentPaths:
    """Run the centred weighted recursion over ``series`` for each decay.

    One pass over time with the decay grid vectorised: O(T * len(alphas)).
    The centred update avoids the cancellation of ``wsecond - wmean**2``.
    """
    y = np.asarray(series, dtype=float)
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    if np.any((a < 0) | (a > 1)):
        raise ValueError("decay values must lie in [0, 1]")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    g, n = a.size, y.size
    t_out = np.empty((g, n))
    mean_out = np.empty((g, n))
    m2_out = np.empty((g, n))
    w = np.zeros(g)
    mean = np.zeros(g)
    m2 = np.zeros(g)
    for t in range(n):
        w = a * w
        m2 = a * m2
        w = w + 1.0
        delta = y[t] - mean
        mean = mean + delta / w
        m2 = m2 + delta * (y[t] - mean)
        t_out[:, t] = w
        mean_out[:, t] = mean
        m2_out[:, t] = m2
    return MomentPaths(alphas=a, t_alpha=t_out, mean=mean_out, m2=m2_out)
