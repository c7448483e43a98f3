"""Forecasting with lag-weighted (power-weighted) likelihoods."""

from .normal import DegenerateError, estimate_alpha, forecast, log_pred_likelihood, predictive, terminal_posterior
from .weights import Exponential, Explicit, Linear, Window, materialize, update_moments, WeightedMoments
from .hier import GibbsConfig, PanelData, estimate_alphas_plugin, fit_predict_terminal, plugin_predictive

__version__ = "0.1.0"

__all__ = [
    "DegenerateError",
    "Exponential",
    "Explicit",
    "GibbsConfig",
    "Linear",
    "PanelData",
    "WeightedMoments",
    "Window",
    "estimate_alpha",
    "estimate_alphas_plugin",
    "fit_predict_terminal",
    "forecast",
    "log_pred_likelihood",
    "materialize",
    "plugin_predictive",
    "predictive",
    "terminal_posterior",
    "update_moments",
]
