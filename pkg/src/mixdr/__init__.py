"""Mixtures of distributional regressions with additive predictors.

The mixture model, its analytic gradients and the mini-batch optimizers live in
``mixture`` and ``optim``; ``estimator`` wraps them in a scikit-learn style API.
"""

from .distributions import FAMILIES, get_family
from .em import em_fit, em_fit_restarts, to_mixture_model
from .estimator import EMRegressor, MixtureRegressor
from .evaluation import align_components, coef_rmse, entropy_path, log_score, pi_rmse
from .exceptions import (ConfigError, DataError, DivergenceError, DomainError, MixdrError,
                         NumericError, StateError, SupportError)
from .mixture import Component, MixtureModel
from .optim import CLRConfig, TrainConfig, multi_restart, train
from .predictors import Dense, Intercept, Linear, Spline, df_to_lambda

__version__ = "0.1.0"

__all__ = [
    "FAMILIES", "get_family", "em_fit", "em_fit_restarts", "to_mixture_model", "EMRegressor",
    "MixtureRegressor", "align_components", "coef_rmse", "entropy_path", "log_score",
    "pi_rmse", "ConfigError", "DataError", "DivergenceError", "DomainError", "MixdrError",
    "NumericError", "StateError", "SupportError", "Component", "MixtureModel", "CLRConfig",
    "TrainConfig", "multi_restart", "train", "Dense", "Intercept", "Linear", "Spline",
    "df_to_lambda",
]
