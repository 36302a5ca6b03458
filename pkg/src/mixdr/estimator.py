"""scikit-learn style estimators over the mixture model and the EM baseline."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import build_model
from .em import em_fit_restarts, to_mixture_model
from .optim import TrainConfig, multi_restart


class MixtureRegressor(RegressorMixin, BaseEstimator):
    """Mixture of distributional regressions fitted by mini-batch gradient descent.

    Parameters
    ----------
    family : str
        Component family (normal, laplace, logistic, poisson, beta).
    n_components : int
    terms : dict, optional
        Per-parameter term specs, e.g. ``{"loc": [{"type": "intercept"},
        {"type": "linear", "features": "all"}]}``. Defaults to a linear
        predictor for the first parameter and intercepts elsewhere.
    gating_terms : list of dict, optional
        Terms of each gating predictor; an intercept by default.
    transforms : dict, optional
        Per-parameter response transforms.
    gating : {"softmax", "ordered"}
    xi : float
        Entropy penalty weight on the mean mixture probabilities.
    rho : float
        L1 weight for terms flagged ``l1``.
    optimizer : str
    learning_rate : float
        Peak rate of the cyclical schedule (or the constant rate when ``clr`` is false).
    clr : bool
    cycle_length : float
        Half-period of the cyclical schedule in epochs.
    epochs, batch_size, restarts : int
    random_state : int
    n_jobs : int
        Workers for independent restarts.
    """

    def __init__(self, family="normal", n_components=2, terms=None, gating_terms=None,
                 transforms=None, gating="softmax", xi=0.0, rho=0.0, optimizer="rmsprop",
                 learning_rate=0.1, clr=True, cycle_length=150.0, epochs=1500, batch_size=50,
                 restarts=1, random_state=0, n_jobs=1):
        self.family = family
        self.n_components = n_components
        self.terms = terms
        self.gating_terms = gating_terms
        self.transforms = transforms
        self.gating = gating
        self.xi = xi
        self.rho = rho
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.clr = clr
        self.cycle_length = cycle_length
        self.epochs = epochs
        self.batch_size = batch_size
        self.restarts = restarts
        self.random_state = random_state
        self.n_jobs = n_jobs

    def model_spec(self):
        spec = {"family": self.family, "n_components": self.n_components,
                "gating": {"transform": self.gating}, "xi": self.xi, "rho": self.rho}
        if self.terms is not None:
            spec["params"] = self.terms
        if self.transforms is not None:
            spec["transforms"] = self.transforms
        if self.gating_terms is not None:
            spec["gating"]["terms"] = self.gating_terms
        return spec

    def train_config(self):
        extra = {"cycle_length": self.cycle_length} if self.clr else {}
        return TrainConfig.from_lr(
            self.learning_rate, clr=self.clr, optimizer=self.optimizer, epochs=self.epochs,
            batch_size=self.batch_size, restarts=self.restarts, seed=int(self.random_state or 0),
            jobs=self.n_jobs, **extra)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        spec = self.model_spec()
        p = X.shape[1]
        self.fit_result_ = multi_restart(lambda seed: build_model(spec, p), X, y,
                                         self.train_config())
        self.model_ = self.fit_result_.model
        self.n_features_in_ = p
        return self

    def _check(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        """Mixture mean ``sum_m pi_m(x) E[y | component m, x]``."""
        X = self._check(X)
        return self.model_.predict_mean(X)

    def predict_params(self, X):
        """Mixture probabilities ``(n, M)`` and per-component parameter arrays."""
        X = self._check(X)
        field = self.model_.forward(X)
        return field.pi, field.theta

    def responsibilities(self, X, y):
        X = self._check(X)
        return self.model_.responsibilities(X, y)

    def log_score(self, X, y):
        """Negative log-likelihood summed over observations."""
        X = self._check(X)
        return self.model_.nll(X, y)

    def score(self, X, y, sample_weight=None):
        """Mean log-likelihood per observation (higher is better)."""
        if sample_weight is not None:
            X = self._check(X)
            rows = self.model_.log_likelihood_rows(X, y)
            return float(np.average(rows, weights=sample_weight))
        return -self.log_score(X, y) / np.asarray(y).size

    @property
    def risk_trajectory_(self):
        return self.fit_result_.risk_trajectory


class EMRegressor(RegressorMixin, BaseEstimator):
    """Gaussian mixture of linear regressions fitted by EM (best of ``n_init`` starts)."""

    def __init__(self, n_components=2, n_init=20, tol=1e-8, max_iter=500, random_state=0):
        self.n_components = n_components
        self.n_init = n_init
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self.em_ = em_fit_restarts(X, y, self.n_components, n_init=self.n_init, tol=self.tol,
                                   max_iter=self.max_iter, seed=int(self.random_state or 0))
        self.model_ = to_mixture_model(self.em_, X)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_mean(check_array(X, dtype=float))

    def log_score(self, X, y):
        check_is_fitted(self, "model_")
        return self.model_.nll(check_array(X, dtype=float), y)

    def score(self, X, y, sample_weight=None):
        return -self.log_score(X, y) / np.asarray(y).size
