"""EM for finite mixtures of Gaussian linear regressions (the comparison baseline)."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, NumericError

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8
MAX_RETRIES = 5
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class EmModel:
    """Fitted mixture: ``coef[m] = [intercept, slopes...]``, ``sigma[m]``, ``pi[m]``."""

    coef: np.ndarray
    sigma: np.ndarray
    pi: np.ndarray
    loglik: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    collapsed: bool = False
    retries: int = 0
    seed: int = 0

    @property
    def n_components(self):
        return len(self.pi)

    @property
    def final_loglik(self):
        return self.loglik[-1]


def _design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


def _component_logpdf(Z, y, coef, sigma):
    r = y[:, None] - Z @ coef.T
    return -0.5 * _LOG_2PI - np.log(sigma) - 0.5 * (r / sigma) ** 2


def _log_joint(Z, y, coef, sigma, pi):
    return _component_logpdf(Z, y, coef, sigma) + np.log(pi)


def _lse_rows(a):
    amax = a.max(axis=1, keepdims=True)
    return (amax + np.log(np.exp(a - amax).sum(axis=1, keepdims=True)))[:, 0]


def log_likelihood(X, y, coef, sigma, pi):
    """Observed-data log-likelihood of a Gaussian linear mixture."""
    Z = _design(X)
    return float(np.sum(_lse_rows(_log_joint(Z, np.asarray(y, float), coef, sigma, pi))))


def e_step(Z, y, coef, sigma, pi):
    a = _log_joint(Z, y, coef, sigma, pi)
    return np.exp(a - _lse_rows(a)[:, None])


def m_step(Z, y, R):
    """Weighted least squares per component; raises ``LinAlgError`` when singular."""
    M = R.shape[1]
    coef = np.empty((M, Z.shape[1]))
    sigma = np.empty(M)
    collapsed = False
    for m in range(M):
        w = R[:, m]
        A = Z.T @ (Z * w[:, None])
        if np.linalg.cond(A) > 1e12:
            raise np.linalg.LinAlgError(f"weighted normal equations singular for component {m}")
        coef[m] = np.linalg.solve(A, Z.T @ (w * y))
        r = y - Z @ coef[m]
        var = float(np.sum(w * r * r) / np.sum(w))
        s = np.sqrt(var)
        if not s >= SIGMA_FLOOR:
            s = SIGMA_FLOOR
            collapsed = True
        sigma[m] = s
    pi = R.mean(axis=0)
    return coef, sigma, pi, collapsed


def em_fit(X, y, M, tol=1e-8, max_iter=500, seed=0):
    """Fit ``M`` Gaussian linear regressions by EM from a random soft assignment.

    The log-likelihood trajectory holds one value per parameter update; it is
    non-decreasing up to rounding. Singular weighted normal equations trigger up
    to five re-randomised restarts before a ``NumericError``.
    """
    Z = _design(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p1 = Z.shape
    if M < 1:
        raise ConfigError("M must be >= 1")
    if n <= M * (p1 + 1):
        raise ConfigError(f"need n > M * (p + 2) = {M * (p1 + 1)} observations, got {n}")
    rng = np.random.default_rng(seed)
    for retry in range(MAX_RETRIES + 1):
        R = rng.dirichlet(np.ones(M), size=n)
        try:
            result = _run(Z, y, R, tol, max_iter)
        except np.linalg.LinAlgError as exc:
            logger.info("EM retry %d after singular M-step: %s", retry + 1, exc)
            continue
        result.retries = retry
        result.seed = seed
        return result
    raise NumericError(f"EM failed: singular M-step after {MAX_RETRIES} retries")


def _run(Z, y, R, tol, max_iter):
    coef, sigma, pi, collapsed = m_step(Z, y, R)
    ll = float(np.sum(_lse_rows(_log_joint(Z, y, coef, sigma, pi))))
    trajectory = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        R = e_step(Z, y, coef, sigma, pi)
        coef, sigma, pi, flag = m_step(Z, y, R)
        collapsed = collapsed or flag
        new = float(np.sum(_lse_rows(_log_joint(Z, y, coef, sigma, pi))))
        trajectory.append(new)
        if new - ll < tol:
            converged = True
            break
        ll = new
    return EmModel(coef=coef, sigma=sigma, pi=pi, loglik=trajectory, n_iter=it,
                   converged=converged, collapsed=collapsed)


def em_fit_restarts(X, y, M, n_init=20, tol=1e-8, max_iter=500, seed=0):
    """Best of ``n_init`` EM runs (seeds ``seed, seed+1, ...``) by final log-likelihood."""
    best, failures = None, 0
    for r in range(n_init):
        try:
            fit = em_fit(X, y, M, tol=tol, max_iter=max_iter, seed=seed + r)
        except NumericError:
            failures += 1
            continue
        if best is None or fit.final_loglik > best.final_loglik:
            best = fit
    if best is None:
        raise NumericError(f"all {n_init} EM runs failed")
    return best


def to_mixture_model(em_model, X):
    """Equivalent constant-gating Gaussian ``MixtureModel`` set up on ``X``."""
    from .distributions import Softplus
    from .mixture import Component, MixtureModel
    from .predictors import Intercept, Linear

    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    p = X.shape[1]
    comps = [Component("normal", {"loc": [Intercept(), Linear(range(p))], "scale": [Intercept()]})
             for _ in range(em_model.n_components)]
    model = MixtureModel(comps).setup(X)
    weights = model.weights
    for m in range(em_model.n_components):
        weights[model.term_slices[f"c{m}.loc.intercept0"]] = em_model.coef[m, 0]
        weights[model.term_slices[f"c{m}.loc.linear1"]] = em_model.coef[m, 1:]
        weights[model.term_slices[f"c{m}.scale.intercept0"]] = Softplus().inverse(em_model.sigma[m])
        weights[model.term_slices[f"gate{m}.intercept0"]] = np.log(em_model.pi[m])
    return model
