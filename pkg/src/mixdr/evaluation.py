"""Scores, component alignment and the entropy-penalty path."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import ConfigError, DivergenceError
from .optim import train
from .predictors import Intercept, Spline

logger = logging.getLogger(__name__)


def log_score(model, X, y, per_observation=False):
    """Negative log-likelihood of ``y`` under the fitted model (LS on train, PLS on test)."""
    value = model.nll(X, y)
    if per_observation:
        return value / np.asarray(y).size
    return value


# ---------------------------------------------------------------------------
# component summaries and alignment


def component_summaries(model, X=None):
    """Mean mixture probabilities and per-component coefficient dicts.

    Parameters with identity transform and intercept/linear terms report their
    weights; intercept-only parameters report the transformed constant (e.g.
    the scale itself); anything else reports raw weights.
    """
    if X is not None:
        pi = model.forward(X).pi.mean(axis=0)
    else:
        raw = np.array([model.weights[model.term_slices[t.label]][0]
                        for g in model.gating for t in g if isinstance(t, Intercept)])
        if raw.size != model.n_components:
            raise ConfigError("feature-dependent gating needs X to summarise probabilities")
        pi = model.gating_transform.apply(raw)
    coefs = []
    for comp in model.components:
        entry = {}
        for name in comp.param_names:
            pred = comp.predictors[name]
            w = np.concatenate([t.weights for t in pred if t.linear] or [np.zeros(0)])
            terms = list(pred)
            if len(terms) == 1 and isinstance(terms[0], Intercept):
                entry[name] = np.atleast_1d(comp.transforms[name].apply(terms[0].weights))
            else:
                entry[name] = w.copy()
        coefs.append(entry)
    return np.asarray(pi), coefs


def summary_matrix(pi, coefs, keys=None):
    """Rows ``[pi_m, coefs...]`` concatenated in ``keys`` order."""
    keys = keys or list(coefs[0])
    rows = [np.concatenate([[pi[m]]] + [np.ravel(c[k]) for k in keys])
            for m, c in enumerate(coefs)]
    return np.vstack(rows)


def _pad(a, rows):
    if a.shape[0] >= rows:
        return a
    return np.vstack([a, np.zeros((rows - a.shape[0], a.shape[1]))])


def align_components(est, truth):
    """Permutation matching estimated to true components.

    ``est`` and ``truth`` are ``(M, d)`` summary matrices. The smaller one is
    padded with zero rows. Returns ``perm`` with ``est[perm[i]]`` matched to
    ``truth[i]``, minimising the total squared distance.
    """
    est = np.atleast_2d(np.asarray(est, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape[1] != truth.shape[1]:
        raise ConfigError("summary dimensions differ between estimate and truth")
    M = max(est.shape[0], truth.shape[0])
    est, truth = _pad(est, M), _pad(truth, M)
    cost = ((truth[:, None, :] - est[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(M, dtype=int)
    perm[rows] = cols
    return perm


def align_cost(cost):
    """Optimal assignment for a square cost matrix (rows -> columns)."""
    rows, cols = linear_sum_assignment(np.asarray(cost, dtype=float))
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm


def coef_rmse(est, truth, perm):
    """RMSE between aligned coefficient matrices (rows are components)."""
    est = np.atleast_2d(np.asarray(est, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    M = len(perm)
    est, truth = _pad(est, M), _pad(truth, M)
    if est.shape != truth.shape:
        raise ConfigError(f"shape mismatch: {est.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((est[perm] - truth) ** 2)))


def pi_rmse(est_pi, true_pi, perm):
    est = np.asarray(est_pi, dtype=float)
    true = np.asarray(true_pi, dtype=float)
    M = len(perm)
    est = np.concatenate([est, np.zeros(M - est.size)])
    true = np.concatenate([true, np.zeros(M - true.size)])
    return float(np.sqrt(np.mean((est[perm] - true) ** 2)))


def recovery_metrics(model, truth, X=None):
    """Aligned coefficient and probability RMSE against a ``SimTruth``.

    Compares every coefficient key shared by the fit and the truth.
    """
    pi, coefs = component_summaries(model, X)
    keys = [k for k in truth.true_coefs[0] if k in coefs[0]]
    if not keys:
        raise ConfigError("fitted model and truth share no coefficient keys")
    est_coef = np.vstack([np.concatenate([np.ravel(c[k]) for k in keys]) for c in coefs])
    true_coef = np.vstack([np.concatenate([np.ravel(c[k]) for k in keys])
                           for c in truth.true_coefs])
    if est_coef.shape[1] != true_coef.shape[1]:
        raise ConfigError("coefficient vectors of fit and truth have different lengths")
    est_sum = np.column_stack([pi, est_coef])
    true_sum = np.column_stack([truth.true_pi, true_coef])
    perm = align_components(est_sum, true_sum)
    return {
        "coef_rmse": coef_rmse(est_coef, true_coef, perm),
        "pi_rmse": pi_rmse(pi, truth.true_pi, perm),
        "alignment": [int(i) for i in perm],
        "padded": est_sum.shape[0] != true_sum.shape[0],
    }


def smooth_recovery(model, truth, grid_size=101, min_pi=0.05):
    """Pointwise RMSE of fitted location smooths against the generating functions.

    Each true function is centred over the training sample, matching the
    sum-to-zero constraint of the fitted term, and compared on a grid with the
    other features at their means. Components are aligned on (pi, fitted level).
    The headline value per function pools the aligned components whose mean
    probability exceeds ``min_pi``; components the fit has switched off carry no
    data and their smooths are unidentified. ``all_<f>`` pools every component
    and ``per_component`` lists the individual RMSEs.
    """
    from .simgen import ADDITIVE_FUNCTIONS

    X = truth.X
    pi = model.forward(X).pi.mean(axis=0)
    levels = []
    for comp in model.components:
        icpt = [t.weights[0] for t in comp.predictors["loc"] if isinstance(t, Intercept)]
        levels.append(icpt[0] if icpt else 0.0)
    offset = sum(np.mean(f(X[:, j])) for j, f in enumerate(ADDITIVE_FUNCTIONS))
    true_levels = [c["intercept"][0] + offset for c in truth.true_coefs]
    M_true = len(truth.true_pi)
    perm = align_components(np.column_stack([pi, levels]),
                            np.column_stack([truth.true_pi, true_levels]))
    matched = [int(perm[i]) for i in range(M_true) if perm[i] < model.n_components]
    active = [m for m in matched if pi[m] > min_pi]
    if not active:
        raise ConfigError(f"no aligned component has mean probability above {min_pi}")
    out = {"per_component": {}}
    for j, f in enumerate(ADDITIVE_FUNCTIONS):
        x = X[:, j]
        grid = np.linspace(x.min(), x.max(), grid_size)
        target = f(grid) - np.mean(f(x))
        Xg = np.tile(X.mean(axis=0), (grid_size, 1))
        Xg[:, j] = grid
        sq = {}
        for m in matched:
            terms = [t for t in model.components[m].predictors["loc"]
                     if isinstance(t, Spline) and t.feature == j]
            if not terms:
                raise ConfigError(f"no spline term for feature {j} in the location predictor")
            fitted = sum(t.evaluate(Xg) for t in terms)
            sq[m] = float(np.mean((fitted - target) ** 2))
        name = f"f{j + 1}"
        out[name] = float(np.sqrt(np.mean([sq[m] for m in active])))
        out[f"all_{name}"] = float(np.sqrt(np.mean(list(sq.values()))))
        out["per_component"][name] = [float(np.sqrt(sq[m])) for m in matched]
    out["alignment"] = [int(i) for i in perm]
    out["active"] = active
    return out


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricReport:
    """Long-format metric rows with per-metric mean and standard deviation."""

    rows: list = field(default_factory=list)

    def add(self, replication, metric, value):
        self.rows.append({"replication": int(replication), "metric": metric,
                          "value": float(value)})

    def summary(self):
        out = {}
        for metric in dict.fromkeys(r["metric"] for r in self.rows):
            vals = np.array([r["value"] for r in self.rows if r["metric"] == metric])
            out[metric] = {"mean": float(np.nanmean(vals)),
                           "sd": float(np.nanstd(vals, ddof=1)) if vals.size > 1 else 0.0,
                           "n": int(vals.size)}
        return out


# ---------------------------------------------------------------------------
# entropy path


@dataclass
class PathRow:
    xi: float
    pi: np.ndarray
    risk: float
    diverged: bool = False


def entropy_path(model, X, y, xi_grid, config):
    """Fit along an ascending grid of entropy weights, warm-starting each fit.

    ``model`` is a mixture with the over-specified number of components; when
    not yet set up it is initialised from ``config.seed``. Each row records the
    mean mixture probabilities sorted in decreasing order.
    """
    xi_grid = [float(v) for v in xi_grid]
    if any(b < a for a, b in zip(xi_grid, xi_grid[1:])):
        raise ConfigError("xi_grid must be sorted ascending")
    rows = []
    for k, xi in enumerate(xi_grid):
        model.xi = xi
        backup = model.get_weights() if model.is_setup else None
        try:
            fit = train(model, X, y, replace(config, seed=config.seed + k, restarts=1))
        except DivergenceError as exc:
            logger.warning("path fit at xi=%g diverged: %s", xi, exc)
            if backup is not None:
                model.set_weights(backup)
            M = model.n_components
            rows.append(PathRow(xi, np.full(M, np.nan), float("nan"), True))
            continue
        pi = np.sort(fit.params.pi.mean(axis=0))[::-1]
        rows.append(PathRow(xi, pi, fit.final_risk))
    return rows


def count_active(pi, threshold=0.05):
    return int(np.sum(np.asarray(pi) > threshold))
