"""Finite mixtures of distributional regressions.

Each component owns one additive predictor per distribution parameter; the
mixture weights come from one gating predictor per component passed through a
softmax (or the ordered simplex transform). All weights live in one flat
vector so optimizers can treat the model as a single parameter array.
"""

import copy
from dataclasses import dataclass

import numpy as np

from .distributions import OrderedSimplex, SoftmaxGroup, get_family, get_transform
from .exceptions import ConfigError, DataError, StateError
from .predictors import Intercept, PenaltyConfig, Predictor, penalty_grad, penalty_value, term_from_dict


def _as_predictor(spec):
    if isinstance(spec, Predictor):
        return spec
    terms = [t if not isinstance(t, dict) else term_from_dict(t) for t in spec]
    return Predictor(terms)


class Component:
    """One mixture component: a family plus a predictor and transform per parameter."""

    def __init__(self, family, predictors=None, transforms=None):
        self.family = get_family(family)
        names = self.family.param_names
        predictors = predictors or {}
        if not isinstance(predictors, dict):
            predictors = dict(zip(names, predictors))
        unknown = set(predictors) - set(names)
        if unknown:
            raise ConfigError(f"{self.family.name} has no parameter(s) {sorted(unknown)}")
        self.predictors = {
            name: _as_predictor(predictors.get(name, [Intercept()])) for name in names}
        transforms = transforms or {}
        defaults = dict(zip(names, self.family.default_transforms))
        self.transforms = {name: get_transform(transforms.get(name, defaults[name]))
                           for name in names}
        for name, t in self.transforms.items():
            if t.groupwise:
                raise ConfigError(f"parameter {name!r} needs an elementwise transform")

    @property
    def param_names(self):
        return self.family.param_names


@dataclass
class ParamField:
    """Mixture probabilities ``pi`` (n, M), per-component parameters and raw predictors."""

    pi: np.ndarray
    theta: list
    raw: np.ndarray


@dataclass
class DesignCache:
    """Design of a data matrix: stacked linear columns plus dense-term inputs."""

    D: np.ndarray
    dense: list

    @property
    def n(self):
        return self.D.shape[0]

    def rows(self, idx):
        return DesignCache(self.D[idx], [H[idx] for H in self.dense])


class MixtureModel:
    """Mixture of ``M`` distributional regressions with additive predictors.

    Parameters
    ----------
    components : list of Component
    gating : list of terms, Predictor, or list of those (one per component)
        A single spec is copied for every component. Defaults to an intercept.
    gating_transform : {"softmax", "ordered"}
    xi : float
        Entropy penalty weight (per observation).
    rho : float
        Shared L1 weight for terms flagged ``l1``.
    """

    def __init__(self, components, gating=None, gating_transform="softmax", xi=0.0, rho=0.0):
        self.components = list(components)
        if not self.components:
            raise ConfigError("a mixture needs at least one component")
        supports = {c.family.support for c in self.components}
        if len(supports) > 1:
            raise ConfigError(f"components have incompatible supports: {sorted(supports)}")
        M = len(self.components)
        if gating is None:
            gating = [Intercept()]
        if isinstance(gating, (list, tuple)) and gating and isinstance(gating[0], (list, tuple, Predictor)):
            if len(gating) != M:
                raise ConfigError("need one gating predictor per component")
            self.gating = [_as_predictor(g) for g in gating]
        else:
            template = _as_predictor(gating)
            self.gating = [copy.deepcopy(template) for _ in range(M)]
        self.gating_transform = get_transform(gating_transform)
        if not isinstance(self.gating_transform, (SoftmaxGroup, OrderedSimplex)):
            raise ConfigError("gating transform must be 'softmax' or 'ordered'")
        if xi < 0:
            raise ConfigError("xi must be non-negative")
        self.xi = float(xi)
        self.rho = float(rho)
        self.penalties = None
        self.weights = None
        self._terms = None
        self._label_terms()

    # -- structure ---------------------------------------------------------
    @property
    def n_components(self):
        return len(self.components)

    @property
    def family(self):
        return self.components[0].family

    def predictor_slots(self):
        """``(name, predictor)`` pairs in flat order: component parameters, then gating."""
        slots = []
        for m, comp in enumerate(self.components):
            for name in comp.param_names:
                slots.append((f"c{m}.{name}", comp.predictors[name]))
        for m, g in enumerate(self.gating):
            slots.append((f"gate{m}", g))
        return slots

    @property
    def terms(self):
        if self._terms is None:
            self._terms = [t for _, p in self.predictor_slots() for t in p]
        return self._terms

    def _label_terms(self):
        for name, pred in self.predictor_slots():
            for i, t in enumerate(pred):
                t.label = f"{name}.{t.kind}{i}"

    @property
    def is_setup(self):
        return self.weights is not None

    def _check_setup(self):
        if not self.is_setup:
            raise StateError("model must be set up on training data first (call setup)")

    def setup(self, X, knots=None):
        """Fix data-dependent term state on the training design and allocate weights.

        ``knots`` optionally maps spline labels to stored knot vectors.
        """
        X = np.asarray(X, dtype=float)
        knots = knots or {}
        for t in self.terms:
            if t.kind == "spline":
                t.setup(X, knots=knots.get(t.label))
            else:
                t.setup(X)
                if X.ndim != 2 or (t.features and max(t.features) >= X.shape[1]):
                    raise DataError(f"term {t.label!r} needs feature {max(t.features)}; "
                                    f"input has {X.shape[1] if X.ndim == 2 else 0} columns")
        self._build_layout()
        self.penalties = PenaltyConfig.from_terms(self.terms, rho=self.rho)
        self._penalised = bool(self.penalties.quad) or (self.rho > 0 and bool(self.penalties.l1))
        return self

    def _build_layout(self):
        slots = self.predictor_slots()
        self.n_weights = sum(p.n_weights for _, p in slots)
        self.weights = np.zeros(self.n_weights)
        self.term_slices = {}
        col_pred, lin_idx, dense = [], [], []
        pos = 0
        for j, (_, pred) in enumerate(slots):
            for t in pred:
                sl = slice(pos, pos + t.n_weights)
                self.term_slices[t.label] = sl
                t.weights = self.weights[sl]
                if t.linear:
                    col_pred += [j] * t.n_weights
                    lin_idx += list(range(sl.start, sl.stop))
                else:
                    dense.append((j, t, sl))
                pos = sl.stop
        self._col_pred = np.asarray(col_pred, dtype=int)
        self._lin_idx = np.asarray(lin_idx, dtype=int)
        self._dense = dense
        self._n_slots = len(slots)
        # first raw column of each component's parameters, and of the gating block
        starts, j = [], 0
        for comp in self.components:
            starts.append(j)
            j += comp.family.param_count
        self._param_start = starts
        self._gate_start = j

    def set_weights(self, w):
        self._check_setup()
        w = np.asarray(w, dtype=float)
        if w.shape != self.weights.shape:
            raise ConfigError(f"expected {self.weights.size} weights, got {w.size}")
        self.weights[...] = w

    def get_weights(self):
        self._check_setup()
        return self.weights.copy()

    def weights_by_term(self):
        return {label: self.weights[sl].copy() for label, sl in self.term_slices.items()}

    def resolved_lambdas(self):
        return {label: q.lam for label, q in self.penalties.quad.items()}

    def knots(self):
        return {t.label: t.knots for t in self.terms if t.kind == "spline"}

    # -- initialisation ----------------------------------------------------
    def init_weights(self, rng, y=None):
        """Small random structured weights, data-informed parameter intercepts."""
        self._check_setup()
        for t in self.terms:
            self.weights[self.term_slices[t.label]] = t.init_weights(rng)
        if y is None:
            return self
        y = np.asarray(y, dtype=float)
        for comp in self.components:
            refs = init_values(comp.family, y)
            for name in comp.param_names:
                first = next(iter(comp.predictors[name]))
                if isinstance(first, Intercept):
                    raw = comp.transforms[name].inverse(refs[name])
                    self.weights[self.term_slices[first.label]] = raw
        return self

    # -- evaluation --------------------------------------------------------
    def design(self, X):
        self._check_setup()
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        cols = []
        for _, pred in self.predictor_slots():
            for t in pred:
                if t.linear:
                    cols.append(t.design(X))
        D = np.hstack(cols) if cols else np.zeros((X.shape[0], 0))
        return DesignCache(np.ascontiguousarray(D), [t.inputs(X) for _, t, _ in self._dense])

    def _cache(self, X):
        return X if isinstance(X, DesignCache) else self.design(X)

    def _raw(self, cache, keep_dense=False):
        w = self.weights
        Wb = np.zeros((self._lin_idx.size, self._n_slots))
        Wb[np.arange(self._lin_idx.size), self._col_pred] = w[self._lin_idx]
        raw = cache.D @ Wb
        dense_cache = []
        for (j, t, sl), H in zip(self._dense, cache.dense):
            out, c = t.forward(H, w[sl])
            raw[:, j] += out
            dense_cache.append(c)
        return (raw, dense_cache) if keep_dense else raw

    def _params(self, raw):
        theta = []
        for comp, s in zip(self.components, self._param_start):
            th = np.empty((raw.shape[0], comp.family.param_count))
            for k, name in enumerate(comp.param_names):
                th[:, k] = comp.transforms[name].apply(raw[:, s + k])
            theta.append(th)
        gate_raw = raw[:, self._gate_start:]
        return theta, gate_raw

    def forward(self, X):
        self._check_setup()
        raw = self._raw(self._cache(X))
        theta, gate_raw = self._params(raw)
        return ParamField(self.gating_transform.apply(gate_raw), theta, raw)

    def check_outcome(self, y):
        y = np.asarray(y, dtype=float).ravel()
        for comp in self.components:
            y = comp.family.check_support(y)
        return y

    def _log_terms(self, theta, gate_raw, y):
        logf = np.empty((y.shape[0], len(theta)))
        for m, (comp, th) in enumerate(zip(self.components, theta)):
            logf[:, m] = comp.family._logpdf(y, th)
        logpi = self.gating_transform.log_apply(gate_raw)
        return logpi, logf

    def _lse(self, a):
        amax = a.max(axis=1, keepdims=True)
        amax = np.where(np.isfinite(amax), amax, 0.0)
        return (amax + np.log(np.exp(a - amax).sum(axis=1, keepdims=True)))[:, 0]

    def log_likelihood_rows(self, X, y):
        self._check_setup()
        y = self.check_outcome(y)
        theta, gate_raw = self._params(self._raw(self._cache(X)))
        logpi, logf = self._log_terms(theta, gate_raw, y)
        return self._lse(logpi + logf)

    def nll(self, X, y):
        """Negative log-likelihood summed over observations."""
        return float(-np.sum(self.log_likelihood_rows(X, y)))

    def responsibilities(self, X, y):
        self._check_setup()
        y = self.check_outcome(y)
        theta, gate_raw = self._params(self._raw(self._cache(X)))
        logpi, logf = self._log_terms(theta, gate_raw, y)
        a = logpi + logf
        return np.exp(a - self._lse(a)[:, None])

    def penalty(self):
        self._check_setup()
        return penalty_value(self.terms, self.penalties)

    def entropy(self, pi):
        """Shannon entropy of the mean mixture probabilities (0 log 0 = 0)."""
        pbar = pi.mean(axis=0)
        pos = pbar > 0
        return float(-np.sum(pbar[pos] * np.log(pbar[pos])))

    def penalized_risk(self, X, y):
        """nll + penalties + ``xi * n * H(mean pi)``."""
        return self.objective(X, y)[0]

    def grad_nll(self, X, y):
        return self.objective(X, y, grad=True, penalties=False, entropy=False)[1]

    def grad_penalized_risk(self, X, y):
        return self.objective(X, y, grad=True)[1]

    def objective(self, X, y, rows=None, grad=False, penalties=True, entropy=True,
                  penalty_scale=1.0, checked=False):
        """Risk (and optionally its gradient) on all rows or the subset ``rows``.

        ``penalty_scale`` multiplies the weight penalties; mini-batch training
        passes ``batch / n`` so batch risks are unbiased for the scaled full risk.
        The entropy term is weighted by the number of rows evaluated.
        """
        self._check_setup()
        cache = self._cache(X)
        if not checked:
            y = self.check_outcome(y)
        if rows is not None:
            cache = cache.rows(rows)
            y = y[rows]
        n = cache.n
        raw, dense_cache = self._raw(cache, keep_dense=True)
        theta, gate_raw = self._params(raw)
        logpi, logf = self._log_terms(theta, gate_raw, y)
        a = logpi + logf
        lse = self._lse(a)
        risk = -float(np.sum(lse))
        pi = None
        use_entropy = entropy and self.xi > 0
        if use_entropy:
            pi = self.gating_transform.apply(gate_raw)
            risk += self.xi * n * self.entropy(pi)
        penalties = penalties and self._penalised
        if penalties:
            risk += penalty_scale * penalty_value(self.terms, self.penalties)
        if not grad:
            return risk, None

        gamma = np.exp(a - lse[:, None])
        G = np.empty_like(raw)
        for m, (comp, th, s) in enumerate(zip(self.components, theta, self._param_start)):
            dlogf = comp.family._grad(y, th)
            for k, name in enumerate(comp.param_names):
                h = comp.transforms[name].derivative(raw[:, s + k])
                G[:, s + k] = -gamma[:, m] * dlogf[:, k] * h
        gt = self.gating_transform
        if isinstance(gt, SoftmaxGroup):
            if pi is None:
                pi = gt.apply(gate_raw)
            G_gate = pi - gamma
        else:
            G_gate = gt.vjp(gate_raw, -gamma / gt.apply(gate_raw))
        if use_entropy:
            pbar = np.maximum(pi.mean(axis=0), 1e-300)
            dpi = np.broadcast_to(-self.xi * (np.log(pbar) + 1.0), pi.shape)
            G_gate = G_gate + gt.vjp(gate_raw, dpi)
        G[:, self._gate_start:] = G_gate

        g = np.zeros(self.n_weights)
        g[self._lin_idx] = np.einsum("ij,ij->j", cache.D, G[:, self._col_pred])
        for (j, t, sl), c in zip(self._dense, dense_cache):
            g[sl] = t.backward(c, G[:, j], self.weights[sl])
        if penalties:
            for t, pg in zip(self.terms, penalty_grad(self.terms, self.penalties)):
                g[self.term_slices[t.label]] += penalty_scale * pg
        return risk, g

    def predict_mean(self, X):
        field = self.forward(X)
        means = np.column_stack([comp.family.mean(th)
                                 for comp, th in zip(self.components, field.theta)])
        return np.sum(field.pi * means, axis=1)


def init_values(family, y):
    """Reference parameter values used to initialise intercepts."""
    y = np.asarray(y, dtype=float)
    med = float(np.median(y))
    mad = 1.4826 * float(np.median(np.abs(y - med)))
    if not mad > 0:
        mad = float(np.std(y)) or 1.0
    name = family.name
    if name == "poisson":
        return {"rate": max(float(np.mean(y)), 1e-3)}
    if name == "beta":
        m, v = float(np.mean(y)), float(np.var(y))
        common = m * (1 - m) / v - 1 if v > 0 else -1
        if not (0 < m < 1) or common <= 0:
            return {"c0": 1.0, "c1": 1.0}
        return {"c0": m * common, "c1": (1 - m) * common}
    return {"loc": med, "scale": mad}


# module-level functional surface ---------------------------------------------


def forward(model, X):
    return model.forward(X)


def nll(model, X, y):
    return model.nll(X, y)


def responsibilities(model, X, y):
    return model.responsibilities(X, y)


def grad_nll(model, X, y):
    return model.grad_nll(X, y)


def penalized_risk(model, X, y):
    return model.penalized_risk(X, y)
