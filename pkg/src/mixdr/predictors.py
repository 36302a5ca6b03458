"""Additive predictors: terms, spline bases, penalties and smoothing calibration.

A predictor is a list of terms whose contributions are summed. Intercept,
linear and spline terms are linear in their weights and expose a design
matrix; dense terms are small fully connected networks evaluated on a subset
of the features.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .exceptions import ConfigError, DataError, NumericError, StateError


# ---------------------------------------------------------------------------
# bases and penalties


def spline_knots(x, num_basis, degree):
    """Knot vector with interior knots at empirical quantiles of ``x``.

    Boundary knots are repeated ``degree + 1`` times. A constant ``x`` gets a
    symmetric padded range of width one.
    """
    if num_basis < degree + 2:
        raise ConfigError(f"num_basis={num_basis} must be >= degree + 2 = {degree + 2}")
    x = np.asarray(x, dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise DataError("spline input must be non-empty and finite")
    lo, hi = float(x.min()), float(x.max())
    n_inner = num_basis - degree - 1
    if hi - lo <= 1e-12 * max(1.0, abs(lo)):
        lo, hi = lo - 0.5, hi + 0.5
        inner = np.linspace(lo, hi, n_inner + 2)[1:-1]
    else:
        inner = np.quantile(x, np.linspace(0.0, 1.0, n_inner + 2)[1:-1])
        gaps = np.diff(np.concatenate([[lo], inner, [hi]]))
        if np.any(gaps <= 1e-10 * (hi - lo)):
            # heavily tied data: fall back to equally spaced knots
            inner = np.linspace(lo, hi, n_inner + 2)[1:-1]
    return np.concatenate([np.full(degree + 1, lo), inner, np.full(degree + 1, hi)])


def bspline_design(x, knots, degree):
    x = np.asarray(x, dtype=float)
    lo, hi = knots[degree], knots[-degree - 1]
    xc = np.clip(x, lo, hi)
    return BSpline.design_matrix(xc, knots, degree).toarray()


def bspline_basis(x, num_basis, degree=3):
    """B-spline basis matrix of shape ``(n, num_basis)``; rows sum to one."""
    knots = spline_knots(x, num_basis, degree)
    return bspline_design(x, knots, degree)


def difference_penalty(num_basis, order):
    """``D.T @ D`` for the ``order``-th difference matrix ``D``."""
    if not 0 <= order < num_basis:
        raise ConfigError(f"penalty order {order} must be < num_basis={num_basis}")
    d = np.diff(np.eye(num_basis), n=order, axis=0)
    return d.T @ d


@dataclass
class SumToZero:
    """Null-space map removing the sample-mean direction from a basis.

    ``basis @ null`` has columns summing to zero over the construction sample,
    and ``null @ w_constrained`` maps constrained weights back to the
    original basis.
    """

    null: np.ndarray

    def constrain(self, basis):
        return basis @ self.null

    def back_map(self, weights):
        return self.null @ weights


def sum_to_zero(basis, label="spline"):
    """Constrain ``basis`` so each column sums to zero over its rows.

    Returns the constrained basis of shape ``(n, k - 1)`` and the back-map.
    """
    basis = np.asarray(basis, dtype=float)
    k = basis.shape[1]
    if np.linalg.matrix_rank(basis) < k:
        raise NumericError(f"term {label!r}: basis is rank deficient on the data")
    c = basis.sum(axis=0)[:, None]
    q, _ = np.linalg.qr(c, mode="complete")
    stz = SumToZero(q[:, 1:])
    return stz.constrain(basis), stz


# ---------------------------------------------------------------------------
# degrees of freedom


class _DfCurve:
    """df(lambda) = sum_i 1 / (1 + lambda * s_i) via a Demmler-Reinsch basis."""

    def __init__(self, design, penalty):
        design = np.asarray(design, dtype=float)
        penalty = np.asarray(penalty, dtype=float)
        p = design.shape[1]
        if np.linalg.matrix_rank(design) < p:
            raise ConfigError("design must have full column rank for df calibration")
        r = np.linalg.qr(design, mode="r")
        rinv = np.linalg.inv(r)
        s = np.linalg.eigvalsh(rinv.T @ penalty @ rinv)
        tol = max(s.max(), 0.0) * p * 1e-10
        self.s = np.where(s > tol, s, 0.0)
        self.rank = p
        self.null_dim = int(np.sum(self.s == 0.0))

    def __call__(self, lam):
        if np.isinf(lam):
            return float(self.null_dim)
        return float(np.sum(1.0 / (1.0 + lam * self.s)))


def degrees_of_freedom(design, penalty, lam):
    """Effective degrees of freedom ``trace(X (X'X + lam P)^-1 X')``."""
    return _DfCurve(design, penalty)(lam)


def df_to_lambda(design, penalty, target_df, tol=1e-6):
    """Smoothing parameter giving ``target_df`` effective degrees of freedom.

    Bisection on ``log(lambda)`` starting from ``[-12, 12]``; the bracket is
    widened when the target lies outside it but is still attainable.
    """
    curve = _DfCurve(design, penalty)
    df_min, df_max = float(curve.null_dim), float(curve.rank)
    if not df_min < target_df <= df_max:
        raise ConfigError(
            f"target df {target_df} not attainable; range is ({df_min}, {df_max}]")
    if target_df >= df_max - 1e-12:
        return 0.0
    lo, hi = -12.0, 12.0
    while curve(np.exp(lo)) < target_df and lo > -200:
        lo -= 12.0
    while curve(np.exp(hi)) > target_df and hi < 200:
        hi += 12.0
    mid = 0.5 * (lo + hi)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        val = curve(np.exp(mid))
        if abs(val - target_df) < 0.01 * tol:
            break
        if val > target_df:
            lo = mid
        else:
            hi = mid
    lam = float(np.exp(mid))
    if abs(curve(lam) - target_df) >= tol:
        raise NumericError(f"df bisection did not converge for target {target_df}")
    return lam


# ---------------------------------------------------------------------------
# terms


def _check_features(X, features):
    if X.ndim != 2:
        raise DataError("feature matrix must be 2-dimensional")
    if len(features) and max(features) >= X.shape[1]:
        raise DataError(
            f"feature index {max(features)} missing; input has {X.shape[1]} columns")


class Term:
    """Base class. ``weights`` is set by the owning model (often a view)."""

    kind = None
    linear = True

    def __init__(self, l1=False):
        self.l1 = l1
        self.label = None
        self.weights = None

    @property
    def features(self):
        return []

    def setup(self, X):
        return self

    def design(self, X):
        raise NotImplementedError

    def penalty_matrix(self):
        return None

    def evaluate(self, X):
        X = np.asarray(X, dtype=float)
        return self.design(X) @ self.weights

    def init_weights(self, rng):
        return rng.normal(0.0, 0.01, self.n_weights)

    def to_dict(self):
        raise NotImplementedError


class Intercept(Term):
    kind = "intercept"
    n_weights = 1

    def design(self, X):
        return np.ones((np.asarray(X).shape[0], 1))

    def init_weights(self, rng):
        return np.zeros(1)

    def to_dict(self):
        return {"type": "intercept"}


class Linear(Term):
    kind = "linear"

    def __init__(self, features, l1=False, lam=None):
        super().__init__(l1=l1)
        self._features = [int(f) for f in features]
        if not self._features:
            raise ConfigError("linear term needs at least one feature")
        self.lam = lam

    @property
    def features(self):
        return self._features

    @property
    def n_weights(self):
        return len(self._features)

    def design(self, X):
        X = np.asarray(X, dtype=float)
        _check_features(X, self._features)
        return X[:, self._features]

    def penalty_matrix(self):
        if self.lam is None:
            return None
        return np.eye(self.n_weights)

    def to_dict(self):
        out = {"type": "linear", "features": self._features}
        if self.l1:
            out["l1"] = True
        if self.lam is not None:
            out["lam"] = self.lam
        return out


class Spline(Term):
    """Penalised B-spline smooth of a single feature.

    Knots and the sum-to-zero map are fixed by ``setup`` on the training
    sample. ``lam`` may be given directly or resolved from ``df``.
    """

    kind = "spline"

    def __init__(self, feature, num_basis=10, degree=3, penalty_order=2,
                 sum_to_zero=True, lam=None, df=None):
        super().__init__()
        if num_basis < degree + 2:
            raise ConfigError(f"num_basis={num_basis} must be >= degree + 2")
        if penalty_order not in (1, 2):
            raise ConfigError("penalty_order must be 1 or 2")
        if lam is not None and df is not None:
            raise ConfigError("give either lam or df for a spline, not both")
        self.feature = int(feature)
        self.num_basis = num_basis
        self.degree = degree
        self.penalty_order = penalty_order
        self.sum_to_zero = sum_to_zero
        self.lam = lam
        self.df = df
        self.knots = None
        self.constraint = None

    @property
    def features(self):
        return [self.feature]

    @property
    def n_weights(self):
        return self.num_basis - 1 if self.sum_to_zero else self.num_basis

    def setup(self, X, knots=None):
        X = np.asarray(X, dtype=float)
        _check_features(X, [self.feature])
        x = X[:, self.feature]
        self.knots = (np.asarray(knots, dtype=float) if knots is not None
                      else spline_knots(x, self.num_basis, self.degree))
        basis = bspline_design(x, self.knots, self.degree)
        if self.sum_to_zero:
            design, self.constraint = sum_to_zero(basis, self.label or f"s(x{self.feature})")
        else:
            design = basis
        if self.df is not None:
            self.lam = df_to_lambda(design, self.penalty_matrix(), self.df)
        return self

    def basis(self, X):
        if self.knots is None:
            raise StateError(f"spline term {self.label!r} used before setup")
        X = np.asarray(X, dtype=float)
        _check_features(X, [self.feature])
        return bspline_design(X[:, self.feature], self.knots, self.degree)

    def design(self, X):
        b = self.basis(X)
        return self.constraint.constrain(b) if self.sum_to_zero else b

    def penalty_matrix(self):
        p = difference_penalty(self.num_basis, self.penalty_order)
        if self.sum_to_zero:
            if self.constraint is None:
                raise StateError(f"spline term {self.label!r} used before setup")
            z = self.constraint.null
            p = z.T @ p @ z
        return p

    def to_dict(self):
        out = {"type": "spline", "feature": self.feature, "num_basis": self.num_basis,
               "degree": self.degree, "penalty_order": self.penalty_order,
               "sum_to_zero": self.sum_to_zero}
        if self.df is not None:
            out["df"] = self.df
        elif self.lam is not None:
            out["lam"] = self.lam
        return out


_ACTIVATIONS = {
    "relu": (lambda a: np.maximum(a, 0.0), lambda a: (a > 0).astype(float)),
    "tanh": (np.tanh, lambda a: 1.0 - np.tanh(a) ** 2),
    "identity": (lambda a: a, np.ones_like),
}


class Dense(Term):
    """Fully connected network on ``features``; final width must be 1."""

    kind = "dense"
    linear = False

    def __init__(self, features, widths=(4, 1), activation="relu", l1=False):
        super().__init__(l1=l1)
        self._features = [int(f) for f in features]
        self.widths = [int(w) for w in widths]
        if not self._features:
            raise ConfigError("dense term needs at least one feature")
        if not self.widths or min(self.widths) < 1 or self.widths[-1] != 1:
            raise ConfigError("dense widths must be >= 1 and end in 1")
        if activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.activation = activation

    @property
    def features(self):
        return self._features

    @property
    def shapes(self):
        dims = [len(self._features)] + self.widths
        return [(dims[i], dims[i + 1]) for i in range(len(self.widths))]

    @property
    def n_weights(self):
        return sum(a * b + b for a, b in self.shapes)

    def unpack(self, weights):
        layers, pos = [], 0
        for a, b in self.shapes:
            W = weights[pos:pos + a * b].reshape(a, b)
            pos += a * b
            layers.append((W, weights[pos:pos + b]))
            pos += b
        return layers

    def init_weights(self, rng):
        parts = []
        for a, b in self.shapes:
            limit = np.sqrt(6.0 / (a + b))
            parts += [rng.uniform(-limit, limit, a * b), np.zeros(b)]
        return np.concatenate(parts)

    def inputs(self, X):
        X = np.asarray(X, dtype=float)
        _check_features(X, self._features)
        return X[:, self._features]

    def forward(self, H, weights=None):
        """Returns the output column and the activations needed by ``backward``."""
        act, _ = _ACTIVATIONS[self.activation]
        layers = self.unpack(self.weights if weights is None else weights)
        cache = [H]
        for i, (W, b) in enumerate(layers):
            a = H @ W + b
            if i < len(layers) - 1:
                cache.append(a)
                H = act(a)
                cache.append(H)
            else:
                H = a
        return H[:, 0], cache

    def backward(self, cache, grad_out, weights=None):
        """Gradient w.r.t. the flat weights given d(loss)/d(output)."""
        _, dact = _ACTIVATIONS[self.activation]
        layers = self.unpack(self.weights if weights is None else weights)
        g = grad_out[:, None]
        grads = []
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            H_in = cache[2 * i]
            grads.append((H_in.T @ g).ravel())
            grads.append(g.sum(axis=0))
            if i > 0:
                g = (g @ W.T) * dact(cache[2 * i - 1])
        # collected in reverse order as [dW_last, db_last, ...]
        out = []
        for j in range(len(grads) - 2, -1, -2):
            out += [grads[j], grads[j + 1]]
        return np.concatenate(out)

    def evaluate(self, X):
        return self.forward(self.inputs(X))[0]

    def to_dict(self):
        out = {"type": "dense", "features": self._features, "widths": self.widths,
               "activation": self.activation}
        if self.l1:
            out["l1"] = True
        return out


TERM_TYPES = {"intercept": Intercept, "linear": Linear, "spline": Spline, "dense": Dense}


def term_from_dict(spec):
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind not in TERM_TYPES:
        raise ConfigError(f"unknown term type {kind!r}; choose from {sorted(TERM_TYPES)}")
    try:
        return TERM_TYPES[kind](**spec)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} term options: {exc}") from None


class Predictor:
    """Sum of terms producing one raw (pre-transform) value per row."""

    def __init__(self, terms):
        self.terms = list(terms)
        if not self.terms:
            raise ConfigError("a predictor needs at least one term")

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    @property
    def n_weights(self):
        return sum(t.n_weights for t in self.terms)

    def setup(self, X):
        for t in self.terms:
            t.setup(X)
        return self

    def evaluate(self, X):
        X = np.asarray(X, dtype=float)
        return sum(t.evaluate(X) for t in self.terms)


def eval_predictor(terms, x_row):
    """Value of the additive predictor for one feature vector."""
    X = np.atleast_2d(np.asarray(x_row, dtype=float))
    return float(sum(t.evaluate(X)[0] for t in terms))


# ---------------------------------------------------------------------------
# penalties


@dataclass
class QuadraticPenalty:
    matrix: np.ndarray
    lam: float = None
    df: float = None


@dataclass
class PenaltyConfig:
    """L1 set with shared ``rho`` and quadratic penalties keyed by term label."""

    rho: float = 0.0
    l1: set = field(default_factory=set)
    quad: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rho < 0:
            raise ConfigError("rho must be non-negative")
        both = self.l1 & set(self.quad)
        if both:
            raise ConfigError(f"terms in both L1 and quadratic sets: {sorted(both)}")

    @classmethod
    def from_terms(cls, terms, rho=0.0):
        l1, quad = set(), {}
        for t in terms:
            if t.l1:
                l1.add(t.label)
            p = t.penalty_matrix() if t.linear else None
            if p is not None and (getattr(t, "lam", None) is not None
                                  or getattr(t, "df", None) is not None):
                quad[t.label] = QuadraticPenalty(p, getattr(t, "lam", None),
                                                 getattr(t, "df", None))
        return cls(rho=rho, l1=l1, quad=quad)


def _resolved(config, label):
    q = config.quad[label]
    if q.lam is None:
        raise StateError(f"smoothing parameter for term {label!r} is unresolved")
    return q


def penalty_value(terms, config):
    """``rho * sum|w|`` over the L1 set plus ``sum lam * w' P w`` over the quadratic set."""
    total = 0.0
    for t in terms:
        if t.label in config.l1:
            total += config.rho * np.abs(t.weights).sum()
        elif t.label in config.quad:
            q = _resolved(config, t.label)
            total += q.lam * float(t.weights @ q.matrix @ t.weights)
    return total


def penalty_grad(terms, config):
    """Per-term (sub)gradients of ``penalty_value``, in term order."""
    out = []
    for t in terms:
        if t.label in config.l1:
            out.append(config.rho * np.sign(t.weights))
        elif t.label in config.quad:
            q = _resolved(config, t.label)
            out.append(2.0 * q.lam * (q.matrix @ t.weights))
        else:
            out.append(np.zeros(t.n_weights))
    return out
