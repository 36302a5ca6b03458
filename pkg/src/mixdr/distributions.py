"""Parametric families and the transforms mapping raw predictors to parameters.

Every family works on vectorised inputs: ``y`` has shape ``(n,)`` and
``params`` has shape ``(n, k)`` (or ``(k,)`` for a single parameter vector).
"""

import numpy as np
from scipy.special import digamma, expit, gammaln

from .exceptions import ConfigError, DomainError, NumericError, SupportError

REAL = "real"
POSITIVE = "positive"
UNIT = "unit"

BETA_EPS = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


def _as_params(params, k):
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params[None, :]
    if params.shape[-1] != k:
        raise ConfigError(f"expected {k} parameters, got {params.shape[-1]}")
    return params


class Family:
    """A univariate parametric density.

    Subclasses define ``name``, ``param_names``, ``param_domains``, ``support``
    and the vectorised ``_logpdf`` / ``_grad`` kernels. Public methods validate
    inputs and then call the kernels.
    """

    name = None
    param_names = ()
    param_domains = ()
    default_transforms = ()
    support = REAL

    @property
    def param_count(self):
        return len(self.param_names)

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))

    # -- validation --------------------------------------------------------
    def check_params(self, params):
        params = _as_params(params, self.param_count)
        for j, (pname, dom) in enumerate(zip(self.param_names, self.param_domains)):
            col = params[:, j]
            if not np.all(np.isfinite(col)):
                raise DomainError(pname, f"parameter {pname!r} is not finite")
            if dom == POSITIVE and np.any(col <= 0):
                raise DomainError(pname, f"parameter {pname!r} must be positive")
            if dom == UNIT and np.any((col <= 0) | (col >= 1)):
                raise DomainError(pname, f"parameter {pname!r} must lie in (0, 1)")
        return params

    def check_support(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if not np.all(np.isfinite(y)):
            raise SupportError(f"{self.name}: observations must be finite")
        return y

    # -- densities ---------------------------------------------------------
    def logpdf(self, y, params):
        """Log-density of each observation under its parameter row."""
        y = self.check_support(y)
        params = self.check_params(params)
        return self._logpdf(y, params)

    def grad_logpdf(self, y, params):
        """Gradient of ``logpdf`` w.r.t. the parameters, shape ``(n, k)``."""
        y = self.check_support(y)
        params = self.check_params(params)
        return self._grad(y, params)

    def mean(self, params):
        raise NotImplementedError

    def sample(self, params, rng):
        raise NotImplementedError


class Normal(Family):
    name = "normal"
    param_names = ("loc", "scale")
    param_domains = (REAL, POSITIVE)
    default_transforms = ("identity", "softplus")

    def _logpdf(self, y, p):
        mu, sigma = p[:, 0], p[:, 1]
        z = (y - mu) / sigma
        return -0.5 * _LOG_2PI - np.log(sigma) - 0.5 * z * z

    def _grad(self, y, p):
        mu, sigma = p[:, 0], p[:, 1]
        r = y - mu
        s2 = sigma * sigma
        return np.column_stack([r / s2, (r * r - s2) / (s2 * sigma)])

    def mean(self, params):
        return _as_params(params, 2)[:, 0]

    def sample(self, params, rng):
        p = _as_params(params, 2)
        return rng.normal(p[:, 0], p[:, 1])


class Laplace(Family):
    name = "laplace"
    param_names = ("loc", "scale")
    param_domains = (REAL, POSITIVE)
    default_transforms = ("identity", "softplus")

    def _logpdf(self, y, p):
        mu, b = p[:, 0], p[:, 1]
        return -np.log(2.0 * b) - np.abs(y - mu) / b

    def _grad(self, y, p):
        mu, b = p[:, 0], p[:, 1]
        r = y - mu
        return np.column_stack([np.sign(r) / b, -1.0 / b + np.abs(r) / (b * b)])

    def mean(self, params):
        return _as_params(params, 2)[:, 0]

    def sample(self, params, rng):
        p = _as_params(params, 2)
        return rng.laplace(p[:, 0], p[:, 1])


class Logistic(Family):
    name = "logistic"
    param_names = ("loc", "scale")
    param_domains = (REAL, POSITIVE)
    default_transforms = ("identity", "softplus")

    def _logpdf(self, y, p):
        mu, s = p[:, 0], p[:, 1]
        z = (y - mu) / s
        return -z - np.log(s) - 2.0 * np.logaddexp(0.0, -z)

    def _grad(self, y, p):
        mu, s = p[:, 0], p[:, 1]
        z = (y - mu) / s
        t = np.tanh(0.5 * z)
        return np.column_stack([t / s, (z * t - 1.0) / s])

    def mean(self, params):
        return _as_params(params, 2)[:, 0]

    def sample(self, params, rng):
        p = _as_params(params, 2)
        return rng.logistic(p[:, 0], p[:, 1])


class Poisson(Family):
    name = "poisson"
    param_names = ("rate",)
    param_domains = (POSITIVE,)
    default_transforms = ("exp",)
    support = "counts"

    def check_support(self, y):
        y = super().check_support(y)
        if np.any(y < 0) or np.any(np.abs(y - np.round(y)) > 1e-9):
            raise SupportError("poisson: observations must be non-negative integers")
        return np.round(y)

    def _logpdf(self, y, p):
        lam = p[:, 0]
        return y * np.log(lam) - lam - gammaln(y + 1.0)

    def _grad(self, y, p):
        lam = p[:, 0]
        return (y / lam - 1.0)[:, None]

    def mean(self, params):
        return _as_params(params, 1)[:, 0]

    def sample(self, params, rng):
        p = _as_params(params, 1)
        return rng.poisson(p[:, 0]).astype(float)


class Beta(Family):
    """Beta distribution with shape parameters ``c0`` (alpha) and ``c1`` (beta).

    Observations on the closed unit interval are accepted and clipped into
    ``[BETA_EPS, 1 - BETA_EPS]`` before evaluation.
    """

    name = "beta"
    param_names = ("c0", "c1")
    param_domains = (POSITIVE, POSITIVE)
    default_transforms = ("softplus", "softplus")
    support = "unit"

    def check_support(self, y):
        y = super().check_support(y)
        if np.any((y < 0) | (y > 1)):
            raise SupportError("beta: observations must lie in [0, 1]")
        return np.clip(y, BETA_EPS, 1.0 - BETA_EPS)

    def _logpdf(self, y, p):
        a, b = p[:, 0], p[:, 1]
        return ((a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y)
                - gammaln(a) - gammaln(b) + gammaln(a + b))

    def _grad(self, y, p):
        a, b = p[:, 0], p[:, 1]
        dab = digamma(a + b)
        return np.column_stack([np.log(y) - digamma(a) + dab,
                                np.log1p(-y) - digamma(b) + dab])

    def mean(self, params):
        p = _as_params(params, 2)
        return p[:, 0] / (p[:, 0] + p[:, 1])

    def sample(self, params, rng):
        p = _as_params(params, 2)
        return rng.beta(p[:, 0], p[:, 1])


FAMILIES = {cls.name: cls for cls in (Normal, Laplace, Logistic, Poisson, Beta)}


def get_family(family):
    """Resolve a family name (case-insensitive) or instance."""
    if isinstance(family, Family):
        return family
    try:
        return FAMILIES[str(family).lower()]()
    except KeyError:
        raise ConfigError(
            f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None


def log_density(family, params, y):
    """Scalar log f(y | params)."""
    fam = get_family(family)
    return float(fam.logpdf(np.atleast_1d(y), np.atleast_1d(params))[0])


def grad_log_density(family, params, y):
    """Gradient of the scalar log-density w.r.t. ``params``."""
    fam = get_family(family)
    return fam.grad_logpdf(np.atleast_1d(y), np.atleast_1d(params))[0]


# ---------------------------------------------------------------------------
# transforms


def _check_finite(raw):
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise NumericError("transform input must be finite")
    return raw


class Transform:
    """Maps raw predictor values into a parameter domain.

    Elementwise transforms implement ``apply``, ``derivative`` and
    ``inverse``. Group transforms act along the last axis and expose the full
    ``jacobian`` plus a vector-Jacobian product ``vjp``.
    """

    name = None
    domain = REAL
    groupwise = False

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __call__(self, raw):
        return self.apply(raw)

    def vjp(self, raw, grad_out):
        return grad_out * self.derivative(raw)


class Identity(Transform):
    name = "identity"

    def apply(self, raw):
        return np.asarray(raw, dtype=float)

    def derivative(self, raw):
        return np.ones_like(np.asarray(raw, dtype=float))

    def inverse(self, value):
        return np.asarray(value, dtype=float)


class Exp(Transform):
    name = "exp"
    domain = POSITIVE

    def apply(self, raw):
        return np.exp(raw)

    def derivative(self, raw):
        return np.exp(raw)

    def inverse(self, value):
        return np.log(value)


class Softplus(Transform):
    name = "softplus"
    domain = POSITIVE

    def apply(self, raw):
        return np.logaddexp(0.0, raw)

    def derivative(self, raw):
        return expit(raw)

    def inverse(self, value):
        value = np.asarray(value, dtype=float)
        return value + np.log(-np.expm1(-value))


class Sigmoid(Transform):
    name = "sigmoid"
    domain = UNIT

    def apply(self, raw):
        return expit(raw)

    def derivative(self, raw):
        s = expit(raw)
        return s * (1.0 - s)

    def inverse(self, value):
        value = np.asarray(value, dtype=float)
        return np.log(value) - np.log1p(-value)


class SoftmaxGroup(Transform):
    name = "softmax"
    domain = "simplex"
    groupwise = True

    def apply(self, raw):
        e = np.exp(raw - raw.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)

    def log_apply(self, raw):
        shifted = raw - raw.max(axis=-1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def jacobian(self, raw):
        p = self.apply(raw)
        return p[..., :, None] * (np.eye(p.shape[-1]) - p[..., None, :])

    def vjp(self, raw, grad_out):
        p = self.apply(raw)
        return p * (grad_out - np.sum(p * grad_out, axis=-1, keepdims=True))

    def inverse(self, value):
        value = np.asarray(value, dtype=float)
        logv = np.log(value)
        return logv - logv.mean(axis=-1, keepdims=True)


class OrderedSimplex(Transform):
    """Ascending probabilities: softplus increments, cumulative sum, normalise."""

    name = "ordered"
    domain = "simplex"
    groupwise = True

    def apply(self, raw):
        c = np.cumsum(np.logaddexp(0.0, raw), axis=-1)
        return c / c.sum(axis=-1, keepdims=True)

    def log_apply(self, raw):
        return np.log(self.apply(raw))

    def jacobian(self, raw):
        raw = np.asarray(raw, dtype=float)
        m = raw.shape[-1]
        ds = expit(raw)
        c = np.cumsum(np.logaddexp(0.0, raw), axis=-1)
        total = c.sum(axis=-1)[..., None, None]
        p = c / c.sum(axis=-1, keepdims=True)
        mult = (m - np.arange(m)).astype(float)
        lower = np.tril(np.ones((m, m)))
        return ds[..., None, :] * (lower - p[..., :, None] * mult) / total

    def vjp(self, raw, grad_out):
        return np.einsum("...i,...ij->...j", grad_out, self.jacobian(raw))

    def inverse(self, value):
        value = np.asarray(value, dtype=float)
        # increments of the cumulative sums, up to the normalising constant
        inc = np.diff(value, axis=-1, prepend=0.0)
        inc = np.maximum(inc, 1e-12)
        return Softplus().inverse(inc)


TRANSFORMS = {cls.name: cls for cls in
              (Identity, Exp, Softplus, Sigmoid, SoftmaxGroup, OrderedSimplex)}


def get_transform(transform):
    if isinstance(transform, Transform):
        return transform
    try:
        return TRANSFORMS[str(transform).lower()]()
    except KeyError:
        raise ConfigError(
            f"unknown transform {transform!r}; choose from {sorted(TRANSFORMS)}") from None


def apply_transform(t, raw):
    return get_transform(t).apply(_check_finite(raw))


def transform_jacobian_diag(t, raw):
    """Diagonal derivative (elementwise transforms) or full Jacobian (group)."""
    t = get_transform(t)
    raw = _check_finite(raw)
    if t.groupwise:
        return t.jacobian(raw)
    return t.derivative(raw)
