"""Seeded simulation designs with ground truth for recovery experiments."""

from dataclasses import dataclass, field

import numpy as np

from .distributions import get_family
from .exceptions import ConfigError

# probability bounds for the linear mixture design
PI_BOUNDS_TWO = (0.061, 0.939)
PI_BOUNDS_MANY = (0.027, 0.309)
SPARSE_PI = (0.6077, 0.3923)
ADDITIVE_PI = {"equal": (1 / 3, 1 / 3, 1 / 3), "increasing": (0.1, 0.3, 0.6)}
MAX_DRAWS = 100_000


@dataclass
class SimTruth:
    """Generated data with the parameters that produced it.

    ``true_coefs`` is a list (one entry per component) of dicts mapping a
    parameter name to its coefficient vector: ``loc`` is ``[intercept,
    slopes...]`` and ``scale`` holds the constant scale value.
    """

    X: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    true_pi: np.ndarray
    true_coefs: list
    family: str
    generator: str
    seed: int
    true_smooths: np.ndarray = None
    options: dict = field(default_factory=dict)

    @property
    def n_components(self):
        return len(self.true_pi)

    def split(self, n_train):
        """Train/test views sharing the same truth."""
        head = slice(0, n_train)
        tail = slice(n_train, None)
        parts = []
        for sl in (head, tail):
            parts.append(SimTruth(
                X=self.X[sl], y=self.y[sl], labels=self.labels[sl], true_pi=self.true_pi,
                true_coefs=self.true_coefs, family=self.family, generator=self.generator,
                seed=self.seed,
                true_smooths=None if self.true_smooths is None else self.true_smooths[sl],
                options=self.options))
        return tuple(parts)

    def component_params(self, X):
        """Generating parameters per component evaluated at ``X`` (list of ``(n, k)`` arrays)."""
        X = np.asarray(X, dtype=float)
        fam = get_family(self.family)
        out = []
        if self.generator in ("linear", "sparse"):
            for c in self.true_coefs:
                loc = c["loc"][0] + X @ np.asarray(c["loc"][1:])
                out.append(np.column_stack([loc, np.full(X.shape[0], c["scale"][0])]))
            return out
        if self.generator == "additive":
            smooth = sum(f(X[:, j]) for j, f in enumerate(ADDITIVE_FUNCTIONS))
            scale = float(self.options["scale"])
            for c in self.true_coefs:
                eta = c["intercept"][0] + smooth
                if fam.name == "normal":
                    out.append(np.column_stack([eta, np.full(X.shape[0], scale)]))
                else:
                    out.append(np.exp(eta / scale)[:, None])
            return out
        raise ConfigError(f"no generating parameters for generator {self.generator!r}")

    def oracle_nll(self, X, y):
        """Negative log-likelihood of ``y`` under the generating mixture."""
        fam = get_family(self.family)
        y = np.asarray(y, dtype=float)
        logs = np.column_stack([np.log(p) + fam.logpdf(y, th)
                                for p, th in zip(self.true_pi, self.component_params(X))])
        amax = logs.max(axis=1, keepdims=True)
        return float(-np.sum(amax[:, 0] + np.log(np.exp(logs - amax).sum(axis=1))))

    @classmethod
    def from_dict(cls, d, X, y):
        """Rebuild from ``truth_dict`` output and the matching data."""
        try:
            return cls(X=np.asarray(X, dtype=float), y=np.asarray(y, dtype=float),
                       labels=np.full(len(y), -1), true_pi=np.asarray(d["true_pi"], dtype=float),
                       true_coefs=[{k: np.asarray(v, dtype=float) for k, v in c.items()}
                                   for c in d["true_coefs"]],
                       family=d["family"], generator=d["generator"], seed=d.get("seed", 0),
                       options=d.get("options", {}))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed truth record: {exc}") from None

    def truth_dict(self):
        return {
            "generator": self.generator,
            "family": self.family,
            "seed": self.seed,
            "true_pi": [float(p) for p in self.true_pi],
            "true_coefs": [{k: [float(v) for v in vec] for k, vec in comp.items()}
                           for comp in self.true_coefs],
            "options": self.options,
        }


def draw_pi(M, rng):
    """Uniform simplex draw, rejected until the design's bounds hold."""
    if M == 1:
        return np.ones(1)
    if M == 2:
        lo, hi = PI_BOUNDS_TWO
    else:
        lo, hi = PI_BOUNDS_MANY
        if not (M * lo <= 1.0 <= M * hi):
            return rng.dirichlet(np.ones(M))
    for _ in range(MAX_DRAWS):
        pi = rng.dirichlet(np.ones(M))
        if pi.min() >= lo and pi.max() <= hi:
            return pi
    raise ConfigError(f"no mixture probabilities within [{lo}, {hi}] after {MAX_DRAWS} draws")


def _sample_labels(pi, n, rng):
    return rng.choice(len(pi), size=n, p=pi)


def gen_linear_mixture(n, M, p_m, family="normal", seed=0, pi=None):
    """Mixture of linear location-scale regressions on standard normal features.

    Slopes are iid U(-2, 2), scales U(0.5, 2), the intercept is zero.
    """
    fam = get_family(family)
    if fam.name not in ("normal", "laplace", "logistic"):
        raise ConfigError(f"linear mixture needs a location-scale family, got {fam.name!r}")
    if n < 1 or M < 1 or p_m < 1:
        raise ConfigError("need n, M, p_m >= 1")
    rng = np.random.default_rng(seed)
    true_pi = draw_pi(M, rng) if pi is None else np.asarray(pi, dtype=float)
    betas = rng.uniform(-2.0, 2.0, size=(M, p_m))
    scales = rng.uniform(0.5, 2.0, size=M)
    X = rng.normal(size=(n, p_m))
    labels = _sample_labels(true_pi, n, rng)
    loc = np.einsum("ij,ij->i", X, betas[labels])
    y = fam.sample(np.column_stack([loc, scales[labels]]), rng)
    coefs = [{"loc": np.concatenate([[0.0], betas[m]]), "scale": np.array([scales[m]])}
             for m in range(M)]
    return SimTruth(X=X, y=y, labels=labels, true_pi=true_pi, true_coefs=coefs,
                    family=fam.name, generator="linear", seed=seed,
                    options={"n": n, "M": M, "p": p_m})


def gen_sparse_mixture(n, seed=0):
    """Two Gaussian regressions with ten features and probabilities (0.6077, 0.3923)."""
    truth = gen_linear_mixture(n, 2, 10, "normal", seed=seed, pi=SPARSE_PI)
    truth.generator = "sparse"
    truth.options = {"n": n}
    return truth


def f1(x):
    return 2.0 * np.sin(3.0 * x)


def f2(x):
    return np.exp(2.0 * x)


def f3(x):
    x = np.asarray(x, dtype=float)
    return 0.2 * x ** 11 * (10.0 * (1.0 - x)) ** 6 + 10.0 * (10.0 * x) ** 3 * (1.0 - x) ** 10


ADDITIVE_FUNCTIONS = (f1, f2, f3)


def gen_additive_mixture(n, family="normal", pi_case="equal", p_noise=3, scale=2.0, seed=0):
    """Three-component mixture with mean ``h(b0_m + f1(x1) + f2(x2) + f3(x3))``.

    Features are U(0, 1); columns ``3..3+p_noise`` carry no signal. For the
    normal family ``scale`` is the standard deviation; for Poisson the
    additive predictor is divided by ``scale`` before the log link.
    """
    fam = get_family(family)
    if fam.name not in ("normal", "poisson"):
        raise ConfigError("additive mixture supports the normal and poisson families")
    if pi_case not in ADDITIVE_PI:
        raise ConfigError(f"pi_case must be one of {sorted(ADDITIVE_PI)}")
    if scale <= 0:
        raise ConfigError("scale must be positive")
    rng = np.random.default_rng(seed)
    true_pi = np.asarray(ADDITIVE_PI[pi_case])
    intercepts = rng.uniform(-1.0, 1.0, size=3)
    X = rng.uniform(0.0, 1.0, size=(n, 3 + p_noise))
    smooths = np.column_stack([f(X[:, j]) for j, f in enumerate(ADDITIVE_FUNCTIONS)])
    labels = _sample_labels(true_pi, n, rng)
    eta = intercepts[labels] + smooths.sum(axis=1)
    if fam.name == "normal":
        y = fam.sample(np.column_stack([eta, np.full(n, float(scale))]), rng)
    else:
        y = fam.sample(np.exp(eta / scale)[:, None], rng)
    coefs = [{"intercept": np.array([intercepts[m]])} for m in range(3)]
    return SimTruth(X=X, y=y, labels=labels, true_pi=true_pi, true_coefs=coefs,
                    family=fam.name, generator="additive", seed=seed, true_smooths=smooths,
                    options={"n": n, "pi_case": pi_case, "p_noise": p_noise, "scale": scale})


GENERATORS = {"linear": gen_linear_mixture, "sparse": gen_sparse_mixture,
              "additive": gen_additive_mixture}


def generate(name, seed, **options):
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ConfigError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    try:
        return gen(seed=seed, **options)
    except TypeError as exc:
        raise ConfigError(f"bad options for generator {name!r}: {exc}") from None
