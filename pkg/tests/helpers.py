"""Shared builders and numerical oracles for the test-suite."""

import numpy as np

from mixdr.distributions import get_family
from mixdr.mixture import Component, MixtureModel
from mixdr.predictors import Dense, Intercept, Linear, Spline

FAMILY_NAMES = ("normal", "laplace", "logistic", "poisson", "beta")


def random_outcome(rng, family, n):
    if family == "poisson":
        return rng.poisson(3.0, size=n).astype(float)
    if family == "beta":
        return rng.uniform(0.05, 0.95, size=n)
    return rng.normal(size=n) * 2.0


def random_model(rng, family, p=3, M=2, spline=True, dense=False, gating_features=True,
                 xi=0.0, gating="softmax", activation="tanh"):
    """Mixture with a mix of term types on the first parameter and intercepts elsewhere."""
    comps = []
    for _ in range(M):
        first = [Intercept(), Linear([0, 1])]
        if spline:
            first.append(Spline(2, num_basis=7, lam=0.3))
        if dense:
            first.append(Dense([0, 2], widths=(3, 1), activation=activation))
        comps.append(Component(family, _preds(family, first)))
    gterms = [Intercept(), Linear([0, 2])] if gating_features else [Intercept()]
    return MixtureModel(comps, gating=gterms, gating_transform=gating, xi=xi)


def _preds(family, first):
    names = get_family(family).param_names
    preds = {names[0]: first}
    for name in names[1:]:
        preds[name] = [Intercept(), Linear([1])]
    return preds


def setup_random(rng, model, family, n=40, p=3, scale=0.3):
    X = rng.uniform(-1, 1, size=(n, p))
    y = random_outcome(rng, family, n)
    model.setup(X)
    model.set_weights(rng.normal(scale=scale, size=model.n_weights))
    return X, y


def fd_grad(f, w, h=1e-5):
    """Central finite differences of scalar ``f`` at ``w``."""
    w = np.asarray(w, dtype=float)
    g = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def cox_de_boor(x, knots, degree, i):
    """Reference B-spline value by the recursive definition (right-closed at the end)."""
    t = knots
    if degree == 0:
        if t[i] <= x < t[i + 1]:
            return 1.0
        if x == t[-1] and t[i] < t[i + 1] == t[-1]:
            return 1.0
        return 0.0
    left = 0.0
    if t[i + degree] > t[i]:
        left = (x - t[i]) / (t[i + degree] - t[i]) * cox_de_boor(x, t, degree - 1, i)
    right = 0.0
    if t[i + degree + 1] > t[i + 1]:
        right = ((t[i + degree + 1] - x) / (t[i + degree + 1] - t[i + 1])
                 * cox_de_boor(x, t, degree - 1, i + 1))
    return left + right


# criterion number -> (passed, detail); printed in the terminal summary by conftest
ACCEPTANCE = {}


def report(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE[number] = line
    print(line)
    return passed
