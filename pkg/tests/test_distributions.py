import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mixdr.distributions import (FAMILIES, apply_transform, get_family, get_transform,
                                 grad_log_density, log_density, transform_jacobian_diag)
from mixdr.exceptions import ConfigError, DomainError, NumericError, SupportError

from helpers import fd_grad


def test_param_counts():
    assert {n: get_family(n).param_count for n in FAMILIES} == {
        "normal": 2, "laplace": 2, "logistic": 2, "poisson": 1, "beta": 2}


@pytest.mark.parametrize("family,params,y,expected", [
    ("normal", (0.0, 1.0), 0.0, -0.5 * np.log(2 * np.pi)),
    ("poisson", (1.0,), 0.0, -1.0),
    ("beta", (1.0, 1.0), 0.5, 0.0),
    ("laplace", (2.0, 0.5), 2.0, 0.0),
])
def test_log_density_values(family, params, y, expected):
    assert log_density(family, params, y) == pytest.approx(expected, abs=1e-12)


def test_grad_examples():
    np.testing.assert_allclose(grad_log_density("normal", (0.0, 1.0), 1.0), [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(grad_log_density("poisson", (2.0,), 2.0), [0.0], atol=1e-12)


def test_beta_gradient_matches_finite_differences():
    g = grad_log_density("beta", (2.0, 3.0), 0.4)
    fd = fd_grad(lambda p: log_density("beta", p, 0.4), np.array([2.0, 3.0]), h=1e-6)
    np.testing.assert_allclose(g, fd, rtol=1e-6)


def _random_case(rng, name):
    if name == "poisson":
        return np.array([rng.uniform(0.2, 15)]), float(rng.integers(0, 20))
    if name == "beta":
        return rng.uniform(0.5, 6, size=2), rng.uniform(0.02, 0.98)
    return np.array([rng.normal() * 2, rng.uniform(0.3, 3)]), rng.normal() * 3


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_gradients_against_finite_differences(name):
    rng = np.random.default_rng(7)
    for _ in range(100):
        params, y = _random_case(rng, name)
        g = grad_log_density(name, params, y)
        fd = fd_grad(lambda p: log_density(name, p, y), params, h=1e-6)
        err = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)
        assert err.max() < 1e-5


@pytest.mark.parametrize("name,params,lo,hi", [
    ("normal", (0.3, 1.7), -np.inf, np.inf),
    ("laplace", (-1.0, 0.6), -np.inf, np.inf),
    ("logistic", (2.0, 0.8), -np.inf, np.inf),
    ("beta", (2.5, 1.5), 0.0, 1.0),
])
def test_continuous_densities_integrate_to_one(name, params, lo, hi):
    fam = get_family(name)
    p = np.asarray(params)

    def f(y):
        return np.exp(fam.logpdf(np.array([y]), p)[0])

    if name == "beta":
        # the density is evaluated on the clipped support, so integrate strictly inside
        total, _ = integrate.quad(f, 1e-6, 1 - 1e-6, limit=200)
    else:
        total, _ = integrate.quad(f, lo, hi, limit=200)
    assert total == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("rate", [0.5, 4.0, 20.0])
def test_poisson_pmf_sums_to_one(rate):
    y = np.arange(0, 201, dtype=float)
    total = np.exp(get_family("poisson").logpdf(y, np.full((y.size, 1), rate))).sum()
    assert total == pytest.approx(1.0, abs=1e-8)


def test_domain_and_support_errors():
    with pytest.raises(DomainError) as info:
        log_density("normal", (0.0, -1.0), 0.0)
    assert info.value.parameter == "scale"
    with pytest.raises(SupportError):
        log_density("poisson", (1.0,), 1.5)
    with pytest.raises(SupportError):
        log_density("poisson", (1.0,), -1.0)
    with pytest.raises(SupportError):
        log_density("beta", (1.0, 1.0), 1.2)
    with pytest.raises(ConfigError):
        get_family("gamma")


def test_beta_boundary_is_clipped():
    assert np.isfinite(log_density("beta", (2.0, 2.0), 0.0))
    assert np.isfinite(log_density("beta", (2.0, 2.0), 1.0))


def test_transform_examples():
    np.testing.assert_allclose(apply_transform("softmax", np.zeros(3)), np.full(3, 1 / 3))
    assert apply_transform("exp", np.array([0.0]))[0] == 1.0
    assert transform_jacobian_diag("exp", np.array([0.0]))[0] == 1.0
    assert transform_jacobian_diag("sigmoid", np.array([0.0]))[0] == 0.25
    np.testing.assert_allclose(transform_jacobian_diag("softmax", np.zeros(2)),
                               [[0.25, -0.25], [-0.25, 0.25]])
    with pytest.raises(NumericError):
        apply_transform("softplus", np.array([np.nan]))


def test_ordered_simplex_is_sorted_and_normalised():
    rng = np.random.default_rng(0)
    raw = rng.normal(scale=3, size=(1000, 5))
    p = apply_transform("ordered", raw)
    assert np.all(np.diff(p, axis=1) >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("name", ["softmax", "ordered"])
def test_group_jacobians_match_finite_differences(name):
    t = get_transform(name)
    rng = np.random.default_rng(3)
    for _ in range(20):
        raw = rng.normal(size=4)
        J = t.jacobian(raw)
        fd = np.column_stack([fd_grad(lambda r, i=i: t.apply(r)[i], raw)
                              for i in range(4)]).T
        np.testing.assert_allclose(J, fd, atol=1e-8)
        v = rng.normal(size=4)
        np.testing.assert_allclose(t.vjp(raw, v), v @ J, atol=1e-12)


@pytest.mark.parametrize("name", ["identity", "exp", "softplus", "sigmoid"])
def test_elementwise_transforms_invert(name):
    t = get_transform(name)
    raw = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(t.inverse(t.apply(raw)), raw, atol=1e-8)
    assert np.all(t.derivative(raw) > 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-100, 100))
def test_softmax_shift_invariance(raw, c):
    raw = np.array(raw)
    np.testing.assert_allclose(apply_transform("softmax", raw + c),
                               apply_transform("softmax", raw), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["normal", "laplace", "logistic"]), st.floats(-1e3, 1e3),
       st.floats(1e-3, 1e3), st.floats(-1e4, 1e4))
def test_location_scale_densities_finite(name, loc, scale, y):
    assert np.isfinite(log_density(name, (loc, scale), y))
    assert np.all(np.isfinite(grad_log_density(name, (loc, scale), y)))
