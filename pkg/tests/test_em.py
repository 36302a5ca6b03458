import numpy as np
import pytest

from mixdr.em import em_fit, em_fit_restarts, log_likelihood, m_step, to_mixture_model
from mixdr.evaluation import align_components, coef_rmse
from mixdr.exceptions import ConfigError
from mixdr.simgen import gen_linear_mixture


def test_single_component_is_ols():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 2))
    y = 1.0 + X @ [0.5, -1.5] + rng.normal(scale=0.4, size=200)
    fit = em_fit(X, y, 1, seed=3)
    Z = np.column_stack([np.ones(200), X])
    beta = np.linalg.lstsq(Z, y, rcond=None)[0]
    np.testing.assert_allclose(fit.coef[0], beta, atol=1e-10)
    assert fit.sigma[0] ** 2 == pytest.approx(np.mean((y - Z @ beta) ** 2), rel=1e-10)
    assert fit.pi[0] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_loglik_is_monotone(seed):
    truth = gen_linear_mixture(600, 2, 2, seed=seed)
    fit = em_fit(truth.X, truth.y, 2, seed=seed)
    assert np.all(np.diff(fit.loglik) >= -1e-10)
    assert fit.final_loglik == pytest.approx(
        log_likelihood(truth.X, truth.y, fit.coef, fit.sigma, fit.pi), abs=1e-9)


def test_recovers_well_separated_lines():
    rng = np.random.default_rng(1)
    n = 2500
    X = rng.normal(size=(n, 1))
    lab = rng.random(n) < 0.4
    y = np.where(lab, 3.0 * X[:, 0] + 2.0, -3.0 * X[:, 0] - 2.0) + rng.normal(scale=0.3, size=n)
    fit = em_fit_restarts(X, y, 2, n_init=5, seed=0)
    est = np.column_stack([fit.pi, fit.coef, fit.sigma])
    true = np.array([[0.4, 2.0, 3.0, 0.3], [0.6, -2.0, -3.0, 0.3]])
    perm = align_components(est, true)
    assert coef_rmse(est[:, 1:], true[:, 1:], perm) < 0.05


def test_equivalent_mixture_model_likelihood():
    truth = gen_linear_mixture(800, 2, 2, seed=4)
    fit = em_fit(truth.X, truth.y, 2, seed=0)
    model = to_mixture_model(fit, truth.X)
    assert abs(-model.nll(truth.X, truth.y) - fit.final_loglik) < 1e-8


def test_singular_m_step_raises_linalg_error():
    Z = np.column_stack([np.ones(10), np.ones(10)])
    with pytest.raises(np.linalg.LinAlgError):
        m_step(Z, np.arange(10.0), np.ones((10, 1)))


def test_requires_enough_observations():
    with pytest.raises(ConfigError):
        em_fit(np.zeros((8, 2)), np.zeros(8), 2)


def test_restarts_pick_highest_likelihood():
    truth = gen_linear_mixture(300, 2, 2, seed=5)
    best = em_fit_restarts(truth.X, truth.y, 2, n_init=4, seed=0)
    singles = [em_fit(truth.X, truth.y, 2, seed=s).final_loglik for s in range(4)]
    assert best.final_loglik == max(singles)
