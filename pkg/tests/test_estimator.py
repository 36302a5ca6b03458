import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mixdr import EMRegressor, MixtureRegressor
from mixdr.simgen import gen_linear_mixture


@pytest.fixture(scope="module")
def data():
    t = gen_linear_mixture(300, 2, 2, seed=3)
    return t.X, t.y


def test_get_params_and_clone():
    est = MixtureRegressor(n_components=3, xi=0.1, epochs=5)
    params = est.get_params()
    assert params["n_components"] == 3 and params["xi"] == 0.1
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(learning_rate=0.05)
    assert est.learning_rate == 0.05


def test_fit_predict_score(data):
    X, y = data
    est = MixtureRegressor(epochs=20, random_state=1).fit(X, y)
    assert est.n_features_in_ == 2
    assert est.predict(X).shape == (300,)
    pi, theta = est.predict_params(X[:5])
    assert pi.shape == (5, 2) and len(theta) == 2
    np.testing.assert_allclose(est.responsibilities(X, y).sum(axis=1), 1.0)
    assert est.score(X, y) == pytest.approx(-est.log_score(X, y) / 300)
    assert est.score(X, y, sample_weight=np.ones(300)) == pytest.approx(est.score(X, y))
    assert len(est.risk_trajectory_) == 20


def test_fit_is_reproducible(data):
    X, y = data
    a = MixtureRegressor(epochs=10, random_state=4).fit(X, y)
    b = MixtureRegressor(epochs=10, random_state=4).fit(X, y)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))


def test_input_validation(data):
    X, y = data
    with pytest.raises(NotFittedError):
        MixtureRegressor().predict(X)
    with pytest.raises(ValueError):
        MixtureRegressor(epochs=1).fit(X, y[:10])
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        MixtureRegressor(epochs=1).fit(bad, y)
    est = MixtureRegressor(epochs=1).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :1])


def test_em_regressor(data):
    X, y = data
    em = EMRegressor(n_init=3).fit(X, y)
    assert em.predict(X).shape == (300,)
    assert em.log_score(X, y) == pytest.approx(-em.em_.final_loglik, abs=1e-8)
    # EM maximises likelihood, so it should beat a short gradient fit in-sample
    gd = MixtureRegressor(epochs=5).fit(X, y)
    assert em.score(X, y) > gd.score(X, y)
