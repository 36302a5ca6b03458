from dataclasses import replace

import numpy as np
import pytest

from mixdr.exceptions import ConfigError, DivergenceError
from mixdr.mixture import Component, MixtureModel
from mixdr.optim import (CLRConfig, TrainConfig, clr, make_optimizer, multi_restart,
                         optimizer_step, train)
from mixdr.predictors import Intercept, Linear


def test_sgd_step():
    opt = make_optimizer("sgd", 1)
    w = np.array([1.0])
    out = optimizer_step(opt, w, np.array([2.0]), 0.1)
    assert out[0] == pytest.approx(0.8)
    assert w[0] == 1.0


def test_rmsprop_first_step():
    g = np.array([3.0, -0.5])
    opt = make_optimizer("rmsprop", 2)
    out = optimizer_step(opt, np.zeros(2), g, 0.01)
    np.testing.assert_allclose(-out, 0.01 * g / (np.sqrt(0.1 * g * g) + 1e-7))


def test_adam_first_step_is_lr():
    g = np.array([3.0, -0.5, 1e-3])
    opt = make_optimizer("adam", 3)
    out = optimizer_step(opt, np.zeros(3), g, 0.05)
    np.testing.assert_allclose(np.abs(out), 0.05, rtol=1e-3)


def test_adadelta_step_is_finite_and_descends():
    opt = make_optimizer("adadelta", 2)
    out = optimizer_step(opt, np.zeros(2), np.array([1.0, -1.0]), 1.0)
    assert out[0] < 0 < out[1]


def test_optimizer_state_shapes():
    for name in ("rmsprop", "adam", "adadelta"):
        opt = make_optimizer(name, 7)
        for v in opt.state().values():
            if isinstance(v, np.ndarray):
                assert v.shape == (7,)


def test_non_finite_gradient_raises():
    with pytest.raises(DivergenceError):
        optimizer_step(make_optimizer("sgd", 1), np.zeros(1), np.array([np.nan]), 0.1)
    with pytest.raises(ConfigError):
        make_optimizer("ranger", 1)


def test_clr_schedule():
    assert clr(0, 0.1, 0.5, 10) == 0.1
    assert clr(10, 0.1, 0.5, 10) == pytest.approx(0.5)
    assert clr(20, 0.1, 0.5, 10) == pytest.approx(0.1)
    assert clr(5, 0.1, 0.5, 10) == pytest.approx(0.3)
    assert clr(35, 0.1, 0.5, 10) == pytest.approx(0.3)


def test_train_config():
    cfg = TrainConfig()
    assert cfg.max_lr == pytest.approx(0.1) and cfg.base_lr == pytest.approx(0.02)
    cfg = TrainConfig.from_lr(0.1)
    assert (cfg.base_lr, cfg.max_lr) == pytest.approx((0.02, 0.1))
    assert TrainConfig.from_lr(0.05, clr=False).learning_rate(123, 10) == 0.05
    assert TrainConfig(base_lr=0.1, clr=CLRConfig()).max_lr == pytest.approx(0.5)
    # 1500 epochs with a 150-epoch half-period end back at the base rate
    assert cfg.learning_rate(1500 * 50, 50) == pytest.approx(cfg.base_lr)
    for bad in ({"optimizer": "lbfgs"}, {"base_lr": 0.0}, {"batch_size": 0}, {"restarts": 0},
                {"epochs": -1}, {"clr": CLRConfig(max_lr=0.001)}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def _intercept_model():
    return MixtureModel([Component("normal")])


def test_train_recovers_single_normal_mle():
    rng = np.random.default_rng(0)
    y = rng.normal(1.5, 0.7, size=400)
    X = np.zeros((400, 1))
    fit = train(_intercept_model(), X, y, TrainConfig.from_lr(0.05, epochs=300))
    loc, scale = fit.params.theta[0][0]
    assert loc == pytest.approx(y.mean(), abs=1e-2)
    assert scale == pytest.approx(y.std(), abs=1e-2)
    assert len(fit.risk_trajectory) == 300 == len(fit.lr_trajectory)


def test_train_matches_least_squares_on_convex_problem():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 2))
    y = 0.5 + X @ [1.0, -2.0] + rng.normal(scale=0.5, size=300)
    comp = Component("normal", {"loc": [Intercept(), Linear([0, 1])], "scale": [Intercept()]},
                     transforms={"scale": "exp"})
    model = MixtureModel([comp]).setup(X)
    model.init_weights(np.random.default_rng(0), y)
    scale_sl = model.term_slices["c0.scale.intercept0"]
    model.weights[scale_sl] = 0.0  # sigma fixed at 1
    free = np.ones(model.n_weights, dtype=bool)
    free[scale_sl] = False
    # optimise the free weights only, with the scale held fixed
    opt = make_optimizer("adam", int(free.sum()))
    w = model.weights
    for it in range(4000):
        g = model.grad_nll(X, y)[free]
        sub = w[free]
        opt.step(sub, g, 0.01 if it < 3000 else 0.001)
        w[free] = sub
    Z = np.column_stack([np.ones(300), X])
    beta = np.linalg.lstsq(Z, y, rcond=None)[0]
    r = y - Z @ beta
    ols_risk = 0.5 * np.sum(r ** 2) + 150 * np.log(2 * np.pi)
    assert model.nll(X, y) - ols_risk < 1e-4


@pytest.mark.parametrize("name", ["sgd", "rmsprop", "adam", "adadelta"])
def test_zero_gradient_leaves_weights(name):
    opt = make_optimizer(name, 4)
    w = np.array([0.3, -1.0, 2.0, 0.0])
    out = w.copy()
    for _ in range(5):
        out = optimizer_step(opt, out, np.zeros(4), 0.1)
    np.testing.assert_array_equal(out, w)


def test_train_is_deterministic():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 2))
    y = rng.normal(size=120)

    def run():
        comps = [Component("normal", {"loc": [Intercept(), Linear([0, 1])]}) for _ in range(2)]
        return train(MixtureModel(comps), X, y, TrainConfig.from_lr(0.1, epochs=15, seed=4))

    a, b = run(), run()
    assert a.risk_trajectory == b.risk_trajectory
    np.testing.assert_array_equal(a.weights, b.weights)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    X = np.zeros((50, 1))
    y = np.random.default_rng(3).normal(size=50)
    cfg = TrainConfig.from_lr(1e6, clr=False, optimizer="sgd", epochs=20)
    model = MixtureModel([Component("normal", transforms={"scale": "exp"})])
    with pytest.raises(DivergenceError) as info:
        train(model, X, y, cfg)
    assert info.value.epoch is not None


def _factory(seed):
    comps = [Component("normal", {"loc": [Intercept(), Linear([0])]}) for _ in range(2)]
    return MixtureModel(comps)


def test_multi_restart_picks_best():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(150, 1))
    y = np.where(rng.random(150) < 0.5, 2 * X[:, 0], -2 * X[:, 0]) + rng.normal(scale=0.3, size=150)
    cfg = TrainConfig.from_lr(0.1, epochs=20, restarts=3, seed=10)
    best = multi_restart(_factory, X, y, cfg)
    risks = [r.final_risk for r in best.restarts]
    assert len(risks) == 3 and best.final_risk == min(risks)
    assert [r.seed for r in best.restarts] == [10, 11, 12]
    single = multi_restart(_factory, X, y, replace(cfg, restarts=1))
    direct = train(_factory(10), X, y, replace(cfg, restarts=1))
    assert single.risk_trajectory == direct.risk_trajectory


def test_multi_restart_avoids_bad_initialisation():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 1))
    y = 1.0 + X[:, 0] + rng.normal(scale=0.2, size=100)

    def factory(seed):
        model = _factory(seed).setup(X)
        model.init_weights(np.random.default_rng(seed), y)
        if seed == 0:
            model.weights[:] = 40.0  # deliberately bad start
        return model

    cfg = TrainConfig.from_lr(0.02, clr=False, epochs=3, restarts=3, seed=0)
    best = multi_restart(factory, X, y, cfg)
    risks = [r.final_risk for r in best.restarts]
    assert best.final_risk < max(risks)
    assert best.best_restart != 0


def test_multi_restart_parallel_matches_serial():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(80, 1))
    y = X[:, 0] + rng.normal(size=80)
    cfg = TrainConfig.from_lr(0.1, epochs=5, restarts=2, seed=1)
    a = multi_restart(_factory, X, y, cfg)
    b = multi_restart(_factory, X, y, replace(cfg, jobs=2))
    assert a.final_risk == b.final_risk
