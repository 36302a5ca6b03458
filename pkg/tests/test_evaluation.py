import itertools

import numpy as np
import pytest

from mixdr.evaluation import (MetricReport, align_components, align_cost, coef_rmse,
                              component_summaries, count_active, entropy_path, log_score,
                              pi_rmse, recovery_metrics, smooth_recovery)
from mixdr.exceptions import ConfigError
from mixdr.mixture import Component, MixtureModel
from mixdr.optim import TrainConfig
from mixdr.predictors import Intercept, Linear, Spline
from mixdr.simgen import f1, f2, f3, gen_additive_mixture, gen_linear_mixture, gen_sparse_mixture


def test_log_score_is_nll():
    X = np.zeros((1, 1))
    model = MixtureModel([Component("normal")]).setup(X)
    model.weights[model.term_slices["c0.scale.intercept0"]] = np.log(np.e - 1)
    assert log_score(model, X, np.zeros(1), per_observation=True) == pytest.approx(0.918939, abs=1e-6)
    rng = np.random.default_rng(0)
    Xr, y = rng.normal(size=(30, 1)), rng.normal(size=30)
    model.setup(Xr)
    model.set_weights(rng.normal(size=model.n_weights))
    assert log_score(model, Xr, y) == model.nll(Xr, y)


def test_align_trivial_cases():
    truth = np.array([[0.3, 1.0, 2.0], [0.7, -1.0, 0.5]])
    np.testing.assert_array_equal(align_components(truth, truth), [0, 1])
    np.testing.assert_array_equal(align_components(truth[::-1], truth), [1, 0])


def _brute_force(cost):
    M = cost.shape[0]
    best = min(itertools.permutations(range(M)), key=lambda p: sum(cost[i, p[i]] for i in range(M)))
    return sum(cost[i, best[i]] for i in range(M))


def test_alignment_matches_brute_force():
    rng = np.random.default_rng(1)
    for trial in range(100):
        M = 1 + trial % 6
        cost = rng.random((M, M))
        perm = align_cost(cost)
        assert sum(cost[i, perm[i]] for i in range(M)) == pytest.approx(_brute_force(cost))
    est, truth = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    cost = ((truth[:, None, :] - est[None, :, :]) ** 2).sum(axis=2)
    perm = align_components(est, truth)
    assert sum(cost[i, perm[i]] for i in range(4)) == pytest.approx(_brute_force(cost))


def test_alignment_pads_smaller_side():
    truth = np.array([[0.6, 1.0], [0.4, -1.0]])
    est = np.array([[0.1, 0.0], [0.45, -0.9], [0.45, 1.1]])
    perm = align_components(est, truth)
    assert perm[0] == 2 and perm[1] == 1


def test_rmse_values():
    truth = np.random.default_rng(2).normal(size=(3, 4))
    perm = np.arange(3)
    assert coef_rmse(truth, truth, perm) == 0.0
    assert coef_rmse(truth + 1, truth, perm) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        coef_rmse(truth[:, :2], truth, perm)
    assert pi_rmse([0.2, 0.8], [0.8, 0.2], np.array([1, 0])) == 0.0


def test_rmse_invariant_to_joint_permutation():
    rng = np.random.default_rng(3)
    est, truth = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    perm = align_components(est, truth)
    q = rng.permutation(4)
    # relabel truth rows by q and estimated rows consistently
    assert coef_rmse(est, truth, perm) == pytest.approx(coef_rmse(est, truth[q], perm[q]))


def _set(model, label, value):
    model.weights[model.term_slices[label]] = value


def _truth_model(t):
    p = t.X.shape[1]
    comps = [Component("normal", {"loc": [Intercept(), Linear(range(p))], "scale": [Intercept()]})
             for _ in range(t.n_components)]
    model = MixtureModel(comps).setup(t.X)
    for m, c in enumerate(t.true_coefs):
        _set(model, f"c{m}.loc.intercept0", c["loc"][0])
        _set(model, f"c{m}.loc.linear1", c["loc"][1:])
        _set(model, f"c{m}.scale.intercept0", np.log(np.expm1(c["scale"][0])))
        _set(model, f"gate{m}.intercept0", np.log(t.true_pi[m]))
    return model


def test_recovery_at_truth_and_swapped():
    t = gen_linear_mixture(200, 2, 2, seed=4)
    model = _truth_model(t)
    assert model.nll(t.X, t.y) == pytest.approx(t.oracle_nll(t.X, t.y), rel=1e-12)
    rec = recovery_metrics(model, t)
    assert rec["coef_rmse"] < 1e-12 and rec["pi_rmse"] < 1e-12
    assert rec["alignment"] == [0, 1]
    t.true_coefs = t.true_coefs[::-1]
    t.true_pi = t.true_pi[::-1]
    rec = recovery_metrics(model, t)
    assert rec["alignment"] == [1, 0] and rec["coef_rmse"] < 1e-12


def test_component_summaries():
    t = gen_linear_mixture(50, 2, 2, seed=5)
    pi, coefs = component_summaries(_truth_model(t))
    np.testing.assert_allclose(pi, t.true_pi)
    np.testing.assert_allclose(coefs[1]["scale"], t.true_coefs[1]["scale"])
    np.testing.assert_allclose(coefs[1]["loc"], t.true_coefs[1]["loc"])


def test_smooth_recovery_at_truth_level():
    t = gen_additive_mixture(400, p_noise=0, seed=1)
    comps = [Component("normal", {"loc": [Intercept()] + [Spline(j, num_basis=12, lam=1e-6)
                                                          for j in range(3)]})
             for _ in range(3)]
    model = MixtureModel(comps).setup(t.X)
    # least-squares spline fit of the centred truth per component
    smooth = sum(f(t.X[:, j]) for j, f in enumerate((f1, f2, f3)))
    D = np.column_stack([tm.design(t.X) for tm in comps[0].predictors["loc"]])
    w = np.linalg.lstsq(D, smooth, rcond=None)[0]
    for m in range(3):
        sl = [model.term_slices[f"c{m}.loc.{k}"] for k in
              ("intercept0", "spline1", "spline2", "spline3")]
        model.weights[np.r_[tuple(sl)]] = w
        _set(model, f"c{m}.loc.intercept0", w[0] + t.true_coefs[m]["intercept"][0])
    rec = smooth_recovery(model, t)
    for name in ("f1", "f2", "f3"):
        assert rec[name] < 0.3
    assert len(rec["active"]) == 3


def test_metric_report():
    rep = MetricReport()
    for r, v in enumerate([1.0, 2.0, 3.0]):
        rep.add(r, "ls", v)
    s = rep.summary()["ls"]
    assert s["mean"] == 2.0 and s["sd"] == pytest.approx(1.0) and s["n"] == 3


def test_entropy_path_rows():
    t = gen_sparse_mixture(300, seed=2)
    comps = [Component("normal", {"loc": [Intercept(), Linear(range(10))]}) for _ in range(3)]
    rows = entropy_path(MixtureModel(comps), t.X, t.y, [0.0, 0.1, 1.0],
                        TrainConfig.from_lr(0.1, epochs=5))
    assert [r.xi for r in rows] == [0.0, 0.1, 1.0]
    for r in rows:
        assert r.pi.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(np.diff(r.pi) <= 0)
    with pytest.raises(ConfigError):
        entropy_path(MixtureModel(comps), t.X, t.y, [1.0, 0.0], TrainConfig())
    assert count_active([0.5, 0.04, 0.46]) == 2
