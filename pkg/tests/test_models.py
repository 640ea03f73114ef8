"""Weighted ERM solvers: closed form vs gradient descent vs FedAvg."""

import numpy as np
import pytest

from fedkme.data import AgentDataset
from fedkme.models import (
    ACCURACY,
    LINEAR_GD,
    LOGISTIC_GD,
    MSE,
    RIDGE,
    FittedModel,
    ModelSpec,
    evaluate,
    fedavg,
    fit_weighted,
    weighted_gradient,
    weighted_objective,
)
from fedkme.qagg import SimplexWeights


def _regression_agents(seed, B=3, n=30, d=4):
    g = np.random.default_rng(seed)
    out = []
    for _ in range(B):
        X = g.normal(size=(n, d))
        beta = g.normal(size=d)
        y = X @ beta + 0.1 * g.normal(size=n)
        out.append(AgentDataset(X, y))
    return out


def _theta(model):
    if np.ndim(model.intercept) == 0:
        return np.append(model.coefficients, model.intercept)
    return np.vstack([model.coefficients, model.intercept])


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(kind="forest")
    with pytest.raises(ValueError):
        ModelSpec(lam=-0.1)
    with pytest.raises(ValueError):
        ModelSpec(lr=0.0)
    with pytest.raises(ValueError):
        ModelSpec(epochs=0)
    with pytest.raises(ValueError):
        ModelSpec(kind=LOGISTIC_GD, classes=1)


def test_zero_weights_rejected():
    datasets = _regression_agents(0, B=2)
    spec = ModelSpec(kind=RIDGE, lam=0.1)
    with pytest.raises(ValueError):
        fit_weighted(spec, np.zeros(2), datasets)
    with pytest.raises(ValueError):
        fit_weighted(spec, np.array([1.0, -1.0]), datasets)
    with pytest.raises(ValueError):
        fit_weighted(spec, SimplexWeights(np.array([1.0])), datasets)


def test_unit_weight_on_target_is_a_local_fit():
    datasets = _regression_agents(1)
    spec = ModelSpec(kind=RIDGE, lam=0.05)
    pooled = fit_weighted(spec, SimplexWeights(np.array([1.0, 0.0, 0.0])), datasets)
    solo = fit_weighted(spec, SimplexWeights(np.array([1.0])), [datasets[0]])
    np.testing.assert_array_equal(pooled.coefficients, solo.coefficients)
    assert pooled.intercept == solo.intercept


def test_equal_weights_on_copies_match_single_fit():
    datasets = _regression_agents(2, B=1)
    ds = datasets[0]
    spec = ModelSpec(kind=RIDGE, lam=0.2)
    split = fit_weighted(spec, SimplexWeights(np.array([0.5, 0.5])), [ds, ds])
    single = fit_weighted(spec, SimplexWeights(np.array([1.0])), [ds])
    np.testing.assert_allclose(split.coefficients, single.coefficients, rtol=1e-10)
    assert split.intercept == pytest.approx(single.intercept, rel=1e-10)


def test_weight_rescaling_is_bitwise_neutral():
    # dyadic weights so the normalization divide is exact
    datasets = _regression_agents(3)
    spec = ModelSpec(kind=RIDGE, lam=0.1)
    w = np.array([0.5, 0.25, 0.25])
    a = fit_weighted(spec, w, datasets)
    b = fit_weighted(spec, 2.0 * w, datasets)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    assert a.intercept == b.intercept


def test_ridge_normal_equation_residual():
    g = np.random.default_rng(4)
    for i in range(20):
        datasets = _regression_agents(100 + i, B=int(g.integers(1, 4)), n=25)
        B = len(datasets)
        w = g.dirichlet(np.ones(B))
        lam = float(g.uniform(0.01, 1.0))
        spec = ModelSpec(kind=RIDGE, lam=lam)
        model = fit_weighted(spec, SimplexWeights(w), datasets)
        p = datasets[0].dim + 1
        G = np.zeros((p, p))
        r = np.zeros(p)
        for wk, ds in zip(w, datasets):
            Xd = np.hstack([ds.X, np.ones((ds.n, 1))])
            G += (wk / ds.n) * (Xd.T @ Xd)
            r += (wk / ds.n) * (Xd.T @ ds.y)
        theta = _theta(model)
        resid = (G + lam * np.eye(p)) @ theta - r
        assert float(np.max(np.abs(resid))) <= 1e-8 * max(1.0, float(np.max(np.abs(r))))
        assert model.status == "ok"


def test_ridge_is_the_weighted_objective_minimum():
    datasets = _regression_agents(5)
    w = np.array([0.6, 0.3, 0.1])
    spec = ModelSpec(kind=RIDGE, lam=0.3)
    model = fit_weighted(spec, SimplexWeights(w), datasets)
    theta = _theta(model)
    base = weighted_objective(spec, w, datasets, theta)
    g = np.random.default_rng(6)
    for _ in range(100):
        assert weighted_objective(spec, w, datasets, theta + 0.01 * g.normal(size=theta.shape)) >= base


def test_singular_unpenalized_system_reports_min_norm():
    # duplicated feature column makes the Gram matrix rank deficient
    g = np.random.default_rng(7)
    base = g.normal(size=(12, 2))
    X = np.hstack([base, base[:, :1]])
    y = base @ np.array([1.0, -2.0]) + 0.05 * g.normal(size=12)
    spec = ModelSpec(kind=RIDGE, lam=0.0)
    model = fit_weighted(spec, SimplexWeights(np.array([1.0])), [AgentDataset(X, y)])
    assert model.status == "singular-min-norm"
    assert np.all(np.isfinite(model.coefficients))
    pred = model.predict(X)
    assert float(np.mean((pred - y) ** 2)) <= 0.01


def test_gradient_matches_finite_differences():
    g = np.random.default_rng(8)
    datasets = _regression_agents(9, B=2, n=15, d=3)
    w = np.array([0.7, 0.3])
    for spec in (ModelSpec(kind=LINEAR_GD, lam=0.2), ModelSpec(kind=RIDGE, lam=0.2)):
        theta = g.normal(size=4)
        grad = weighted_gradient(spec, w, datasets, theta)
        for j in range(4):
            e = np.zeros(4)
            e[j] = 1e-6
            fd = (
                weighted_objective(spec, w, datasets, theta + e)
                - weighted_objective(spec, w, datasets, theta - e)
            ) / 2e-6
            assert grad[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_logistic_gradient_matches_finite_differences():
    g = np.random.default_rng(10)
    X = g.normal(size=(20, 3))
    y = g.integers(0, 3, size=20).astype(float)
    ds = AgentDataset(X, y)
    spec = ModelSpec(kind=LOGISTIC_GD, classes=3, lam=0.1)
    theta = g.normal(size=(4, 3))
    grad = weighted_gradient(spec, np.array([1.0]), [ds], theta)
    for idx in np.ndindex(theta.shape):
        e = np.zeros_like(theta)
        e[idx] = 1e-6
        fd = (
            weighted_objective(spec, np.array([1.0]), [ds], theta + e)
            - weighted_objective(spec, np.array([1.0]), [ds], theta - e)
        ) / 2e-6
        assert grad[idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_linear_gd_approaches_closed_form():
    datasets = _regression_agents(11, B=2, n=40, d=3)
    w = SimplexWeights(np.array([0.5, 0.5]))
    exact = fit_weighted(ModelSpec(kind=RIDGE, lam=0.1), w, datasets)
    gd = fit_weighted(ModelSpec(kind=LINEAR_GD, lam=0.1, lr=0.05, epochs=4000), w, datasets)
    np.testing.assert_allclose(gd.coefficients, exact.coefficients, rtol=1e-3, atol=1e-4)


def test_fedavg_zero_rounds_is_the_zero_model():
    datasets = _regression_agents(12, B=2)
    spec = ModelSpec(kind=RIDGE, lam=0.1)
    model = fedavg(spec, SimplexWeights(np.array([0.5, 0.5])), datasets, rounds=0, local_steps=1, lr=0.05)
    np.testing.assert_array_equal(model.coefficients, np.zeros(4))
    assert model.intercept == 0.0


def test_fedavg_single_local_step_equals_centralized_gd():
    # with one local step and full participation each round is one plain
    # gradient step on the weighted objective
    datasets = _regression_agents(13, B=3, n=20, d=3)
    w = np.array([0.5, 0.3, 0.2])
    spec = ModelSpec(kind=LINEAR_GD, lam=0.15)
    lr = 0.04
    fed = fedavg(spec, SimplexWeights(w), datasets, rounds=20, local_steps=1, lr=lr)
    theta = np.zeros(4)
    for _ in range(20):
        theta = theta - lr * weighted_gradient(spec, w, datasets, theta)
    np.testing.assert_allclose(_theta(fed), theta, rtol=1e-10, atol=1e-12)


def test_fedavg_single_agent_is_plain_gd():
    datasets = _regression_agents(14, B=1, n=25)
    spec = ModelSpec(kind=LINEAR_GD, lam=0.0)
    fed = fedavg(spec, SimplexWeights(np.array([1.0])), datasets, rounds=6, local_steps=5, lr=0.03)
    theta = np.zeros(5)
    for _ in range(30):
        theta = theta - 0.03 * weighted_gradient(spec, np.array([1.0]), datasets, theta)
    np.testing.assert_allclose(_theta(fed), theta, rtol=1e-12)


def test_fedavg_converges_to_closed_form():
    # one local step per round is exactly centralized GD, so the iterates
    # approach the ridge minimizer; more local steps would add drift bias
    datasets = _regression_agents(15, B=3, n=30, d=3)
    w = SimplexWeights(np.array([0.4, 0.4, 0.2]))
    spec = ModelSpec(kind=RIDGE, lam=0.2)
    exact = _theta(fit_weighted(spec, w, datasets))
    fed = fedavg(spec, w, datasets, rounds=500, local_steps=1, lr=0.05)
    err = float(np.linalg.norm(_theta(fed) - exact) / np.linalg.norm(exact))
    assert err <= 1e-3


def test_fedavg_multi_step_drift_shrinks_with_the_learning_rate():
    datasets = _regression_agents(15, B=3, n=30, d=3)
    w = SimplexWeights(np.array([0.4, 0.4, 0.2]))
    spec = ModelSpec(kind=RIDGE, lam=0.2)
    exact = _theta(fit_weighted(spec, w, datasets))

    def drift(lr, rounds):
        fed = fedavg(spec, w, datasets, rounds=rounds, local_steps=5, lr=lr)
        return float(np.linalg.norm(_theta(fed) - exact))

    assert drift(0.003, 5000) <= 0.5 * drift(0.03, 500)


def test_fedavg_skips_zero_weight_agents():
    datasets = _regression_agents(16, B=3)
    spec = ModelSpec(kind=LINEAR_GD, lam=0.1)
    with_ghost = fedavg(
        spec, np.array([0.5, 0.5, 0.0]), datasets, rounds=10, local_steps=3, lr=0.05
    )
    without = fedavg(
        spec, np.array([0.5, 0.5]), datasets[:2], rounds=10, local_steps=3, lr=0.05
    )
    np.testing.assert_array_equal(with_ghost.coefficients, without.coefficients)


def test_fedavg_argument_validation():
    datasets = _regression_agents(17, B=1)
    spec = ModelSpec(kind=RIDGE)
    with pytest.raises(ValueError):
        fedavg(spec, np.array([1.0]), datasets, rounds=-1, local_steps=1, lr=0.1)
    with pytest.raises(ValueError):
        fedavg(spec, np.array([1.0]), datasets, rounds=1, local_steps=0, lr=0.1)
    with pytest.raises(ValueError):
        fedavg(spec, np.array([1.0]), datasets, rounds=1, local_steps=1, lr=0.0)


def test_evaluate_perfect_fit_has_zero_mse():
    g = np.random.default_rng(18)
    X = g.normal(size=(50, 3))
    beta = np.array([1.0, -2.0, 0.5])
    ds = AgentDataset(X, X @ beta + 1.0)
    model = fit_weighted(ModelSpec(kind=RIDGE, lam=0.0), np.array([1.0]), [ds])
    assert evaluate(model, ds, MSE) <= 1e-20


def test_evaluate_zero_model_mse_is_the_variance():
    g = np.random.default_rng(19)
    y = g.normal(scale=2.0, size=20000)
    test = AgentDataset(np.zeros((20000, 1)), y)
    zero = FittedModel(np.zeros(1), 0.0, ModelSpec(kind=RIDGE))
    assert evaluate(zero, test, MSE) == pytest.approx(4.0, rel=0.1)


def test_evaluate_accuracy_of_constant_classifier():
    g = np.random.default_rng(20)
    y = g.integers(0, 2, size=1000).astype(float)
    test = AgentDataset(np.zeros((1000, 2)), y)
    spec = ModelSpec(kind=LOGISTIC_GD, classes=2)
    biased = FittedModel(np.zeros((2, 2)), np.array([1.0, 0.0]), spec)
    assert evaluate(biased, test, ACCURACY) == pytest.approx(0.5, abs=0.05)


def test_evaluate_metric_mismatch():
    spec = ModelSpec(kind=RIDGE)
    reg = FittedModel(np.zeros(1), 0.0, spec)
    test = AgentDataset(np.zeros((3, 1)), np.zeros(3))
    with pytest.raises(ValueError):
        evaluate(reg, test, ACCURACY)
    clf = FittedModel(np.zeros((1, 2)), np.zeros(2), ModelSpec(kind=LOGISTIC_GD))
    with pytest.raises(ValueError):
        evaluate(clf, test, MSE)
    with pytest.raises(ValueError):
        evaluate(reg, test, "mae")


def test_logistic_separable_reaches_full_accuracy():
    g = np.random.default_rng(21)
    X = np.vstack([g.normal(loc=-3.0, size=(40, 2)), g.normal(loc=3.0, size=(40, 2))])
    y = np.repeat([0.0, 1.0], 40)
    ds = AgentDataset(X, y)
    spec = ModelSpec(kind=LOGISTIC_GD, classes=2, lr=0.5, epochs=300)
    model = fit_weighted(spec, np.array([1.0]), [ds])
    assert evaluate(model, ds, ACCURACY) == 1.0


def test_logistic_three_class_smoke():
    g = np.random.default_rng(22)
    centers = np.array([[0.0, 6.0], [6.0, -3.0], [-6.0, -3.0]])
    X = np.vstack([g.normal(loc=c, size=(30, 2)) for c in centers])
    y = np.repeat([0.0, 1.0, 2.0], 30)
    ds = AgentDataset(X, y)
    spec = ModelSpec(kind=LOGISTIC_GD, classes=3, lr=0.5, epochs=300)
    model = fit_weighted(spec, np.array([1.0]), [ds])
    assert model.coefficients.shape == (2, 3)
    assert np.shape(model.intercept) == (3,)
    assert evaluate(model, ds, ACCURACY) >= 0.95
