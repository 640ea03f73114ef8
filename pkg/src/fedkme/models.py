"""Weighted empirical-risk minimizers and a simulated FedAvg loop.

The weighted objective over agents k with simplex weights w_k is

    J(theta) = sum_k w_k * R_k(theta) + lam * ||theta||^2,

with R_k the agent's mean loss (squared error, or softmax cross-entropy for
classification).  The ridge case has the closed-form normal equations

    (sum_k (w_k/n_k) X_k' X_k + lam I) theta = sum_k (w_k/n_k) X_k' y_k,

where X_k carries an appended intercept column when fit_intercept is set
(the penalty applies to the full parameter vector, intercept included).
The gradient-descent variants run full-batch steps on J; FedAvg alternates
local steps with weighted parameter averaging and reduces exactly to
centralized gradient descent when local_steps=1 and all weights are active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AgentDataset
from .qagg import SimplexWeights

RIDGE = "ridge"
LINEAR_GD = "linear_gd"
LOGISTIC_GD = "logistic_gd"

MSE = "mse"
ACCURACY = "accuracy"


@dataclass(frozen=True)
class ModelSpec:
    """Model family plus its hyperparameters."""

    kind: str = RIDGE
    lam: float = 0.0
    lr: float = 0.1
    epochs: int = 100
    classes: int = 2
    fit_intercept: bool = True

    def __post_init__(self):
        if self.kind not in (RIDGE, LINEAR_GD, LOGISTIC_GD):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.kind == LOGISTIC_GD and self.classes < 2:
            raise ValueError("classification needs at least two classes")


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Learned coefficients; columns index classes for classifiers."""

    coefficients: np.ndarray
    intercept: np.ndarray | float
    spec: ModelSpec
    status: str = "ok"

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scores = X @ self.coefficients + self.intercept
        if self.spec.kind == LOGISTIC_GD:
            return np.argmax(scores, axis=1)
        return scores


def _design(dataset: AgentDataset, fit_intercept: bool) -> np.ndarray:
    X = dataset.X
    if fit_intercept:
        return np.column_stack([X, np.ones(X.shape[0])])
    return X


def _param_dim(spec: ModelSpec, d: int) -> tuple[int, ...]:
    p = d + (1 if spec.fit_intercept else 0)
    if spec.kind == LOGISTIC_GD:
        return (p, spec.classes)
    return (p,)


def _unpack(theta: np.ndarray, spec: ModelSpec, d: int, status: str = "ok") -> FittedModel:
    if spec.fit_intercept:
        coef, intercept = theta[:d], theta[d]
    else:
        coef = theta
        intercept = np.zeros(spec.classes) if spec.kind == LOGISTIC_GD else 0.0
    if spec.kind != LOGISTIC_GD and not np.isscalar(intercept):
        intercept = float(intercept)
    return FittedModel(coefficients=coef, intercept=intercept, spec=spec, status=status)


def weighted_objective(spec: ModelSpec, w: np.ndarray, datasets: list[AgentDataset], theta: np.ndarray) -> float:
    """J(theta) = sum_k w_k R_k(theta) + lam ||theta||^2."""
    total = spec.lam * float(np.sum(theta * theta))
    for wk, ds in zip(w, datasets):
        if wk == 0.0:
            continue
        total += wk * _local_risk(spec, ds, theta)
    return total


def _local_risk(spec: ModelSpec, ds: AgentDataset, theta: np.ndarray) -> float:
    Xd = _design(ds, spec.fit_intercept)
    if spec.kind == LOGISTIC_GD:
        logits = Xd @ theta
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.sum(np.exp(shifted), axis=1))
        picked = shifted[np.arange(ds.n), ds.y.astype(int)]
        return float(np.mean(log_norm - picked))
    resid = Xd @ theta - ds.y
    return float(np.mean(resid * resid))


def _local_gradient(spec: ModelSpec, ds: AgentDataset, theta: np.ndarray) -> np.ndarray:
    """Gradient of R_k alone (the lam term is added by the caller)."""
    Xd = _design(ds, spec.fit_intercept)
    if spec.kind == LOGISTIC_GD:
        logits = Xd @ theta
        shifted = logits - logits.max(axis=1, keepdims=True)
        expo = np.exp(shifted)
        probs = expo / expo.sum(axis=1, keepdims=True)
        probs[np.arange(ds.n), ds.y.astype(int)] -= 1.0
        return Xd.T @ probs / ds.n
    resid = Xd @ theta - ds.y
    return 2.0 * Xd.T @ resid / ds.n


def weighted_gradient(spec: ModelSpec, w: np.ndarray, datasets: list[AgentDataset], theta: np.ndarray) -> np.ndarray:
    grad = 2.0 * spec.lam * theta
    for wk, ds in zip(w, datasets):
        if wk == 0.0:
            continue
        grad = grad + wk * _local_gradient(spec, ds, theta)
    return grad


def _normalized(weights: SimplexWeights | np.ndarray) -> np.ndarray:
    # weights are consumed post-normalization, so rescaling is a no-op
    w = np.asarray(getattr(weights, "w", weights), dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = float(w.sum())
    if total <= 0:
        raise ValueError("weights must not all be zero")
    return w / total


def fit_weighted(spec: ModelSpec, weights: SimplexWeights, datasets: list[AgentDataset]) -> FittedModel:
    """Minimize the weighted empirical risk.

    Ridge solves its normal equations exactly; a singular system with lam=0
    falls back to the minimum-norm solution and reports status
    "singular-min-norm".  GD variants run full-batch gradient descent.
    """
    w = _normalized(weights)
    if len(datasets) != w.shape[0]:
        raise ValueError("one weight per dataset is required")
    d = datasets[0].dim
    for ds in datasets:
        if ds.dim != d:
            raise ValueError("datasets must share one feature dimension")

    if spec.kind == RIDGE:
        p = d + (1 if spec.fit_intercept else 0)
        G = np.zeros((p, p))
        r = np.zeros(p)
        for wk, ds in zip(w, datasets):
            if wk == 0.0:
                continue
            Xd = _design(ds, spec.fit_intercept)
            G += (wk / ds.n) * (Xd.T @ Xd)
            r += (wk / ds.n) * (Xd.T @ ds.y)
        H = G + spec.lam * np.eye(p)
        status = "ok"
        try:
            theta = np.linalg.solve(H, r)
        except np.linalg.LinAlgError:
            theta = None
        scale = max(float(np.max(np.abs(r))), 1.0)
        solved = (
            theta is not None
            and bool(np.all(np.isfinite(theta)))
            and float(np.max(np.abs(H @ theta - r))) <= 1e-8 * scale
        )
        if not solved:
            theta, *_ = np.linalg.lstsq(H, r, rcond=None)
            status = "singular-min-norm"
        return _unpack(theta, spec, d, status)

    theta = np.zeros(_param_dim(spec, d))
    for _ in range(spec.epochs):
        theta = theta - spec.lr * weighted_gradient(spec, w, datasets, theta)
    return _unpack(theta, spec, d)


def fedavg(
    spec: ModelSpec,
    weights: SimplexWeights,
    datasets: list[AgentDataset],
    rounds: int,
    local_steps: int,
    lr: float,
) -> FittedModel:
    """Simulated FedAvg on the weighted objective.

    Each round broadcasts the model, every agent with positive weight takes
    ``local_steps`` gradient steps on its local risk (including the shared
    lam penalty), and the server averages the resulting parameters with the
    agents' weights, renormalized over participants, folding in a fixed
    agent order.
    """
    w = _normalized(weights)
    if rounds < 0 or local_steps < 1 or lr <= 0:
        raise ValueError("rounds must be >= 0, local_steps >= 1, lr > 0")
    participants = [k for k in range(len(datasets)) if w[k] > 0.0]
    part_total = float(sum(w[k] for k in participants))
    d = datasets[0].dim
    theta = np.zeros(_param_dim(spec, d))
    for _ in range(rounds):
        aggregate = np.zeros_like(theta)
        for k in participants:
            local = theta
            for _ in range(local_steps):
                grad = _local_gradient(spec, datasets[k], local) + 2.0 * spec.lam * local
                local = local - lr * grad
            aggregate = aggregate + (w[k] / part_total) * local
        theta = aggregate
    return _unpack(theta, spec, d)


def evaluate(model: FittedModel, test: AgentDataset, metric: str) -> float:
    """Test-set MSE or accuracy."""
    if test.n < 1:
        raise ValueError("test set must be non-empty")
    if metric == MSE:
        if model.spec.kind == LOGISTIC_GD:
            raise ValueError("MSE is undefined for classifiers")
        pred = model.predict(test.X)
        resid = pred - test.y
        return float(np.mean(resid * resid))
    if metric == ACCURACY:
        if model.spec.kind != LOGISTIC_GD:
            raise ValueError("accuracy needs a classifier")
        pred = model.predict(test.X)
        return float(np.mean(pred == test.y.astype(int)))
    raise ValueError(f"unknown metric {metric!r}")
