"""Synthetic multi-agent data generators and CSV dataset ingestion.

Concept shift: every agent shares the feature law X ~ N((1,...,1), I_d) but
owns its regression vector

    beta_k = I_k sqrt(1 - sigma_c^2) beta_0 + sigma_c eps_k,
    I_k ~ U{-1,+1},  beta_0, eps_k ~ N(0, I_d),
    Y = <beta_k, X> + N(0, sigma_Y^2),

so E||beta_k||^2 = d for every sigma_c and agents fall into the two groups
I_k = +-1.

Covariate shift: every agent shares the conditional law

    Y = sin(3 X_1) + 0.5 X_2^2 + 0.1 sum_{i>=3} X_i + N(0, 0.04)

while features come from three groups: N(mu_k, sigma_1^2 I) with
mu_k ~ N(0, v_1^2 I); N(mu_k, sigma_2^2 I) with mu_k ~ N(mu_0, v_2^2 I);
and U([-6, 6]^d).

All draws flow through named, per-agent seed streams, so regenerating any
agent (or its held-out test set) is deterministic and order-independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import rng
from .data import AgentDataset

_CONCEPT_SHARED = "concept-shared"
_CONCEPT_TASK = "concept-task"
_CONCEPT_DRAW = "concept-draw"
_COVSHIFT_MEAN = "covshift-mean"
_COVSHIFT_DRAW = "covshift-draw"
TRAIN = 0  # draw-stream index for training sets
TEST = 1  # draw-stream index for held-out test sets


@dataclass(frozen=True)
class ConceptShiftSpec:
    """Concept-shift generator parameters."""

    sigma_c2: float
    b: int = 100
    n_k: int = 10
    d: int = 20
    sigma_y2: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.sigma_c2 <= 1.0:
            raise ValueError("sigma_c2 must lie in [0, 1]")
        if self.b < 1 or self.n_k < 1 or self.d < 1:
            raise ValueError("b, n_k and d must be positive")
        if self.sigma_y2 <= 0:
            raise ValueError("sigma_y2 must be positive")


def _concept_beta(spec: ConceptShiftSpec, k: int, beta_0: np.ndarray) -> tuple[np.ndarray, int]:
    g = rng.stream(spec.seed, _CONCEPT_TASK, k)
    sign = 1 if g.integers(0, 2) == 1 else -1
    eps = g.normal(size=spec.d)
    beta = sign * np.sqrt(1.0 - spec.sigma_c2) * beta_0 + np.sqrt(spec.sigma_c2) * eps
    return beta, (0 if sign > 0 else 1)


def _concept_sample(spec: ConceptShiftSpec, k: int, beta: np.ndarray, group: int, n: int, split: int) -> AgentDataset:
    g = rng.stream(spec.seed, _CONCEPT_DRAW, k, split)
    X = g.normal(loc=1.0, size=(n, spec.d))
    y = X @ beta + np.sqrt(spec.sigma_y2) * g.normal(size=n)
    return AgentDataset(X, y, group=group)


def gen_concept_shift(spec: ConceptShiftSpec) -> tuple[list[AgentDataset], list[np.ndarray], list[int]]:
    """Training sets, true regression vectors, and group ids (0 / 1)."""
    beta_0 = rng.stream(spec.seed, _CONCEPT_SHARED).normal(size=spec.d)
    datasets, betas, groups = [], [], []
    for k in range(spec.b):
        beta, group = _concept_beta(spec, k, beta_0)
        datasets.append(_concept_sample(spec, k, beta, group, spec.n_k, TRAIN))
        betas.append(beta)
        groups.append(group)
    return datasets, betas, groups


def concept_shift_test_sets(spec: ConceptShiftSpec, n_test: int) -> list[AgentDataset]:
    """Held-out sets from each agent's own law, on independent streams."""
    beta_0 = rng.stream(spec.seed, _CONCEPT_SHARED).normal(size=spec.d)
    sets = []
    for k in range(spec.b):
        beta, group = _concept_beta(spec, k, beta_0)
        sets.append(_concept_sample(spec, k, beta, group, n_test, TEST))
    return sets


@dataclass(frozen=True)
class CovariateShiftSpec:
    """Covariate-shift generator parameters (three feature groups)."""

    b: int = 100
    n_k: int = 20
    d: int = 4
    k1: int = 30
    k2: int = 30
    v1_sq: float = 0.01
    v2_sq: float = 0.3
    sigma1_sq: float = 1.0  # not fixed by the generator's reference tables
    sigma2_sq: float = 1.0  # not fixed by the generator's reference tables
    mu0: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.b < 1 or self.n_k < 1:
            raise ValueError("b and n_k must be positive")
        if self.d < 2:
            raise ValueError("the response formula needs d >= 2")
        if self.k1 < 0 or self.k2 < 0 or self.k1 + self.k2 > self.b:
            raise ValueError("group sizes must be non-negative and fit within b")
        for name in ("v1_sq", "v2_sq", "sigma1_sq", "sigma2_sq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        mu0 = self.mu0 if self.mu0 is not None else (2.0,) * self.d
        mu0 = tuple(float(v) for v in mu0)
        if len(mu0) != self.d:
            raise ValueError("mu0 must have length d")
        object.__setattr__(self, "mu0", mu0)

    def group_of(self, k: int) -> int:
        if k < self.k1:
            return 0
        if k < self.k1 + self.k2:
            return 1
        return 2


def covariate_response(X: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Shared conditional law of Y given X (noise passed in for testability)."""
    return np.sin(3.0 * X[:, 0]) + 0.5 * X[:, 1] ** 2 + 0.1 * X[:, 2:].sum(axis=1) + noise


def _covariate_mean(spec: CovariateShiftSpec, k: int) -> np.ndarray | None:
    group = spec.group_of(k)
    if group == 2:
        return None
    g = rng.stream(spec.seed, _COVSHIFT_MEAN, k)
    if group == 0:
        return np.sqrt(spec.v1_sq) * g.normal(size=spec.d)
    return np.asarray(spec.mu0) + np.sqrt(spec.v2_sq) * g.normal(size=spec.d)


def _covariate_sample(spec: CovariateShiftSpec, k: int, n: int, split: int) -> AgentDataset:
    group = spec.group_of(k)
    g = rng.stream(spec.seed, _COVSHIFT_DRAW, k, split)
    if group == 2:
        X = g.uniform(-6.0, 6.0, size=(n, spec.d))
    else:
        mu_k = _covariate_mean(spec, k)
        scale = np.sqrt(spec.sigma1_sq if group == 0 else spec.sigma2_sq)
        X = mu_k + scale * g.normal(size=(n, spec.d))
    y = covariate_response(X, 0.2 * g.normal(size=n))  # noise variance 0.04
    return AgentDataset(X, y, group=group)


def gen_covariate_shift(spec: CovariateShiftSpec) -> tuple[list[AgentDataset], list[int]]:
    """Training sets and group ids (0, 1, 2)."""
    datasets = [_covariate_sample(spec, k, spec.n_k, TRAIN) for k in range(spec.b)]
    return datasets, [spec.group_of(k) for k in range(spec.b)]


def covariate_shift_test_sets(spec: CovariateShiftSpec, n_test: int) -> list[AgentDataset]:
    """Held-out sets from each agent's own feature law."""
    return [_covariate_sample(spec, k, n_test, TEST) for k in range(spec.b)]


def write_csv(datasets: list[AgentDataset], path) -> None:
    """Dataset schema: header agent_id, x_1..x_d, y; one row per sample."""
    if not datasets:
        raise ValueError("nothing to write")
    d = datasets[0].dim
    labeled = datasets[0].has_labels
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["agent_id"] + [f"x_{j}" for j in range(1, d + 1)] + (["y"] if labeled else [])
        writer.writerow(header)
        for agent_id, ds in enumerate(datasets):
            X = ds.X
            y = ds.y
            for i in range(ds.n):
                row = [str(agent_id)] + [f"{v:.17g}" for v in X[i]]
                if labeled:
                    row.append(f"{y[i]:.17g}")
                writer.writerow(row)


@dataclass(frozen=True)
class CsvSchema:
    """Column names for generic dataset ingestion."""

    agent_col: str = "agent_id"
    label_col: str | None = "y"
    feature_cols: tuple[str, ...] | None = None  # None: every other column

    def __post_init__(self):
        if self.feature_cols is not None:
            object.__setattr__(self, "feature_cols", tuple(self.feature_cols))


def load_csv(path, schema: CsvSchema = CsvSchema()) -> list[AgentDataset]:
    """One dataset per distinct agent id, in first-appearance order.

    Errors carry 1-based physical row numbers (the header is row 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        rows = list(reader)

    def col_index(name: str) -> int:
        try:
            return header.index(name)
        except ValueError:
            raise ValueError(f"{path}: missing column {name!r}") from None

    agent_idx = col_index(schema.agent_col)
    label_idx = col_index(schema.label_col) if schema.label_col is not None else None
    if schema.feature_cols is not None:
        feature_idx = [col_index(c) for c in schema.feature_cols]
    else:
        feature_idx = [
            j for j in range(len(header)) if j != agent_idx and j != label_idx
        ]
    if not feature_idx:
        raise ValueError(f"{path}: no feature columns")

    by_agent: dict[str, tuple[list[list[float]], list[float]]] = {}
    for row_pos, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}: row {row_pos} has {len(row)} cells, expected {len(header)}")
        agent = row[agent_idx]
        feats, labels = by_agent.setdefault(agent, ([], []))

        def parse(j: int) -> float:
            try:
                return float(row[j])
            except ValueError:
                raise ValueError(
                    f"{path}: row {row_pos}, column {header[j]!r}: non-numeric cell {row[j]!r}"
                ) from None

        feats.append([parse(j) for j in feature_idx])
        if label_idx is not None:
            labels.append(parse(label_idx))

    if not by_agent:
        raise ValueError(f"{path}: no data rows")
    datasets = []
    for agent, (feats, labels) in by_agent.items():
        if not feats:
            raise ValueError(f"{path}: agent {agent!r} has no rows")
        datasets.append(AgentDataset(np.array(feats), np.array(labels) if labels else None))
    return datasets
