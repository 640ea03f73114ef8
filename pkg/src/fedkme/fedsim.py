"""In-process federated protocol simulator with a communication ledger.

The six protocol steps for a target agent are: the server samples the shared
random-feature coefficients, broadcasts them, every agent computes its local
embedding, non-target agents upload their embeddings (exactly once), the
target learns its collaboration weights from embeddings plus its own raw
data only, and the weighted risk is minimized (closed form or FedAvg).

There are no sockets; the ledger is the communication model.  Coefficients
are "transmitted" by regenerating them from the shared seed, but the ledger
charges the full payload of D x (ambient_dim + 1) scalars per agent.  A
raw-data access audit asserts that the weight-computation step never reads
another agent's sample matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .data import AgentDataset, audit_raw_access
from .embedding import POLY2, Embedding, embed, local_features
from .kernels import GAUSSIAN, KernelSpec, kernel_bound
from .models import FittedModel, ModelSpec, fedavg, fit_weighted
from .qagg import QaggConfig, SimplexWeights, build_problem, learn_weights, optimize
from .rff import RffParams, sample_rff

CLOSED_FORM = "closed_form"
FEDAVG = "fedavg"

LOCAL = "local"
GRAND_MEAN = "grand_mean"
ORACLE = "oracle"


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one protocol run needs besides the data."""

    kernel: KernelSpec
    d_rff: int
    seed: int
    qagg: QaggConfig
    model: ModelSpec
    embedding_scope: str = "full"
    optimizer_path: str = CLOSED_FORM
    fedavg_rounds: int = 200
    fedavg_local_steps: int = 5
    fedavg_lr: float = 0.05

    def __post_init__(self):
        if self.d_rff < 1:
            raise ValueError("d_rff must be at least 1")
        if self.embedding_scope not in ("full", "features"):
            raise ValueError("embedding_scope must be 'full' or 'features'")
        if self.optimizer_path not in (CLOSED_FORM, FEDAVG):
            raise ValueError("optimizer_path must be 'closed_form' or 'fedavg'")


class CommLedger:
    """Append-only transcript of every transmitted payload."""

    COLUMNS = ("round_label", "sender", "receiver", "payload_kind", "scalar_count")

    def __init__(self):
        self._entries: list[tuple[str, str, str, str, int]] = []

    def log(self, round_label: str, sender: str, receiver: str, payload_kind: str, scalar_count: int) -> None:
        if scalar_count < 0:
            raise ValueError("scalar_count must be non-negative")
        self._entries.append((round_label, sender, receiver, payload_kind, int(scalar_count)))

    @property
    def entries(self) -> tuple[tuple[str, str, str, str, int], ...]:
        return tuple(self._entries)

    def total(self, payload_kind: str | None = None) -> int:
        return sum(e[4] for e in self._entries if payload_kind is None or e[3] == payload_kind)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            writer.writerows(self._entries)


class ProtocolResult(NamedTuple):
    weights: SimplexWeights
    model: FittedModel
    ledger: CommLedger


def _protocol_mode(cfg: ProtocolConfig):
    """Shared representation for the run: RFF coefficients or poly2 summaries."""
    if cfg.kernel.kind == GAUSSIAN:
        return sample_rff(cfg.kernel, cfg.d_rff, cfg.seed)
    return POLY2


def _embed_all(cfg: ProtocolConfig, datasets, mode) -> list[Embedding]:
    return [embed(ds, mode, scope=cfg.embedding_scope) for ds in datasets]


def _charge_gamma(ledger: CommLedger, cfg: ProtocolConfig, mode, n_agents: int) -> None:
    if not isinstance(mode, RffParams):
        return
    payload = cfg.d_rff * (cfg.kernel.ambient_dim + 1)  # W rows plus phases
    for k in range(n_agents):
        ledger.log("sampling", "server", f"agent_{k}", "rff_coefficients", payload)


def _kme_payload(cfg: ProtocolConfig, mode, emb: Embedding) -> int:
    if isinstance(mode, RffParams):
        return cfg.d_rff
    p = emb.mean.shape[0]
    return p + p * (p + 1) // 2  # mean plus symmetric second moment


def _weight_cfg(cfg: ProtocolConfig, mode, datasets, target: int) -> QaggConfig:
    qcfg = replace(cfg.qagg, target_index=target)
    if isinstance(mode, RffParams):
        return qcfg
    # poly2 bound is data-dependent: each agent contributes its local scalar
    return replace(qcfg, m=kernel_bound(cfg.kernel, datasets))


def charge_fedavg(ledger: CommLedger, cfg: ProtocolConfig, model: FittedModel, weights: SimplexWeights) -> None:
    param_dim = int(np.size(model.coefficients)) + int(np.size(model.intercept))
    participants = [k for k in range(len(weights)) if weights.w[k] > 0.0]
    for rnd in range(cfg.fedavg_rounds):
        for k in participants:
            ledger.log(f"fedavg_{rnd}", "server", f"agent_{k}", "model_round_trip", 2 * param_dim)


def run_protocol(cfg: ProtocolConfig, datasets: list[AgentDataset], target: int) -> ProtocolResult:
    """Execute the six protocol steps for one target agent."""
    B = len(datasets)
    if B < 1:
        raise ValueError("at least one agent is required")
    if not 0 <= target < B:
        raise ValueError(f"target {target} out of range for {B} agents")
    if datasets[target].n < 2:
        raise ValueError("target agent needs at least two samples")

    ledger = CommLedger()
    mode = _protocol_mode(cfg)
    _charge_gamma(ledger, cfg, mode, B)

    embeddings = _embed_all(cfg, datasets, mode)
    for k, emb in enumerate(embeddings):
        if k == target:
            continue
        ledger.log("kme_upload", f"agent_{k}", "server", "kme", _kme_payload(cfg, mode, emb))
        if not isinstance(mode, RffParams):
            ledger.log("kme_upload", f"agent_{k}", "server", "kernel_bound", 1)

    qcfg = _weight_cfg(cfg, mode, datasets, target)
    with audit_raw_access() as log:
        local = local_features(datasets[target], mode, scope=cfg.embedding_scope)
        weights = optimize(build_problem(embeddings, local, qcfg), qcfg)
    if {id(ds) for ds in log} - {id(datasets[target])}:
        raise RuntimeError("weight computation read raw data of a non-target agent")

    if cfg.optimizer_path == FEDAVG:
        model = fedavg(
            cfg.model, weights, datasets,
            rounds=cfg.fedavg_rounds, local_steps=cfg.fedavg_local_steps, lr=cfg.fedavg_lr,
        )
        charge_fedavg(ledger, cfg, model, weights)
    else:
        model = fit_weighted(cfg.model, weights, datasets)

    return ProtocolResult(weights=weights, model=model, ledger=ledger)


def run_protocol_all(cfg: ProtocolConfig, datasets: list[AgentDataset]) -> tuple[list[SimplexWeights], CommLedger]:
    """Weight matrix for every agent as target; uploads charged once per agent."""
    B = len(datasets)
    if B < 1:
        raise ValueError("at least one agent is required")
    for k, ds in enumerate(datasets):
        if ds.n < 2:
            raise ValueError(f"agent {k} needs at least two samples to act as a target")

    ledger = CommLedger()
    mode = _protocol_mode(cfg)
    _charge_gamma(ledger, cfg, mode, B)
    embeddings = _embed_all(cfg, datasets, mode)
    for k, emb in enumerate(embeddings):
        ledger.log("kme_upload", f"agent_{k}", "server", "kme", _kme_payload(cfg, mode, emb))
        if not isinstance(mode, RffParams):
            ledger.log("kme_upload", f"agent_{k}", "server", "kernel_bound", 1)

    # local feature maps are each agent's own local computation
    locals_ = [local_features(ds, mode, scope=cfg.embedding_scope) for ds in datasets]
    qcfg = _weight_cfg(cfg, mode, datasets, 0)
    with audit_raw_access() as log:
        rows = learn_weights(embeddings, locals_, qcfg)
    if log:
        raise RuntimeError("server-side weight computation read raw agent data")
    return rows, ledger


def baseline_weights(
    policy: str,
    datasets: list[AgentDataset],
    target: int,
    groups: list[int] | None = None,
) -> SimplexWeights:
    """Reference weight policies: local, sample-proportional, group oracle."""
    B = len(datasets)
    if not 0 <= target < B:
        raise ValueError(f"target {target} out of range for {B} agents")
    sizes = np.array([ds.n for ds in datasets], dtype=float)
    if policy == LOCAL:
        w = np.zeros(B)
        w[target] = 1.0
        return SimplexWeights(w)
    if policy == GRAND_MEAN:
        return SimplexWeights(sizes / sizes.sum())
    if policy == ORACLE:
        if groups is None:
            raise ValueError("oracle weights need a group assignment")
        if len(groups) != B:
            raise ValueError("one group id per agent is required")
        mask = np.array([g == groups[target] for g in groups], dtype=float)
        if mask.sum() == 0:
            raise ValueError("target group is empty")
        w = sizes * mask
        return SimplexWeights(w / w.sum())
    raise ValueError(f"unknown baseline policy {policy!r}")
