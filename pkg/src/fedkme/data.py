"""Per-agent datasets and the raw-data access audit used by the simulator.

An :class:`AgentDataset` holds one agent's sample matrix: features ``X``
(n rows, d columns), an optional label/target column ``y``, and an optional
group id.  The full sample tuple ``Z`` is ``[X, y]`` when labels are
present, else ``X`` alone.

Reads of the raw arrays are observable through a module-level audit hook;
the federated simulator uses it to assert that computing one agent's
collaboration weights never touches another agent's raw data.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Iterator

import numpy as np

# active audit logs, per thread so concurrent repetitions stay independent
_AUDIT_STATE = threading.local()


def _active_logs() -> list[list["AgentDataset"]]:
    logs = getattr(_AUDIT_STATE, "logs", None)
    if logs is None:
        logs = []
        _AUDIT_STATE.logs = logs
    return logs


@contextmanager
def audit_raw_access() -> Iterator[list["AgentDataset"]]:
    """Record which datasets have their raw arrays read inside the block.

    The log only sees reads made by the current thread; a window opened in
    one worker never observes another worker's accesses.
    """
    log: list[AgentDataset] = []
    logs = _active_logs()
    logs.append(log)
    try:
        yield log
    finally:
        logs.remove(log)


class AgentDataset:
    """One agent's local sample: features, optional labels, optional group id."""

    def __init__(self, X, y=None, group: int | None = None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d (n, d), got shape {X.shape}")
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if y is not None:
            y = np.asarray(y, dtype=float).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise ValueError(f"y length {y.shape[0]} != n rows {X.shape[0]}")
            if not np.all(np.isfinite(y)):
                raise ValueError("y contains non-finite entries")
        self._X = X
        self._y = y
        self.group = group

    def _record(self) -> None:
        for log in _active_logs():
            log.append(self)

    @property
    def X(self) -> np.ndarray:
        self._record()
        return self._X

    @property
    def y(self) -> np.ndarray | None:
        self._record()
        return self._y

    @property
    def has_labels(self) -> bool:
        return self._y is not None

    @property
    def n(self) -> int:
        return self._X.shape[0]

    @property
    def dim(self) -> int:
        """Feature dimension d (labels excluded)."""
        return self._X.shape[1]

    @property
    def ambient_dim(self) -> int:
        """Dimension of the full sample tuple Z = (X, y) or X alone."""
        return self._X.shape[1] + (1 if self._y is not None else 0)

    def z(self, scope: str = "full") -> np.ndarray:
        """Sample matrix for the given scope: "full" tuples or "features" only."""
        if scope == "features":
            return self.X
        if scope == "full":
            if self._y is None:
                return self.X
            return np.column_stack([self.X, self.y])
        raise ValueError(f"unknown scope {scope!r}, expected 'full' or 'features'")

    def __repr__(self) -> str:
        lbl = ", labeled" if self._y is not None else ""
        grp = f", group={self.group}" if self.group is not None else ""
        return f"AgentDataset(n={self.n}, d={self.dim}{lbl}{grp})"
