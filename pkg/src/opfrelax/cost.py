"""OPF cost functions.  Every variant depends on the voltages only through the
partial matrix W_G (equivalently on the relaxed branch-flow variables)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

TOTAL_LOSS = "total_loss"
WEIGHTED_GENERATION = "weighted_generation"
QUADRATIC_VOLTAGE = "quadratic_voltage"


@dataclass(frozen=True, eq=False)
class CostSpec:
    variant: str
    weights: Optional[tuple] = None
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.variant == WEIGHTED_GENERATION:
            w = np.asarray(self.weights, dtype=float)
            if not np.all(np.isfinite(w)):
                raise ValueError("generation weights must be finite")
            object.__setattr__(self, "weights", tuple(w.tolist()))
        elif self.variant == QUADRATIC_VOLTAGE:
            C = np.asarray(self.C, dtype=complex)
            if C.ndim != 2 or C.shape[0] != C.shape[1] or not np.allclose(C, C.conj().T, atol=1e-12):
                raise ValueError("quadratic cost matrix must be square Hermitian")
            object.__setattr__(self, "C", C)
        elif self.variant != TOTAL_LOSS:
            raise ValueError(f"unknown cost variant {self.variant!r}")

    @classmethod
    def total_loss(cls):
        return cls(TOTAL_LOSS)

    @classmethod
    def weighted_generation(cls, weights):
        return cls(WEIGHTED_GENERATION, weights=tuple(weights))

    @classmethod
    def quadratic_voltage(cls, C):
        return cls(QUADRATIC_VOLTAGE, C=np.asarray(C))

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        if self.weights is not None:
            out["weights"] = list(self.weights)
        return out


def check_defined_on(C: np.ndarray, edges, n_nodes: int):
    """Raise unless C vanishes off the diagonal and the edges of the graph."""
    if C.shape != (n_nodes, n_nodes):
        raise ValueError(f"cost matrix must be {n_nodes}x{n_nodes}")
    mask = np.eye(n_nodes, dtype=bool)
    for a, b in edges:
        mask[a, b] = mask[b, a] = True
    if np.any(np.abs(C[~mask]) > 0):
        raise ValueError("quadratic cost matrix is not defined on the network graph")
