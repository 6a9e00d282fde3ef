"""Bus injection model: admittance operators, injections, residuals and the QCQP form."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost import QUADRATIC_VOLTAGE, TOTAL_LOSS, WEIGHTED_GENERATION, CostSpec, check_defined_on
from .netmodel import Network


@dataclass(frozen=True, eq=False)
class VoltageProfile:
    """Complex bus voltages with the slack phase pinned to zero."""

    V: np.ndarray

    def __post_init__(self):
        V = np.array(self.V, dtype=complex)
        if V.ndim != 1 or V.size == 0:
            raise ValueError("voltage profile must be a non-empty vector")
        if V[0].imag != 0.0 or not V[0].real > 0:
            raise ValueError(f"slack voltage must be real and positive (angle 0), got {V[0]}")
        V.setflags(write=False)
        object.__setattr__(self, "V", V)

    def __len__(self):
        return self.V.size

    @property
    def magnitude(self):
        return np.abs(self.V)

    @property
    def angle(self):
        return np.angle(self.V)


def as_voltages(V) -> np.ndarray:
    if isinstance(V, VoltageProfile):
        return V.V
    return np.asarray(V, dtype=complex)


@dataclass(frozen=True, eq=False)
class AdmittanceOperators:
    Y: np.ndarray
    Y_rows: np.ndarray  # Y_rows[j] = e_j e_j^H Y
    Phi: np.ndarray
    Psi: np.ndarray
    J: np.ndarray


def admittance_matrix(net: Network) -> np.ndarray:
    nb = len(net.buses)
    Y = np.zeros((nb, nb), dtype=complex)
    for ln in net.lines:
        a, b, y = ln.from_bus, ln.to_bus, ln.y
        Y[a, a] += y
        Y[b, b] += y
        Y[a, b] -= y
        Y[b, a] -= y
    return Y


def admittance_operators(net: Network) -> AdmittanceOperators:
    Y = admittance_matrix(net)
    nb = Y.shape[0]
    rows = np.zeros((nb, nb, nb), dtype=complex)
    J = np.zeros((nb, nb, nb), dtype=complex)
    for j in range(nb):
        rows[j, j, :] = Y[j, :]
        J[j, j, j] = 1.0
    YjH = rows.conj().transpose(0, 2, 1)
    Phi = 0.5 * (YjH + rows)
    Psi = (YjH - rows) / 2j
    return AdmittanceOperators(Y=Y, Y_rows=rows, Phi=Phi, Psi=Psi, J=J)


def injections_from_voltage(net: Network, V) -> np.ndarray:
    """s_j = sum_k conj(y_jk) V_j (conj(V_j) - conj(V_k)) over lines at j."""
    V = as_voltages(V)
    s = np.zeros(len(net.buses), dtype=complex)
    for ln in net.lines:
        a, b = ln.from_bus, ln.to_bus
        yc = np.conj(ln.y)
        s[a] += yc * V[a] * np.conj(V[a] - V[b])
        s[b] += yc * V[b] * np.conj(V[b] - V[a])
    return s


def bim_residual(net: Network, V, s) -> np.ndarray:
    """Per-bus complex mismatch s_j - s_j(V); V solves the BIM for s iff it is zero."""
    return np.asarray(s, dtype=complex) - injections_from_voltage(net, V)


def line_losses(net: Network, V) -> np.ndarray:
    """z |y (V_j - V_k)|^2 per line (Ohm's-law currents)."""
    V = as_voltages(V)
    out = np.empty(net.m, dtype=complex)
    for e, ln in enumerate(net.lines):
        I = ln.y * (V[ln.from_bus] - V[ln.to_bus])
        out[e] = ln.z * abs(I) ** 2
    return out


# ---------------------------------------------------------------------------
# QCQP standard form


@dataclass(frozen=True, eq=False)
class QcqpConstraint:
    M: np.ndarray
    b: float
    label: str

    def value(self, V) -> float:
        V = as_voltages(V)
        return float(np.real(np.vdot(V, self.M @ V)))

    def satisfied(self, V, tol=1e-9) -> bool:
        return self.value(V) <= self.b + tol


@dataclass(frozen=True, eq=False)
class Qcqp:
    C: np.ndarray
    constraints: tuple

    def objective(self, V) -> float:
        V = as_voltages(V)
        return float(np.real(np.vdot(V, self.C @ V)))


def cost_matrix(net: Network, cost: CostSpec, ops: AdmittanceOperators = None) -> np.ndarray:
    """Hermitian C with V^H C V equal to the cost (generation constants dropped)."""
    ops = ops or admittance_operators(net)
    if cost.variant == TOTAL_LOSS:
        return ops.Phi.sum(axis=0)
    if cost.variant == WEIGHTED_GENERATION:
        w = np.asarray(cost.weights, dtype=float)
        if w.size != len(net.buses):
            raise ValueError("need one generation weight per bus")
        return np.tensordot(w, ops.Phi, axes=1)
    if cost.variant == QUADRATIC_VOLTAGE:
        check_defined_on(cost.C, net.edges, len(net.buses))
        return cost.C
    raise ValueError(cost.variant)


def build_qcqp(net: Network, cost: CostSpec) -> Qcqp:
    """Rewrite OPF as min V^H C V s.t. V^H M_l V <= b_l; infinite bounds drop their row."""
    ops = admittance_operators(net)
    rows = []
    for j, bus in enumerate(net.buses):
        pairs = (
            (ops.Phi[j], bus.s_max.real, bus.s_min.real, "p"),
            (ops.Psi[j], bus.s_max.imag, bus.s_min.imag, "q"),
            (ops.J[j], bus.v_max, bus.v_min, "v"),
        )
        for M, hi, lo, name in pairs:
            if math.isfinite(hi):
                rows.append(QcqpConstraint(M, float(hi), f"{name}_max[{j}]"))
            if math.isfinite(lo):
                rows.append(QcqpConstraint(-M, float(-lo), f"{name}_min[{j}]"))
    return Qcqp(C=cost_matrix(net, cost, ops), constraints=tuple(rows))
