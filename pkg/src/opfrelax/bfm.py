"""Branch flow model: residuals, the BIM <-> BFM bijection, the magnitude
relaxation h, implied angle differences, the cycle condition and angle recovery."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bim import VoltageProfile, as_voltages, bim_residual, injections_from_voltage
from .errors import CycleConditionError, DegenerateEdgeError, NotInXncError, ResidualError
from .netmodel import DirectedNetwork, TreeIndex, basis_cycle, cycle_defects, spanning_tree, wrap_angle

ANGLE_TOL = 1e-6
CONE_TOL = 1e-8


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ComplexState:
    """x~ = (S, I, V, s): sending-end powers and currents per directed edge,
    bus voltages and injections per bus."""

    S: np.ndarray
    I: np.ndarray
    V: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        for name in ("S", "I", "V", "s"):
            val = getattr(self, name)
            if isinstance(val, VoltageProfile):
                val = val.V
            object.__setattr__(self, name, _frozen(val, complex))
        if self.S.shape != self.I.shape or self.V.shape != self.s.shape:
            raise ValueError("edge vectors S, I and bus vectors V, s must have matching lengths")

    @property
    def voltage(self) -> VoltageProfile:
        return VoltageProfile(self.V)


@dataclass(frozen=True, eq=False)
class BranchFlowState:
    """x = (S, l, v, s) with l = |I|^2 and v = |V|^2."""

    S: np.ndarray
    l: np.ndarray
    v: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "S", _frozen(self.S, complex))
        object.__setattr__(self, "l", _frozen(self.l, float))
        object.__setattr__(self, "v", _frozen(self.v, float))
        object.__setattr__(self, "s", _frozen(self.s, complex))
        if self.S.shape != self.l.shape or self.v.shape != self.s.shape:
            raise ValueError("edge vectors S, l and bus vectors v, s must have matching lengths")
        if np.any(self.l < 0):
            raise ValueError("l must be nonnegative")
        if np.any(self.v <= 0):
            raise ValueError("v must be positive")


def cone_gaps(dnet: DirectedNetwork, x: BranchFlowState) -> np.ndarray:
    """v_j l_jk - |S_jk|^2 per directed edge j -> k."""
    return x.v[dnet.tails] * x.l - np.abs(x.S) ** 2


@dataclass(frozen=True)
class BfmResidual:
    balance: np.ndarray  # per bus
    ohm: np.ndarray  # per edge
    power: np.ndarray  # per edge

    @property
    def max(self) -> float:
        parts = [np.abs(r).max() for r in (self.balance, self.ohm, self.power) if r.size]
        return float(max(parts)) if parts else 0.0


def balance_residual(dnet: DirectedNetwork, S, loss, s) -> np.ndarray:
    """sum_out S_jk - sum_in (S_ij - loss_ij) - s_j per bus."""
    r = -np.asarray(s, dtype=complex).copy()
    np.add.at(r, dnet.tails, S)
    np.add.at(r, dnet.heads, -(np.asarray(S) - loss))
    return r


def bfm_residual(dnet: DirectedNetwork, xt: ComplexState) -> BfmResidual:
    z, y = dnet.z, dnet.y
    t, h = dnet.tails, dnet.heads
    loss = z * np.abs(xt.I) ** 2
    return BfmResidual(
        balance=balance_residual(dnet, xt.S, loss, xt.s),
        ohm=xt.I - y * (xt.V[t] - xt.V[h]),
        power=xt.S - xt.V[t] * np.conj(xt.I),
    )


def bim_to_bfm(dnet: DirectedNetwork, V) -> ComplexState:
    """Currents by Ohm's law, sending-end powers S = V_j I^H, injections from the BIM."""
    V = as_voltages(V)
    t, h = dnet.tails, dnet.heads
    I = dnet.y * (V[t] - V[h])
    S = V[t] * np.conj(I)
    return ComplexState(S=S, I=I, V=V, s=injections_from_voltage(dnet.base, V))


def bfm_to_bim(dnet: DirectedNetwork, xt: ComplexState, tol: float = 1e-8) -> VoltageProfile:
    """Voltage component of a BFM solution; rejects states off the BFM manifold."""
    res = bfm_residual(dnet, xt).max
    if res > tol:
        raise ResidualError("state does not satisfy the branch flow equations", res)
    V = VoltageProfile(xt.V)
    r = float(np.abs(bim_residual(dnet.base, V, xt.s)).max())
    if r > tol:
        raise ResidualError("voltages do not reproduce the injections", r)
    return V


def relax_magnitudes(xt: ComplexState) -> BranchFlowState:
    """h: drop phase angles, keeping l = |I|^2 and v = |V|^2."""
    return BranchFlowState(S=xt.S, l=np.abs(xt.I) ** 2, v=np.abs(xt.V) ** 2, s=xt.s)


def beta(x: BranchFlowState, dnet: DirectedNetwork) -> np.ndarray:
    """Implied angle difference across each edge: angle of v_j - conj(z) S_jk."""
    phasor = x.v[dnet.tails] - np.conj(dnet.z) * x.S
    for e, ph in enumerate(phasor):
        if ph == 0:
            raise DegenerateEdgeError(dnet.edges[e])
    return wrap_angle(np.angle(phasor))


@dataclass(frozen=True, eq=False)
class AngleRecoveryResult:
    satisfied: bool
    theta: np.ndarray  # over buses 1..n
    k: np.ndarray  # winding numbers, B theta - beta = 2 pi k
    defects: dict = field(default_factory=dict)
    cycles: dict = field(default_factory=dict)
    beta: np.ndarray = None

    @property
    def theta_full(self) -> np.ndarray:
        return np.concatenate([[0.0], self.theta])

    @property
    def max_defect(self) -> float:
        return max((abs(d) for d in self.defects.values()), default=0.0)


def angles_from_tree(tree: TreeIndex, b: np.ndarray) -> np.ndarray:
    """theta = P(B_T^{-1} beta_T)."""
    return wrap_angle(tree.B_T_inv @ b[list(tree.tree_edges)]) if tree.n else np.zeros(0)


def check_cycle_condition(x: BranchFlowState, dnet: DirectedNetwork, tree: TreeIndex = None,
                          angle_tol: float = ANGLE_TOL) -> AngleRecoveryResult:
    tree = tree or spanning_tree(dnet)
    b = beta(x, dnet)
    theta = angles_from_tree(tree, b)
    defects = cycle_defects(tree, b)
    k = np.rint((tree.B @ theta - b) / (2 * np.pi)).astype(int)
    bad = {e: d for e, d in defects.items() if abs(d) > angle_tol}
    cycles = {e: basis_cycle(tree, e)[0] for e in defects}
    return AngleRecoveryResult(
        satisfied=not bad, theta=theta, k=k, defects=defects, cycles=cycles, beta=b
    )


def recover_angles(x: BranchFlowState, dnet: DirectedNetwork, tree: TreeIndex = None,
                   tol: float = CONE_TOL, angle_tol: float = ANGLE_TOL) -> ComplexState:
    """h^{-1}: rebuild phases from implied angle differences."""
    res = check_cycle_condition(x, dnet, tree, angle_tol)
    if not res.satisfied:
        bad = {e: d for e, d in res.defects.items() if abs(d) > angle_tol}
        raise CycleConditionError(bad, {e: res.cycles[e] for e in bad})
    gaps = cone_gaps(dnet, x)
    scale = np.maximum(1.0, np.abs(x.S) ** 2)
    worst = int(np.argmax(np.abs(gaps) / scale)) if gaps.size else 0
    if gaps.size and abs(gaps[worst]) / scale[worst] > tol:
        raise NotInXncError(dnet.edges[worst], float(gaps[worst]))
    theta = res.theta_full
    V = np.sqrt(x.v) * np.exp(1j * theta)
    V[0] = np.sqrt(x.v[0])
    I = np.sqrt(x.l) * np.exp(1j * (theta[dnet.tails] - np.angle(x.S)))
    return ComplexState(S=x.S, I=I, V=V, s=x.s)


def reverse_orientation(x: BranchFlowState, dnet: DirectedNetwork) -> BranchFlowState:
    """State on dnet.reversed(): S^_kj = -(S_jk - z l_jk), same l and v."""
    return BranchFlowState(S=-(x.S - dnet.z * x.l), l=x.l, v=x.v, s=x.s)
