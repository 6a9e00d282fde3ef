"""DistFlow on radial networks: residuals, the backward/forward sweep, the
simplified (lossless) DistFlow in both orientations and the flow/voltage bounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bfm import BranchFlowState, balance_residual
from .errors import ConvergenceError, TopologyError
from .netmodel import AWAY, TOWARD, DirectedNetwork, Network, TreeIndex, orient, spanning_tree

SWEEP_TOL = 1e-12
SWEEP_MAX_ITER = 200


@dataclass(frozen=True)
class DistFlowResidual:
    balance: np.ndarray  # per bus, complex
    drop: np.ndarray  # per edge, voltage drop equation
    quadratic: np.ndarray  # per edge, v_j l_jk - |S_jk|^2

    @property
    def max(self) -> float:
        parts = [np.abs(r).max() for r in (self.balance, self.drop, self.quadratic) if r.size]
        return float(max(parts)) if parts else 0.0

    @property
    def max_linear(self) -> float:
        parts = [np.abs(r).max() for r in (self.balance, self.drop) if r.size]
        return float(max(parts)) if parts else 0.0


def distflow_residual(dnet: DirectedNetwork, x: BranchFlowState) -> DistFlowResidual:
    z = dnet.z
    t, h = dnet.tails, dnet.heads
    return DistFlowResidual(
        balance=balance_residual(dnet, x.S, z * x.l, x.s),
        drop=x.v[t] - x.v[h] - 2 * np.real(np.conj(z) * x.S) + np.abs(z) ** 2 * x.l,
        quadratic=x.v[t] * x.l - np.abs(x.S) ** 2,
    )


def _injections(net: Network, s) -> np.ndarray:
    """Accept injections over N (length n) or N+ (length n+1, entry 0 ignored)."""
    s = np.asarray(s, dtype=complex)
    if s.shape == (net.n,):
        s = np.concatenate([[0.0], s])
    if s.shape != (net.n + 1,):
        raise ValueError(f"expected {net.n} or {net.n + 1} injections, got {s.shape}")
    out = s.copy()
    out[0] = 0.0
    return out


def _radial_tree(net: Network, mode=AWAY):
    if not net.is_radial:
        raise TopologyError(f"radial solver requires a tree (m={net.m}, n={net.n})")
    dnet = orient(net, mode)
    return dnet, spanning_tree(dnet)


def solve_radial(net: Network, s, v0: float = None, tol: float = SWEEP_TOL,
                 max_iter: int = SWEEP_MAX_ITER) -> BranchFlowState:
    """Backward/forward sweep on the away-from-root orientation.

    Starting from l = 0 and v = v0 the iteration follows the high-voltage
    solution branch.  The returned state has s_0 filled in.
    """
    dnet, tree = _radial_tree(net, AWAY)
    v0 = net.v0 if v0 is None else float(v0)
    s = _injections(net, s)
    z = dnet.z
    nb = net.n + 1
    S = np.zeros(net.m, dtype=complex)
    l = np.zeros(net.m)
    v = np.full(nb, v0)
    order = tree.order
    delta = np.inf
    for it in range(1, max_iter + 1):
        for j in reversed(order[1:]):
            e = tree.parent_edge[j]
            S[e] = sum(S[tree.parent_edge[c]] for c in tree.children[j]) + z[e] * l[e] - s[j]
        v_new = v.copy()
        for j in order[1:]:
            e = tree.parent_edge[j]
            v_new[j] = v_new[tree.parent[j]] - 2 * np.real(np.conj(z[e]) * S[e]) + abs(z[e]) ** 2 * l[e]
        if np.any(v_new <= 0) or not np.all(np.isfinite(v_new)):
            raise ConvergenceError("sweep left the positive-voltage region", float(delta), it)
        l_new = np.abs(S) ** 2 / v_new[dnet.tails]
        delta = max(np.abs(l_new - l).max(initial=0.0), np.abs(v_new - v).max())
        l, v = l_new, v_new
        if delta < tol:
            break
    else:
        raise ConvergenceError("backward/forward sweep did not converge", float(delta), max_iter)
    # one last backward pass so S is consistent with the final l
    for j in reversed(order[1:]):
        e = tree.parent_edge[j]
        S[e] = sum(S[tree.parent_edge[c]] for c in tree.children[j]) + z[e] * l[e] - s[j]
    s = s.copy()
    s[0] = sum(S[tree.parent_edge[c]] for c in tree.children[0])
    return BranchFlowState(S=S, l=l, v=v, s=s)


@dataclass(frozen=True, eq=False)
class LinearState:
    dnet: DirectedNetwork
    S_lin: np.ndarray
    v_lin: np.ndarray


def solve_linear_distflow(net: Network, s, v0: float = None) -> LinearState:
    """Simplified DistFlow (losses dropped) on the away-from-root orientation."""
    dnet, tree = _radial_tree(net, AWAY)
    v0 = net.v0 if v0 is None else float(v0)
    s = _injections(net, s)
    S = np.zeros(net.m, dtype=complex)
    for j in reversed(tree.order[1:]):
        S[tree.parent_edge[j]] = sum(S[tree.parent_edge[c]] for c in tree.children[j]) - s[j]
    v = np.full(net.n + 1, v0)
    for j in tree.order[1:]:
        e = tree.parent_edge[j]
        v[j] = v[tree.parent[j]] - 2 * np.real(np.conj(dnet.z[e]) * S[e])
    return LinearState(dnet, S, v)


def solve_linear_reverse(net: Network, s, v0: float = None) -> LinearState:
    """Simplified DistFlow with every line pointing toward the root."""
    dnet, tree = _radial_tree(net, TOWARD)
    v0 = net.v0 if v0 is None else float(v0)
    s = _injections(net, s)
    S = np.zeros(net.m, dtype=complex)
    for j in reversed(tree.order[1:]):
        S[tree.parent_edge[j]] = sum(S[tree.parent_edge[c]] for c in tree.children[j]) + s[j]
    v = np.full(net.n + 1, v0)
    for j in tree.order[1:]:
        e = tree.parent_edge[j]
        v[j] = v[tree.parent[j]] + 2 * np.real(np.conj(dnet.z[e]) * S[e])
    return LinearState(dnet, S, v)


@dataclass(frozen=True, eq=False)
class BoundReport:
    """Flow and voltage bounds of the simplified model against a DistFlow state.

    For the away orientation ``S_gap = S - S_lin`` must be componentwise >= 0;
    for the toward orientation ``S_gap = S_lin - S``.  In both ``v_gap = v_lin - v >= 0``.
    ``subtree_injection[e]`` is -sum of s over the subtree below edge e (away
    sign convention) and ``subtree_loss[e]`` the matching sum of z l over the
    subtree edges, excluding e itself.
    """

    mode: str
    S_gap: np.ndarray
    v_gap: np.ndarray
    subtree_injection: np.ndarray
    subtree_loss: np.ndarray
    flow_identity: np.ndarray
    voltage_identity: np.ndarray
    edge_violations: tuple
    bus_violations: tuple
    tol: float

    @property
    def ok(self) -> bool:
        return not self.edge_violations and not self.bus_violations

    @property
    def identity_residual(self) -> float:
        parts = [np.abs(self.flow_identity).max(initial=0.0), np.abs(self.voltage_identity).max(initial=0.0)]
        return float(max(parts))

    @property
    def all_tight(self) -> bool:
        gaps = np.concatenate([self.S_gap.real, self.S_gap.imag, self.v_gap])
        return bool(np.all(np.abs(gaps) <= self.tol))


def check_bounds(x: BranchFlowState, lin: LinearState, tree: TreeIndex = None,
                 tol: float = 1e-9) -> BoundReport:
    """Compare a DistFlow (or relaxed) state with the simplified solution on the same orientation."""
    dnet = lin.dnet
    if dnet.mode not in (AWAY, TOWARD):
        raise TopologyError("bounds need an away- or toward-root orientation")
    tree = tree or spanning_tree(dnet)
    z = dnet.z
    away = dnet.mode == AWAY
    sign = 1.0 if away else -1.0
    m = dnet.m
    sub_s = np.zeros(m, dtype=complex)
    sub_loss = np.zeros(m, dtype=complex)
    flow_id = np.zeros(m, dtype=complex)
    for j in range(1, tree.n_nodes):
        e = tree.parent_edge[j]
        sub_s[e] = -sum(x.s[k] for k in tree.subtree_nodes[j])
        sub_loss[e] = sum(z[f] * x.l[f] for f in tree.subtree_edges[j])
        if away:
            flow_id[e] = x.S[e] - (sub_s[e] + z[e] * x.l[e] + sub_loss[e])
        else:
            flow_id[e] = x.S[e] - (-sub_s[e] - sub_loss[e])
    v_id = np.zeros(tree.n_nodes)
    for j in range(1, tree.n_nodes):
        drop = sum(2 * np.real(np.conj(z[e]) * x.S[e]) - abs(z[e]) ** 2 * x.l[e] for e in tree.paths[j])
        v_id[j] = x.v[j] - (x.v[0] - sign * drop)
    S_gap = sign * (x.S - lin.S_lin)
    v_gap = lin.v_lin - x.v
    bad_edges = tuple(int(e) for e in np.flatnonzero((S_gap.real < -tol) | (S_gap.imag < -tol)))
    bad_buses = tuple(int(j) for j in np.flatnonzero(v_gap < -tol))
    return BoundReport(
        mode=dnet.mode, S_gap=S_gap, v_gap=v_gap, subtree_injection=sub_s, subtree_loss=sub_loss,
        flow_identity=flow_id, voltage_identity=v_id, edge_violations=bad_edges,
        bus_violations=bad_buses, tol=tol,
    )
