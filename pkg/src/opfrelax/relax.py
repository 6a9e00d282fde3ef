"""SOCP relaxations of OPF in both models, exactness checks, solution recovery
and a brute-force reference optimum for tiny radial networks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bfm import (ANGLE_TOL, AngleRecoveryResult, BranchFlowState, ComplexState, bfm_residual,
                  bim_to_bfm, check_cycle_condition, cone_gaps, recover_angles, relax_magnitudes)
from .bim import as_voltages
from .cost import QUADRATIC_VOLTAGE, TOTAL_LOSS, WEIGHTED_GENERATION, CostSpec, check_defined_on
from .errors import ConvergenceError, RelaxationInexactError, TopologyError
from .netmodel import AS_LISTED, AWAY, DirectedNetwork, Network, TreeIndex, orient, spanning_tree
from .pmatrix import PartialMatrix, rank1_completion, wg_to_x, x_to_wg
from .radial import solve_radial
from .socp import OPTIMAL, ConeProblem, ConeSolution, RotatedCone, SolverOptions, solve

EXACT = "exact"
INEXACT_CONE = "inexact_cone"
INEXACT_CYCLE = "inexact_cycle"
EXACTNESS_TOL = 1e-6

__all__ = [
    "CostSpec", "BfmIndex", "BimIndex", "build_bfm_socp", "build_bim_socp", "ExactnessReport",
    "check_exactness", "OpfResult", "solve_opf", "recover_solution", "evaluate_cost",
    "BruteForceResult", "brute_force_opf", "default_orientation",
]


def default_orientation(net: Network) -> DirectedNetwork:
    return orient(net, AWAY if net.is_radial else AS_LISTED)


def _weights(net: Network, cost: CostSpec) -> np.ndarray:
    w = np.asarray(cost.weights, dtype=float)
    if w.size != len(net.buses):
        raise ValueError("need one generation weight per bus")
    return w


def _boxes(net: Network, lo, up, v_idx, p_idx, q_idx):
    s_min, s_max, v_min, v_max = net.bounds()
    lo[p_idx], up[p_idx] = s_min.real, s_max.real
    lo[q_idx], up[q_idx] = s_min.imag, s_max.imag
    # bus 0 voltage is pinned by an equality row instead of a box
    lo[v_idx[1:]], up[v_idx[1:]] = v_min[1:], v_max[1:]


# ---------------------------------------------------------------------------
# branch flow relaxation


@dataclass(frozen=True)
class BfmIndex:
    m: int
    nb: int

    @property
    def P(self):
        return np.arange(0, self.m)

    @property
    def Q(self):
        return np.arange(self.m, 2 * self.m)

    @property
    def l(self):
        return np.arange(2 * self.m, 3 * self.m)

    @property
    def v(self):
        return np.arange(3 * self.m, 3 * self.m + self.nb)

    @property
    def p(self):
        return np.arange(3 * self.m + self.nb, 3 * self.m + 2 * self.nb)

    @property
    def q(self):
        return np.arange(3 * self.m + 2 * self.nb, 3 * self.m + 3 * self.nb)

    @property
    def size(self) -> int:
        return 3 * self.m + 3 * self.nb

    def state(self, xvec) -> BranchFlowState:
        l = np.maximum(xvec[self.l], 0.0)
        return BranchFlowState(S=xvec[self.P] + 1j * xvec[self.Q], l=l, v=xvec[self.v],
                               s=xvec[self.p] + 1j * xvec[self.q])


def build_bfm_socp(net: Network, cost: CostSpec, dnet: DirectedNetwork = None):
    """Relaxed branch flow OPF: linear balance and voltage-drop rows, one cone
    |S_jk|^2 <= v_j l_jk per edge, and the OPF boxes."""
    dnet = dnet or default_orientation(net)
    m, nb = dnet.m, net.n + 1
    ix = BfmIndex(m, nb)
    r, x = dnet.z.real, dnet.z.imag
    t, h = dnet.tails, dnet.heads
    rows = []
    rhs = []
    for j in range(nb):
        re = np.zeros(ix.size)
        im = np.zeros(ix.size)
        for e in np.flatnonzero(t == j):
            re[ix.P[e]] += 1.0
            im[ix.Q[e]] += 1.0
        for e in np.flatnonzero(h == j):
            re[ix.P[e]] -= 1.0
            im[ix.Q[e]] -= 1.0
            re[ix.l[e]] += r[e]
            im[ix.l[e]] += x[e]
        re[ix.p[j]] = -1.0
        im[ix.q[j]] = -1.0
        rows += [re, im]
        rhs += [0.0, 0.0]
    for e in range(m):
        row = np.zeros(ix.size)
        row[ix.v[t[e]]] += 1.0
        row[ix.v[h[e]]] -= 1.0
        row[ix.P[e]] = -2 * r[e]
        row[ix.Q[e]] = -2 * x[e]
        row[ix.l[e]] = abs(dnet.z[e]) ** 2
        rows.append(row)
        rhs.append(0.0)
    pin = np.zeros(ix.size)
    pin[ix.v[0]] = 1.0
    rows.append(pin)
    rhs.append(net.v0)

    lo = np.full(ix.size, -math.inf)
    up = np.full(ix.size, math.inf)
    _boxes(net, lo, up, ix.v, ix.p, ix.q)
    cones = tuple(RotatedCone((ix.P[e], ix.Q[e]), ix.v[t[e]], ix.l[e]) for e in range(m))

    c = np.zeros(ix.size)
    if cost.variant == TOTAL_LOSS:
        c[ix.l] = r
    elif cost.variant == WEIGHTED_GENERATION:
        c[ix.p] = _weights(net, cost)
    elif cost.variant == QUADRATIC_VOLTAGE:
        C = cost.C
        check_defined_on(C, dnet.edges, nb)
        c[ix.v] += C.diagonal().real
        for e, (j, k) in enumerate(dnet.edges):
            # 2 Re(C_kj W_jk) with W_jk = v_j - conj(z) S_jk
            al, be = C[k, j].real, C[k, j].imag
            c[ix.v[j]] += 2 * al
            c[ix.P[e]] += 2 * (-al * r[e] - be * x[e])
            c[ix.Q[e]] += 2 * (-al * x[e] + be * r[e])
    else:
        raise ValueError(cost.variant)
    return ConeProblem(c, np.array(rows), np.array(rhs), cones, lo, up), ix, dnet


# ---------------------------------------------------------------------------
# bus injection relaxation


@dataclass(frozen=True)
class BimIndex:
    m: int
    nb: int

    @property
    def d(self):
        return np.arange(0, self.nb)

    @property
    def re(self):
        return np.arange(self.nb, self.nb + self.m)

    @property
    def im(self):
        return np.arange(self.nb + self.m, self.nb + 2 * self.m)

    @property
    def p(self):
        return np.arange(self.nb + 2 * self.m, 2 * self.nb + 2 * self.m)

    @property
    def q(self):
        return np.arange(2 * self.nb + 2 * self.m, 3 * self.nb + 2 * self.m)

    @property
    def size(self) -> int:
        return 3 * self.nb + 2 * self.m

    def partial(self, xvec, edges) -> PartialMatrix:
        return PartialMatrix(self.nb, tuple(edges), xvec[self.d], xvec[self.re] + 1j * xvec[self.im])


def build_bim_socp(net: Network, cost: CostSpec):
    """Relaxed bus injection OPF over the partial matrix W_G: injection rows
    s_j = sum conj(y)(W_jj - W_jk), one 2x2 psd cone per line, OPF boxes."""
    m, nb = net.m, net.n + 1
    ix = BimIndex(m, nb)
    A_p = np.zeros((nb, ix.size))
    A_q = np.zeros((nb, ix.size))
    for e, ln in enumerate(net.lines):
        j, k = ln.from_bus, ln.to_bus
        g, b = ln.y.real, ln.y.imag
        a, c = ix.re[e], ix.im[e]
        # from end: conj(y)(W_jj - W_jk)
        A_p[j, ix.d[j]] += g
        A_p[j, a] -= g
        A_p[j, c] -= b
        A_q[j, ix.d[j]] -= b
        A_q[j, a] += b
        A_q[j, c] -= g
        # to end: conj(y)(W_kk - conj(W_jk))
        A_p[k, ix.d[k]] += g
        A_p[k, a] -= g
        A_p[k, c] += b
        A_q[k, ix.d[k]] -= b
        A_q[k, a] += b
        A_q[k, c] += g
    A_p[np.arange(nb), ix.p] = -1.0
    A_q[np.arange(nb), ix.q] = -1.0
    pin = np.zeros((1, ix.size))
    pin[0, ix.d[0]] = 1.0
    A = np.vstack([A_p, A_q, pin])
    b = np.concatenate([np.zeros(2 * nb), [net.v0]])

    lo = np.full(ix.size, -math.inf)
    up = np.full(ix.size, math.inf)
    _boxes(net, lo, up, ix.d, ix.p, ix.q)
    cones = tuple(
        RotatedCone((ix.re[e], ix.im[e]), ix.d[ln.from_bus], ix.d[ln.to_bus]) for e, ln in enumerate(net.lines)
    )
    c = np.zeros(ix.size)
    if cost.variant == TOTAL_LOSS:
        c[ix.p] = 1.0
    elif cost.variant == WEIGHTED_GENERATION:
        c[ix.p] = _weights(net, cost)
    elif cost.variant == QUADRATIC_VOLTAGE:
        C = cost.C
        check_defined_on(C, net.edges, nb)
        c[ix.d] += C.diagonal().real
        for e, (j, k) in enumerate(net.edges):
            c[ix.re[e]] += 2 * C[k, j].real
            c[ix.im[e]] -= 2 * C[k, j].imag
    else:
        raise ValueError(cost.variant)
    return ConeProblem(c, A, b, cones, lo, up), ix


# ---------------------------------------------------------------------------
# exactness and recovery


@dataclass(frozen=True, eq=False)
class ExactnessReport:
    gaps: np.ndarray  # v_j l_jk - |S_jk|^2 per edge
    tight: np.ndarray
    cycle: AngleRecoveryResult = None
    verdict: str = EXACT
    worst_edge: tuple = None
    tol: float = EXACTNESS_TOL

    @property
    def exact(self) -> bool:
        return self.verdict == EXACT

    def to_dict(self, edges=None) -> dict:
        out = {
            "verdict": self.verdict,
            "tol": self.tol,
            "max_gap": float(np.abs(self.gaps).max(initial=0.0)),
            "gaps": [float(g) for g in self.gaps],
        }
        if self.worst_edge is not None:
            out["worst_edge"] = list(self.worst_edge)
        if self.cycle is not None:
            out["cycle_defects"] = {str(k): float(v) for k, v in self.cycle.defects.items()}
        return out


def check_exactness(x: BranchFlowState, dnet: DirectedNetwork, tree: TreeIndex = None,
                    tol: float = EXACTNESS_TOL, angle_tol: float = ANGLE_TOL) -> ExactnessReport:
    gaps = cone_gaps(dnet, x)
    tight = np.abs(gaps) <= tol
    if not np.all(tight):
        worst = int(np.argmax(np.abs(gaps)))
        return ExactnessReport(gaps, tight, None, INEXACT_CONE, dnet.edges[worst], tol)
    tree = tree or spanning_tree(dnet)
    cyc = None
    if not tree.is_radial:
        cyc = check_cycle_condition(x, dnet, tree, angle_tol)
        if not cyc.satisfied:
            worst = max(cyc.defects, key=lambda e: abs(cyc.defects[e]))
            return ExactnessReport(gaps, tight, cyc, INEXACT_CYCLE, dnet.edges[worst], tol)
    return ExactnessReport(gaps, tight, cyc, EXACT, None, tol)


def evaluate_cost(net: Network, cost: CostSpec, x: BranchFlowState, dnet: DirectedNetwork) -> float:
    if cost.variant == TOTAL_LOSS:
        return float(dnet.z.real @ x.l)
    if cost.variant == WEIGHTED_GENERATION:
        return float(_weights(net, cost) @ x.s.real)
    if cost.variant == QUADRATIC_VOLTAGE:
        W = x_to_wg(x, dnet)
        C = cost.C
        val = float(C.diagonal().real @ W.diag)
        for (j, k), w in zip(W.edges, W.off):
            val += 2 * (C[k, j] * w).real
        return val
    raise ValueError(cost.variant)


@dataclass(frozen=True, eq=False)
class OpfResult:
    model: str
    objective: float
    status: str
    report: ExactnessReport
    x: BranchFlowState  # relaxed optimum in branch-flow variables (mapped through g for bim)
    W: PartialMatrix  # relaxed optimum as a partial matrix (mapped through g^-1 for bfm)
    dnet: DirectedNetwork
    solution: ConeSolution
    problem: ConeProblem
    recovered: ComplexState = None
    info: dict = field(default_factory=dict)


def solve_opf(net: Network, cost: CostSpec, model: str = "bfm", tol: float = EXACTNESS_TOL,
              opts: SolverOptions = None, recover: bool = True) -> OpfResult:
    """Build and solve one SOCP relaxation, check exactness and recover when exact."""
    dnet = default_orientation(net)
    if model == "bfm":
        prob, ix, dnet = build_bfm_socp(net, cost, dnet)
    elif model == "bim":
        prob, ix = build_bim_socp(net, cost)
    else:
        raise ValueError(f"unknown model {model!r}")
    sol = solve(prob, opts)
    if sol.status != OPTIMAL:
        raise ConvergenceError(f"cone solver stopped with status {sol.status}", sol.residuals.max, sol.iterations)
    if model == "bfm":
        x = ix.state(sol.x)
        W = x_to_wg(x, dnet)
    else:
        W = ix.partial(sol.x, net.edges)
        x = wg_to_x(W, dnet, clip=True)
    report = check_exactness(x, dnet, tol=tol)
    res = OpfResult(model, sol.objective, sol.status, report, x, W, dnet, sol, prob)
    if recover and report.exact:
        res = OpfResult(model, sol.objective, sol.status, report, x, W, dnet, sol, prob,
                        recovered=recover_solution(res))
    return res


def _tighten(x: BranchFlowState, dnet: DirectedNetwork) -> BranchFlowState:
    """Project onto the cone boundary l = |S|^2 / v_j (moves l by at most gap / v_j)."""
    return BranchFlowState(S=x.S, l=np.abs(x.S) ** 2 / x.v[dnet.tails], v=x.v, s=x.s)


def recover_solution(result: OpfResult, route: str = None) -> ComplexState:
    """Recover a power-flow state from an exact relaxed optimum.

    The bfm route applies angle recovery to the branch-flow point; the bim
    route completes the partial matrix to V V^H along a spanning tree.
    """
    if not result.report.exact:
        raise RelaxationInexactError(result.report)
    route = route or result.model
    dnet = result.dnet
    if route == "bfm":
        return recover_angles(_tighten(result.x, dnet), dnet, tol=math.inf)
    if route == "bim":
        comp = rank1_completion(result.W, tol=math.inf)
        return bim_to_bfm(dnet, comp.V)
    raise ValueError(f"unknown route {route!r}")


# ---------------------------------------------------------------------------
# brute force reference


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    value: float
    s: np.ndarray  # best injections over N+
    state: BranchFlowState
    feasible_points: int
    evaluated_points: int
    grid_slack: float
    lipschitz: float


def _feasible(net: Network, x: BranchFlowState, tol: float) -> bool:
    s_min, s_max, v_min, v_max = net.bounds()
    if np.any(x.v[1:] < v_min[1:] - tol) or np.any(x.v[1:] > v_max[1:] + tol):
        return False
    s0 = x.s[0]
    return (s_min[0].real - tol <= s0.real <= s_max[0].real + tol
            and s_min[0].imag - tol <= s0.imag <= s_max[0].imag + tol)


def brute_force_opf(net: Network, cost: CostSpec, resolution: int = None, budget: int = 4000,
                    rounds: int = 8, tol: float = 1e-9) -> BruteForceResult:
    """Grid search over injection boxes with a power-flow solve per point,
    then repeated zoom around the incumbent.  Returns the best feasible value,
    an upper bound on the true optimum, plus a Lipschitz-based grid slack."""
    if not net.is_radial:
        raise TopologyError("brute force needs a radial network")
    if net.n > 3:
        raise ValueError("brute force is limited to n <= 3")
    s_min, s_max, _, _ = net.bounds()
    lo = np.concatenate([s_min[1:].real, s_min[1:].imag])
    hi = np.concatenate([s_max[1:].real, s_max[1:].imag])
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("all non-slack injection boxes must be bounded")
    free = hi > lo
    k = int(free.sum())
    if resolution is None:
        resolution = max(3, int(budget ** (1.0 / k))) if k else 1
    dnet = orient(net, AWAY)
    n = net.n

    def evaluate(pt):
        s = pt[:n] + 1j * pt[n:]
        try:
            x = solve_radial(net, s)
        except ConvergenceError:
            return None
        if not _feasible(net, x, tol):
            return None
        return evaluate_cost(net, cost, x, dnet), x

    best = None
    evaluated = 0
    feasible = 0
    lip = 0.0
    box_lo, box_hi = lo.copy(), hi.copy()
    spacing = np.zeros_like(lo)
    for rnd in range(rounds if k else 1):
        axes = [np.linspace(a, b, resolution) if f else np.array([a]) for a, b, f in zip(box_lo, box_hi, free)]
        spacing = np.array([(b - a) / (resolution - 1) if f else 0.0 for a, b, f in zip(box_lo, box_hi, free)])
        vals = {}
        for idx in itertools.product(*(range(len(ax)) for ax in axes)):
            pt = np.array([ax[i] for ax, i in zip(axes, idx)])
            evaluated += 1
            out = evaluate(pt)
            if out is None:
                continue
            feasible += 1
            vals[idx] = out[0]
            if best is None or out[0] < best[0]:
                best = (out[0], pt, out[1])
        if rnd == 0:
            # Lipschitz estimate from differences between grid neighbours
            for idx, val in vals.items():
                for d in range(len(idx)):
                    nb = idx[:d] + (idx[d] + 1,) + idx[d + 1:]
                    if nb in vals and spacing[d] > 0:
                        lip = max(lip, abs(vals[nb] - val) / spacing[d])
        if best is None or not k:
            break
        centre = best[1]
        box_lo = np.maximum(lo, centre - spacing)
        box_hi = np.minimum(hi, centre + spacing)
    if best is None:
        raise ValueError("no feasible grid point found")
    slack = lip * float(np.linalg.norm(spacing)) / 2.0
    value, pt, x = best
    s = np.concatenate([[x.s[0]], pt[:n] + 1j * pt[n:]])
    return BruteForceResult(value, s, x, feasible, evaluated, slack, lip)
