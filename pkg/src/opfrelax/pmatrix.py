"""Partial Hermitian matrices on graphs, rank-1 completion, chordal extensions
and the clique-decomposed SDP standard form."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bfm import ANGLE_TOL, BranchFlowState
from .bim import VoltageProfile, as_voltages, build_qcqp
from .cost import CostSpec
from .errors import CompletionError, CycleConditionError, DegenerateEdgeError
from .netmodel import DirectedNetwork, Network, basis_cycle, build_tree, cycle_defects, edge_list, node_count

RANK1_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PartialMatrix:
    """Hermitian entries on the diagonal and on the edges of a graph.

    ``off[e]`` is [W]_jk for ``edges[e] = (j, k)``; [W]_kj is its conjugate.
    """

    n_nodes: int
    edges: tuple
    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        d = np.asarray(self.diag)
        if np.iscomplexobj(d):
            if np.any(np.abs(d.imag) > 1e-12 * np.maximum(1.0, np.abs(d.real))):
                raise ValueError("diagonal of a Hermitian partial matrix must be real")
            d = d.real
        d = np.array(d, dtype=float)
        off = np.array(self.off, dtype=complex)
        if d.shape != (self.n_nodes,) or off.shape != (len(edges),):
            raise ValueError("diag must cover every node and off every edge")
        if np.any(d <= 0):
            raise ValueError("diagonal entries must be strictly positive")
        d.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "off", off)
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(edges)})

    def entry(self, j: int, k: int) -> complex:
        if j == k:
            return complex(self.diag[j])
        i = self._index.get((j, k))
        if i is not None:
            return complex(self.off[i])
        i = self._index.get((k, j))
        if i is not None:
            return complex(np.conj(self.off[i]))
        raise KeyError(f"entry ({j}, {k}) is not specified on the graph")

    def oriented(self, edges) -> np.ndarray:
        """Off-diagonal entries following another orientation of the same edges."""
        return np.array([self.entry(a, b) for a, b in edges], dtype=complex)


def partial_from_voltage(V, G) -> PartialMatrix:
    V = as_voltages(V)
    edges = edge_list(G)
    off = np.array([V[a] * np.conj(V[b]) for a, b in edges], dtype=complex)
    return PartialMatrix(V.size, tuple(edges), np.abs(V) ** 2, off)


@dataclass(frozen=True)
class EdgeCheck:
    edge: tuple
    gap: float  # W_jj W_kk - |W_jk|^2
    psd: bool
    rank1: bool


def two_by_two_checks(W: PartialMatrix, tol: float = RANK1_TOL) -> list:
    out = []
    for (a, b), w in zip(W.edges, W.off):
        prod = W.diag[a] * W.diag[b]
        gap = prod - abs(w) ** 2
        rel = gap / max(prod, 1.0)
        out.append(EdgeCheck((a, b), float(gap), bool(rel >= -tol), bool(abs(rel) <= tol)))
    return out


@dataclass(frozen=True, eq=False)
class CycleReport:
    satisfied: bool
    defects: dict = field(default_factory=dict)
    cycles: dict = field(default_factory=dict)


def wg_cycle_condition(W: PartialMatrix, angle_tol: float = ANGLE_TOL) -> CycleReport:
    """Angles of the off-diagonals must sum to zero mod 2 pi around each basis cycle."""
    tree = build_tree(W.n_nodes, W.edges)
    cycles = {e: basis_cycle(tree, e) for e in tree.nontree_edges}
    for e, (_, steps) in cycles.items():
        for f, _ in steps:
            if W.off[f] == 0:
                raise DegenerateEdgeError(W.edges[f])
    defects = cycle_defects(tree, np.angle(W.off))
    ok = all(abs(d) <= angle_tol for d in defects.values())
    return CycleReport(ok, defects, {e: c[0] for e, c in cycles.items()})


@dataclass(frozen=True, eq=False)
class CompletionResult:
    V: VoltageProfile
    W: np.ndarray


def rank1_completion(W: PartialMatrix, tree=None, tol: float = RANK1_TOL,
                     angle_tol: float = ANGLE_TOL) -> CompletionResult:
    """The unique psd rank-1 completion: |V_j| = sqrt(W_jj) and phases
    accumulated along spanning-tree paths, angle V_j = -sum angle W_ik over P_j."""
    for chk in two_by_two_checks(W, tol):
        if not chk.rank1:
            raise CompletionError(f"edge {chk.edge} is not 2x2 rank-1 (gap {chk.gap:.3e})")
    cyc = wg_cycle_condition(W, angle_tol)
    if not cyc.satisfied:
        bad = {e: d for e, d in cyc.defects.items() if abs(d) > angle_tol}
        raise CycleConditionError(bad, {e: cyc.cycles[e] for e in bad})
    tree = tree or build_tree(W.n_nodes, W.edges)
    theta = np.zeros(W.n_nodes)
    for j in tree.order[1:]:
        p = tree.parent[j]
        theta[j] = theta[p] - np.angle(W.entry(p, j))
    V = np.sqrt(W.diag) * np.exp(1j * theta)
    V[0] = math.sqrt(W.diag[0])
    return CompletionResult(VoltageProfile(V), np.outer(V, V.conj()))


# ---------------------------------------------------------------------------
# chordal extensions


@dataclass(frozen=True)
class ChordalExtension:
    nodes: tuple
    edges: tuple  # original edges
    fill: tuple  # added edges, each sorted
    ordering: tuple  # perfect elimination ordering of the extended graph
    cliques: tuple  # maximal cliques, each sorted
    clique_tree: tuple  # (i, j, separator) with i < j clique indices

    @property
    def extended_edges(self) -> tuple:
        return tuple(sorted({tuple(sorted(e)) for e in self.edges} | set(self.fill)))

    @property
    def decoupling_count(self) -> int:
        """Entries duplicated across overlapping cliques: |separator|^2 per clique-tree edge."""
        return sum(len(sep) ** 2 for _, _, sep in self.clique_tree)


def _graph_nodes(G, edges):
    if isinstance(G, (Network, DirectedNetwork)):
        return tuple(range(node_count(G)))
    return tuple(sorted({v for e in edges for v in e}))


def _adjacency(nodes, edges):
    adj = {v: set() for v in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return adj


def is_perfect_elimination_ordering(nodes, edges, ordering) -> bool:
    """Every vertex's later neighbours form a clique."""
    adj = _adjacency(nodes, edges)
    pos = {v: i for i, v in enumerate(ordering)}
    if set(pos) != set(nodes):
        return False
    for v in ordering:
        later = [u for u in adj[v] if pos[u] > pos[v]]
        for i, a in enumerate(later):
            for b in later[i + 1:]:
                if b not in adj[a]:
                    return False
    return True


def min_degree_ordering(nodes, edges) -> tuple:
    """Greedy minimum-degree elimination, ties broken by ascending id."""
    adj = _adjacency(nodes, edges)
    order = []
    while adj:
        v = min(adj, key=lambda u: (len(adj[u]), u))
        nbrs = adj.pop(v)
        for a in nbrs:
            adj[a].discard(v)
            adj[a] |= nbrs - {a}
        order.append(v)
    return tuple(order)


def _clique_tree(cliques):
    """Maximum-weight spanning tree of the clique intersection graph (Kruskal)."""
    cand = []
    for i in range(len(cliques)):
        for j in range(i + 1, len(cliques)):
            sep = tuple(sorted(set(cliques[i]) & set(cliques[j])))
            if sep:
                cand.append((-len(sep), i, j, sep))
    cand.sort()
    root = list(range(len(cliques)))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    out = []
    for _, i, j, sep in cand:
        ri, rj = find(i), find(j)
        if ri != rj:
            root[ri] = rj
            out.append((i, j, sep))
    return tuple(sorted(out))


def chordal_extension(G, ordering=None) -> ChordalExtension:
    """Fill edges by eliminating in ``ordering`` (minimum degree if omitted)."""
    edges = tuple(tuple(e) for e in edge_list(G))
    nodes = _graph_nodes(G, edges)
    ordering = tuple(ordering) if ordering is not None else min_degree_ordering(nodes, edges)
    if sorted(ordering) != sorted(nodes):
        raise ValueError("ordering must list every node exactly once")
    adj = _adjacency(nodes, edges)
    pos = {v: i for i, v in enumerate(ordering)}
    fill = set()
    for v in ordering:
        later = sorted(u for u in adj[v] if pos[u] > pos[v])
        for i, a in enumerate(later):
            for b in later[i + 1:]:
                if b not in adj[a]:
                    adj[a].add(b)
                    adj[b].add(a)
                    fill.add((min(a, b), max(a, b)))
    ext_edges = [(a, b) for a in adj for b in adj[a] if a < b]
    if not is_perfect_elimination_ordering(nodes, ext_edges, ordering):
        raise AssertionError("elimination produced a non-chordal graph")
    cands = [tuple(sorted({v} | {u for u in adj[v] if pos[u] > pos[v]})) for v in ordering]
    cliques = []
    for c in cands:
        sc = set(c)
        if not any(sc < set(o) for o in cands) and c not in cliques:
            cliques.append(c)
    cliques.sort()
    return ChordalExtension(
        nodes=nodes, edges=edges, fill=tuple(sorted(fill)), ordering=ordering,
        cliques=tuple(cliques), clique_tree=_clique_tree(cliques),
    )


# ---------------------------------------------------------------------------
# clique-decomposed SDP in standard form


@dataclass(frozen=True)
class SdpConstraint:
    """Re sum(coeff * X_block[r, c]) <= bound."""

    label: str
    terms: tuple  # (block, r, c, coeff)
    bound: float


@dataclass(frozen=True)
class Decoupling:
    """X_parent[j, k] = u_jk = X_child[j, k] across one clique-tree edge."""

    parent: int
    child: int
    j: int
    k: int


@dataclass(frozen=True, eq=False)
class SdpStandardForm:
    blocks: tuple  # node tuple per maximal clique
    objective: tuple  # (block, r, c, coeff)
    constraints: tuple
    decoupling: tuple

    @property
    def block_sizes(self) -> tuple:
        return tuple(len(b) for b in self.blocks)

    def blocks_from_matrix(self, W) -> list:
        W = np.asarray(W, dtype=complex)
        return [W[np.ix_(b, b)] for b in self.blocks]

    def _linear(self, X, terms) -> float:
        return float(sum((c * X[b][r, k]).real for b, r, k, c in terms))

    def evaluate(self, X) -> dict:
        """Objective, constraint slacks, decoupling residuals and block psd-ness at block values X."""
        X = [np.asarray(x, dtype=complex) for x in X]
        slack = np.array([c.bound - self._linear(X, c.terms) for c in self.constraints])
        dec = []
        for d in self.decoupling:
            pb, cb = self.blocks[d.parent], self.blocks[d.child]
            a = X[d.parent][pb.index(d.j), pb.index(d.k)]
            b = X[d.child][cb.index(d.j), cb.index(d.k)]
            dec.append(abs(a - b))
        min_eig = [float(np.linalg.eigvalsh((x + x.conj().T) / 2).min()) for x in X]
        return {
            "objective": self._linear(X, self.objective),
            "slack": slack,
            "decoupling": np.array(dec),
            "min_eig": np.array(min_eig),
        }

    def to_dict(self) -> dict:
        def terms(ts):
            return [[b, r, c, [float(np.real(v)), float(np.imag(v))]] for b, r, c, v in ts]

        return {
            "blocks": [list(b) for b in self.blocks],
            "objective": terms(self.objective),
            "constraints": [{"label": c.label, "terms": terms(c.terms), "bound": c.bound} for c in self.constraints],
            "decoupling": [[d.parent, d.child, d.j, d.k] for d in self.decoupling],
        }

    def dumps(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def sdp_standard_form(ext: ChordalExtension, net: Network, cost: CostSpec) -> SdpStandardForm:
    """One psd block per maximal clique; each matrix entry is owned by the first
    clique containing it and copied (via a decoupling equality) into the others
    that share it along the clique tree."""
    qcqp = build_qcqp(net, cost)
    blocks = ext.cliques
    # root the clique tree at block 0; the cliques holding a given entry form a
    # subtree, and its topmost block owns the entry
    nbrs = {i: [] for i in range(len(blocks))}
    for a, b, sep in ext.clique_tree:
        nbrs[a].append((b, sep))
        nbrs[b].append((a, sep))
    order, links, seen = [0], [], {0}
    for bi in order:
        for c, sep in sorted(nbrs[bi]):
            if c not in seen:
                seen.add(c)
                order.append(c)
                links.append((bi, c, sep))
    owner = {}
    for bi in order:
        for j in blocks[bi]:
            for k in blocks[bi]:
                owner.setdefault((j, k), bi)

    def to_terms(M):
        out = []
        rows, cols = np.nonzero(M)
        for k, j in zip(rows, cols):
            # V^H M V = sum_{j,k} M[k, j] W[j, k]
            bi = owner.get((int(j), int(k)))
            if bi is None:
                raise ValueError(f"matrix entry ({j}, {k}) lies outside the chordal extension")
            q = blocks[bi]
            out.append((bi, q.index(int(j)), q.index(int(k)), complex(M[k, j])))
        return tuple(out)

    cons = tuple(SdpConstraint(c.label, to_terms(c.M), c.b) for c in qcqp.constraints)
    dec = [Decoupling(p, c, j, k) for p, c, sep in links for j in sep for k in sep]
    return SdpStandardForm(tuple(blocks), to_terms(qcqp.C), cons, tuple(dec))


# ---------------------------------------------------------------------------
# linear correspondence with branch-flow variables


def wg_to_x(W: PartialMatrix, dnet: DirectedNetwork, clip: bool = False) -> BranchFlowState:
    """g: S = conj(y)(W_jj - W_jk), l = |y|^2 (W_jj + W_kk - W_jk - W_kj), v = diag.

    ``clip`` zeroes slightly negative l left by solver round-off.
    """
    y = dnet.y
    t, h = dnet.tails, dnet.heads
    Wjk = W.oriented(dnet.edges)
    S = np.conj(y) * (W.diag[t] - Wjk)
    l = np.abs(y) ** 2 * (W.diag[t] + W.diag[h] - 2 * Wjk.real)
    if clip:
        l = np.maximum(l, 0.0)
    return BranchFlowState(S=S, l=l, v=W.diag, s=wg_injections(W, dnet))


def wg_injections(W: PartialMatrix, G) -> np.ndarray:
    """s_j = sum_k conj(y_jk) (W_jj - W_jk) over lines at j."""
    net = G.base if isinstance(G, DirectedNetwork) else G
    s = np.zeros(W.n_nodes, dtype=complex)
    for ln in net.lines:
        a, b, yc = ln.from_bus, ln.to_bus, np.conj(ln.y)
        w = W.entry(a, b)
        s[a] += yc * (W.diag[a] - w)
        s[b] += yc * (W.diag[b] - np.conj(w))
    return s


def x_to_wg(x: BranchFlowState, dnet: DirectedNetwork) -> PartialMatrix:
    """g^{-1}: W_jk = v_j - conj(z) S_jk."""
    off = x.v[dnet.tails] - np.conj(dnet.z) * x.S
    return PartialMatrix(x.v.size, dnet.edges, x.v, off)


@dataclass(frozen=True, eq=False)
class WgResidual:
    s: np.ndarray
    s_low: np.ndarray  # componentwise max(s_min - s, 0)
    s_high: np.ndarray  # componentwise max(s - s_max, 0)
    v_low: np.ndarray
    v_high: np.ndarray

    @property
    def max(self) -> float:
        parts = [
            np.abs(self.s_low.real).max(), np.abs(self.s_low.imag).max(),
            np.abs(self.s_high.real).max(), np.abs(self.s_high.imag).max(),
            self.v_low.max(), self.v_high.max(),
        ]
        return float(max(parts))


def _excess(a, b):
    """Componentwise max(a - b, 0) for complex arrays; infinite bounds give 0."""
    with np.errstate(invalid="ignore"):
        re = np.nan_to_num(np.maximum(a.real - b.real, 0.0), nan=0.0)
        im = np.nan_to_num(np.maximum(a.imag - b.imag, 0.0), nan=0.0)
    return re + 1j * im


def wg_constraints_residual(W: PartialMatrix, net: Network) -> WgResidual:
    s_min, s_max, v_min, v_max = net.bounds()
    s = wg_injections(W, net)
    return WgResidual(
        s=s,
        s_low=_excess(s_min, s),
        s_high=_excess(s, s_max),
        v_low=np.maximum(v_min - W.diag, 0.0),
        v_high=np.maximum(W.diag - v_max, 0.0),
    )
