"""Network data model, JSON case I/O, graph orientation and spanning-tree indexing.

Buses are numbered ``0..n`` with bus 0 the slack bus (root).  Lines keep their
position in the case file as their edge index everywhere in the package; an
orientation only decides which endpoint is the sending end.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CaseSemanticError, CaseSyntaxError, TopologyError

INF = math.inf
UNBOUNDED_LOW = complex(-INF, -INF)
UNBOUNDED_HIGH = complex(INF, INF)
DEFAULT_V_MIN = 0.81
DEFAULT_V_MAX = 1.21

AWAY = "away_from_root"
TOWARD = "toward_root"
AS_LISTED = "as_listed"
MODES = (AWAY, TOWARD, AS_LISTED)


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(a, dtype=float), 2 * math.pi)


@dataclass(frozen=True)
class Bus:
    id: int
    s_min: complex = UNBOUNDED_LOW
    s_max: complex = UNBOUNDED_HIGH
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX
    cost: float = 1.0  # generation weight c_j, only read by weighted-generation costs

    @property
    def fixed_injection(self) -> bool:
        return self.s_min == self.s_max and math.isfinite(self.s_min.real) and math.isfinite(self.s_min.imag)


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    z: complex

    @property
    def y(self) -> complex:
        return 1.0 / self.z


@dataclass(frozen=True)
class Network:
    buses: tuple
    lines: tuple
    v0: float = 1.0
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        _validate(self)
        adj = [[] for _ in self.buses]
        for e, ln in enumerate(self.lines):
            adj[ln.from_bus].append((ln.to_bus, e))
            adj[ln.to_bus].append((ln.from_bus, e))
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    @property
    def n(self) -> int:
        """Number of non-slack buses."""
        return len(self.buses) - 1

    @property
    def m(self) -> int:
        return len(self.lines)

    @property
    def is_radial(self) -> bool:
        return self.m == self.n

    @property
    def edges(self) -> list:
        return [(ln.from_bus, ln.to_bus) for ln in self.lines]

    @property
    def z(self) -> np.ndarray:
        return np.array([ln.z for ln in self.lines], dtype=complex)

    @property
    def y(self) -> np.ndarray:
        return 1.0 / self.z

    def neighbors(self, j: int):
        """(neighbor, edge index) pairs of bus j, ascending by neighbor id."""
        return self._adj[j]

    def bounds(self):
        """Arrays (s_min, s_max, v_min, v_max) over all buses."""
        s_min = np.array([b.s_min for b in self.buses], dtype=complex)
        s_max = np.array([b.s_max for b in self.buses], dtype=complex)
        v_min = np.array([b.v_min for b in self.buses], dtype=float)
        v_max = np.array([b.v_max for b in self.buses], dtype=float)
        return s_min, s_max, v_min, v_max


def _validate(net: Network):
    nb = len(net.buses)
    if nb < 1:
        raise CaseSemanticError("network has no buses")
    for i, b in enumerate(net.buses):
        if b.id != i:
            raise CaseSemanticError(f"bus ids must be 0..n in order; position {i} holds id {b.id}")
        if not b.v_min > 0:
            raise CaseSemanticError(f"bus {i}: v_min must be > 0 (got {b.v_min})")
        if b.v_min > b.v_max:
            raise CaseSemanticError(f"bus {i}: v_min > v_max")
        if b.s_min.real > b.s_max.real or b.s_min.imag > b.s_max.imag:
            raise CaseSemanticError(f"bus {i}: s_min exceeds s_max")
    if not net.v0 > 0:
        raise CaseSemanticError("v0 must be positive")
    seen = set()
    for e, ln in enumerate(net.lines):
        a, b = ln.from_bus, ln.to_bus
        if not (0 <= a < nb and 0 <= b < nb):
            raise CaseSemanticError(f"line {e} references unknown bus")
        if a == b:
            raise CaseSemanticError(f"line {e} is a self-loop at bus {a}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise CaseSemanticError(f"duplicate line between buses {key[0]} and {key[1]}")
        seen.add(key)
        if ln.z == 0 or not (math.isfinite(ln.z.real) and math.isfinite(ln.z.imag)):
            raise CaseSemanticError(f"line {e}: impedance must be finite and nonzero")
    if not _connected(nb, [(ln.from_bus, ln.to_bus) for ln in net.lines]):
        raise CaseSemanticError("network graph is disconnected")


def _connected(n_nodes: int, edges) -> bool:
    adj = [[] for _ in range(n_nodes)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n_nodes


# ---------------------------------------------------------------------------
# case file I/O


def _complex_bound(val, default: complex, where: str) -> complex:
    if val is None:
        return default
    if not (isinstance(val, (list, tuple)) and len(val) == 2):
        raise CaseSemanticError(f"{where}: complex values are [re, im] pairs")
    re = default.real if val[0] is None else float(val[0])
    im = default.imag if val[1] is None else float(val[1])
    return complex(re, im)


def _encode_real(x: float):
    return None if math.isinf(x) else x


def _encode_complex(c: complex):
    return [_encode_real(c.real), _encode_real(c.imag)]


def parse_case(text) -> Network:
    """Parse JSON case text (str or bytes) into a validated Network."""
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict) or "buses" not in doc or "lines" not in doc:
        raise CaseSemanticError("case must be an object with 'buses' and 'lines'")
    v0 = float(doc.get("v0", 1.0))
    buses = []
    for i, rec in enumerate(doc["buses"]):
        try:
            bid = int(rec["id"])
        except (KeyError, TypeError, ValueError):
            raise CaseSemanticError(f"bus record {i} lacks an integer 'id'") from None
        where = f"bus {bid}"
        s_min = _complex_bound(rec.get("s_min"), UNBOUNDED_LOW, where)
        s_max = _complex_bound(rec.get("s_max"), UNBOUNDED_HIGH, where)
        if bid == 0:
            v_lo = rec.get("v_min", v0)
            v_hi = rec.get("v_max", v0)
        else:
            v_lo = rec.get("v_min", DEFAULT_V_MIN)
            v_hi = rec.get("v_max", DEFAULT_V_MAX)
        buses.append(Bus(bid, s_min, s_max, float(v_lo), float(v_hi), float(rec.get("cost", 1.0))))
    lines = []
    for e, rec in enumerate(doc["lines"]):
        try:
            z = rec["z"]
            lines.append(Line(int(rec["from"]), int(rec["to"]), complex(float(z[0]), float(z[1]))))
        except (KeyError, TypeError, ValueError, IndexError):
            raise CaseSemanticError(f"line record {e} needs 'from', 'to' and 'z': [re, im]") from None
    return Network(tuple(buses), tuple(lines), v0)


def network_to_dict(net: Network) -> dict:
    buses = []
    for b in net.buses:
        rec = {"id": b.id}
        if b.s_min != UNBOUNDED_LOW:
            rec["s_min"] = _encode_complex(b.s_min)
        if b.s_max != UNBOUNDED_HIGH:
            rec["s_max"] = _encode_complex(b.s_max)
        rec["v_min"] = b.v_min
        rec["v_max"] = b.v_max
        if b.cost != 1.0:
            rec["cost"] = b.cost
        buses.append(rec)
    lines = [{"from": ln.from_bus, "to": ln.to_bus, "z": [ln.z.real, ln.z.imag]} for ln in net.lines]
    out = {"buses": buses, "lines": lines}
    if net.v0 != 1.0:
        out["v0"] = net.v0
    return out


def serialize_case(net: Network, indent=None) -> str:
    return json.dumps(network_to_dict(net), indent=indent)


# ---------------------------------------------------------------------------
# orientation


@dataclass(frozen=True)
class DirectedNetwork:
    base: Network
    edges: tuple  # edges[e] = (sending bus, receiving bus) for line e
    mode: str = AS_LISTED

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def z(self) -> np.ndarray:
        return self.base.z

    @property
    def y(self) -> np.ndarray:
        return self.base.y

    @property
    def tails(self) -> np.ndarray:
        return np.array([a for a, _ in self.edges], dtype=int)

    @property
    def heads(self) -> np.ndarray:
        return np.array([b for _, b in self.edges], dtype=int)

    def reversed(self) -> "DirectedNetwork":
        flip = {AWAY: TOWARD, TOWARD: AWAY}.get(self.mode, AS_LISTED)
        return DirectedNetwork(self.base, tuple((b, a) for a, b in self.edges), flip)


def _bfs_parents(n_nodes: int, edges, root: int = 0):
    adj = [[] for _ in range(n_nodes)]
    for e, (a, b) in enumerate(edges):
        adj[a].append((b, e))
        adj[b].append((a, e))
    for a in adj:
        a.sort()
    parent = [-1] * n_nodes
    parent_edge = [-1] * n_nodes
    order = [root]
    seen = [False] * n_nodes
    seen[root] = True
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for w, e in adj[u]:
            if not seen[w]:
                seen[w] = True
                parent[w] = u
                parent_edge[w] = e
                order.append(w)
                queue.append(w)
    if len(order) != n_nodes:
        raise TopologyError("graph is not connected")
    return parent, parent_edge, order


def orient(net: Network, mode: str = AS_LISTED) -> DirectedNetwork:
    """Direct every line per ``mode``; away/toward modes need a radial network."""
    if mode not in MODES:
        raise ValueError(f"unknown orientation mode {mode!r}")
    if mode == AS_LISTED:
        return DirectedNetwork(net, tuple(net.edges), AS_LISTED)
    if not net.is_radial:
        raise TopologyError(f"orientation {mode!r} requires a radial network (m={net.m}, n={net.n})")
    parent, _, _ = _bfs_parents(len(net.buses), net.edges)
    edges = []
    for a, b in net.edges:
        p, c = (a, b) if parent[b] == a else (b, a)
        edges.append((p, c) if mode == AWAY else (c, p))
    return DirectedNetwork(net, tuple(edges), mode)


# ---------------------------------------------------------------------------
# spanning trees


@dataclass(frozen=True)
class TreeIndex:
    """BFS spanning tree rooted at node 0 with path/subtree bookkeeping.

    ``tree_edges[j - 1]`` is the edge joining node j to its parent, so row
    ``j - 1`` of ``B_T`` and column ``j - 1`` of ``B`` both belong to node j.
    """

    n_nodes: int
    edges: tuple
    parent: tuple
    parent_edge: tuple
    children: tuple
    order: tuple
    paths: tuple
    subtree_nodes: tuple
    subtree_edges: tuple
    tree_edges: tuple
    nontree_edges: tuple
    B: np.ndarray
    B_T_inv: np.ndarray

    @property
    def n(self) -> int:
        return self.n_nodes - 1

    @property
    def is_radial(self) -> bool:
        return not self.nontree_edges

    @property
    def B_T(self) -> np.ndarray:
        return self.B[list(self.tree_edges)]

    @property
    def B_perp(self) -> np.ndarray:
        return self.B[list(self.nontree_edges)] if self.nontree_edges else np.zeros((0, self.n))

    def away_sign(self, e: int) -> int:
        """+1 if tree edge e is directed parent -> child, -1 otherwise."""
        a, b = self.edges[e]
        return 1 if self.parent[b] == a and self.parent_edge[b] == e else -1


def incidence_matrix(n_nodes: int, edges) -> np.ndarray:
    """Reduced (m x n) incidence: +1 where an edge leaves a node, -1 where it enters; node 0 dropped."""
    B = np.zeros((len(edges), n_nodes - 1))
    for e, (a, b) in enumerate(edges):
        if a:
            B[e, a - 1] = 1.0
        if b:
            B[e, b - 1] = -1.0
    return B


def build_tree(n_nodes: int, edges: Sequence) -> TreeIndex:
    edges = tuple((int(a), int(b)) for a, b in edges)
    parent, parent_edge, order = _bfs_parents(n_nodes, edges)
    children = [[] for _ in range(n_nodes)]
    for j in order[1:]:
        children[parent[j]].append(j)
    paths = [()] * n_nodes
    for j in order[1:]:
        paths[j] = paths[parent[j]] + (parent_edge[j],)
    sub_nodes = [None] * n_nodes
    sub_edges = [None] * n_nodes
    for j in reversed(order):
        nodes = [j]
        es = []
        for c in children[j]:
            nodes.extend(sub_nodes[c])
            es.append(parent_edge[c])
            es.extend(sub_edges[c])
        sub_nodes[j] = tuple(sorted(nodes))
        sub_edges[j] = tuple(sorted(es))
    tree_edges = tuple(parent_edge[j] for j in range(1, n_nodes))
    tset = set(tree_edges)
    nontree = tuple(e for e in range(len(edges)) if e not in tset)
    B = incidence_matrix(n_nodes, edges)

    # path formula for the inverse of B_T, with orientation signs folded in
    n = n_nodes - 1
    B_T_inv = np.zeros((n, n))
    for j in range(1, n_nodes):
        for e in paths[j]:
            a, b = edges[e]
            away = parent[b] == a and parent_edge[b] == e
            # tree position of edge e is (child node - 1)
            child = b if away else a
            B_T_inv[j - 1, child - 1] = -1.0 if away else 1.0
    return TreeIndex(
        n_nodes=n_nodes,
        edges=edges,
        parent=tuple(parent),
        parent_edge=tuple(parent_edge),
        children=tuple(tuple(c) for c in children),
        order=tuple(order),
        paths=tuple(paths),
        subtree_nodes=tuple(sub_nodes),
        subtree_edges=tuple(sub_edges),
        tree_edges=tree_edges,
        nontree_edges=nontree,
        B=B,
        B_T_inv=B_T_inv,
    )


def spanning_tree(dnet: DirectedNetwork) -> TreeIndex:
    """BFS spanning tree from bus 0 with ascending-id tie-break."""
    return build_tree(len(dnet.base.buses), dnet.edges)


# ---------------------------------------------------------------------------
# cycle algebra shared by the BFM and partial-matrix cycle conditions


def basis_cycle(tree: TreeIndex, e: int):
    """Fundamental cycle closed by non-tree edge e.

    Returns (nodes, steps): the node sequence starting with the tail of e, and
    (edge, sign) steps where sign is +1 when the edge is traversed along its
    orientation.
    """
    a, b = tree.edges[e]
    steps = [(e, 1)]
    nodes = [a, b]
    pa, pb = tree.paths[a], tree.paths[b]
    k = 0
    while k < min(len(pa), len(pb)) and pa[k] == pb[k]:
        k += 1
    # b up to the common ancestor
    u = b
    for te in reversed(pb[k:]):
        x, y = tree.edges[te]
        w = tree.parent[u]
        steps.append((te, 1 if (x, y) == (u, w) else -1))
        nodes.append(w)
        u = w
    # common ancestor down to a
    for te in pa[k:]:
        x, y = tree.edges[te]
        w = y if x == u else x
        steps.append((te, 1 if (x, y) == (u, w) else -1))
        nodes.append(w)
        u = w
    assert nodes[-1] == a
    return tuple(nodes[:-1]), tuple(steps)


def cycle_defects(tree: TreeIndex, angles) -> dict:
    """Wrapped angle sums around each fundamental cycle, keyed by the closing edge."""
    angles = np.asarray(angles, dtype=float)
    out = {}
    for e in tree.nontree_edges:
        _, steps = basis_cycle(tree, e)
        out[e] = float(wrap_angle(sum(sgn * angles[te] for te, sgn in steps)))
    return out


def matrix_defects(tree: TreeIndex, angles) -> dict:
    """Same defects via beta_perp - B_perp B_T^{-1} beta_T, wrapped."""
    angles = np.asarray(angles, dtype=float)
    if not tree.nontree_edges:
        return {}
    beta_T = angles[list(tree.tree_edges)]
    beta_p = angles[list(tree.nontree_edges)]
    d = wrap_angle(beta_p - tree.B_perp @ (tree.B_T_inv @ beta_T))
    return {e: float(v) for e, v in zip(tree.nontree_edges, np.atleast_1d(d))}


def edge_list(G) -> list:
    """Edge pairs of a Network, DirectedNetwork, TreeIndex or plain iterable."""
    if isinstance(G, (DirectedNetwork, TreeIndex)):
        return list(G.edges)
    if isinstance(G, Network):
        return G.edges
    return [tuple(e) for e in G]


def node_count(G, edges: Iterable = ()) -> int:
    if isinstance(G, Network):
        return len(G.buses)
    if isinstance(G, DirectedNetwork):
        return len(G.base.buses)
    if isinstance(G, TreeIndex):
        return G.n_nodes
    return 1 + max(max(a, b) for a, b in edges)
