"""Acceptance criteria 1-9, each at its stated tolerance.

Run with pytest (a summary block lists one PASS/FAIL line per criterion) or
directly: ``python tests/test_acceptance.py``.
"""
import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from instances import loaded_tree, radial_opf, small_boxed  # noqa: E402
from oracles import random_connected_edges  # noqa: E402

from opfrelax.bfm import (bfm_residual, bfm_to_bim, bim_to_bfm, check_cycle_condition,  # noqa: E402
                          recover_angles, relax_magnitudes, reverse_orientation)
from opfrelax.cost import CostSpec  # noqa: E402
from opfrelax.errors import CycleConditionError  # noqa: E402
from opfrelax.generate import random_impedance, random_voltage  # noqa: E402
from opfrelax.netmodel import (AWAY, Bus, Line, Network, cycle_defects, matrix_defects,  # noqa: E402
                               orient, spanning_tree, wrap_angle)
from opfrelax.pmatrix import (PartialMatrix, chordal_extension, partial_from_voltage,  # noqa: E402
                              rank1_completion, two_by_two_checks, wg_cycle_condition, wg_to_x, x_to_wg)
from opfrelax.radial import (check_bounds, distflow_residual, solve_linear_distflow,  # noqa: E402
                             solve_linear_reverse, solve_radial)
from opfrelax.relax import brute_force_opf, solve_opf  # noqa: E402
from opfrelax.socp import kkt_residuals, solve  # noqa: E402

LOSS = CostSpec.total_loss()


def _network(nb, edges, rng):
    buses = (Bus(0, v_min=1.0, v_max=1.0),) + tuple(Bus(j) for j in range(1, nb))
    return Network(buses, tuple(Line(a, b, random_impedance(rng)) for a, b in edges))


def _random_graph_net(seed, n_max=10):
    """Connected graph on n + 1 <= n_max + 1 buses, meshes included."""
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(2, n_max + 2))
    edges = random_connected_edges(nb, int(rng.integers(0, 5)), rng)
    return _network(nb, edges, rng), random_voltage(nb, rng), rng


def _random_mesh_net(seed, n_max=10):
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(3, n_max + 2))
    edges = random_connected_edges(nb, int(rng.integers(1, 5)), rng)
    return _network(nb, edges, rng), random_voltage(nb, rng), rng


# ---------------------------------------------------------------------------


def criterion_1():
    t0 = time.perf_counter()
    worst, exact = 0.0, True
    for seed in range(200):
        net, V, _ = _random_graph_net(seed)
        d = orient(net)
        xt = bim_to_bfm(d, V)
        worst = max(worst, bfm_residual(d, xt).max)
        exact &= np.array_equal(bfm_to_bim(d, xt).V, V)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and exact and dt < 5.0
    return ok, f"200 graphs: max BFM residual {worst:.2e} (<= 1e-10), round trip exact={exact}, {dt:.2f}s (< 5s)"


@functools.lru_cache(maxsize=None)
def _trees():
    return [loaded_tree(seed) for seed in range(100)]


def criterion_2():
    sweep = rec = ident = 0.0
    for net, s in _trees():
        x = solve_radial(net, s)
        d = orient(net, AWAY)
        sweep = max(sweep, distflow_residual(d, x).max)
        xt = recover_angles(x, d)
        rec = max(rec, bfm_residual(d, xt).max)
        back = relax_magnitudes(xt)
        ident = max(ident, np.abs(back.S - x.S).max(), np.abs(back.l - x.l).max(), np.abs(back.v - x.v).max())
    ok = sweep <= 1e-8 and rec <= 1e-8 and ident <= 1e-9
    return ok, (f"100 trees: sweep residual {sweep:.2e} (<= 1e-8), recovered BFM residual {rec:.2e} (<= 1e-8), "
                f"relax(recover(x)) - x {ident:.2e} (<= 1e-9)")


def _bound_reports(net, s, x):
    d = orient(net, AWAY)
    return [check_bounds(x, solve_linear_distflow(net, s), tol=1e-9),
            check_bounds(reverse_orientation(x, d), solve_linear_reverse(net, s), tol=1e-9)]


def criterion_3():
    viol = socp_viol = 0
    ident = socp_ident = 0.0
    for net, s in _trees():
        for rep in _bound_reports(net, s, solve_radial(net, s)):
            viol += len(rep.edge_violations) + len(rep.bus_violations)
            ident = max(ident, rep.identity_residual)
        r = solve_opf(net, LOSS, "bfm", recover=False)
        for rep in _bound_reports(net, s, r.x):
            socp_viol += len(rep.edge_violations) + len(rep.bus_violations)
            socp_ident = max(socp_ident, rep.identity_residual)
    ok = viol == 0 and ident <= 1e-9 and socp_viol == 0 and socp_ident <= 1e-9
    return ok, (f"100 trees, both orientations: {viol} violations, identity residual {ident:.2e}; "
                f"SOCP outputs: {socp_viol} violations, identity residual {socp_ident:.2e} (slack 1e-9)")


def criterion_4():
    checks = cyc = True
    worst = 0.0
    for seed in range(200):
        net, V, rng = _random_graph_net(1000 + seed)
        V = np.abs(V) * np.exp(1j * rng.uniform(-math.pi, math.pi, V.size))
        V[0] = abs(V[0])
        W = partial_from_voltage(V, net)
        checks &= all(c.psd and c.rank1 for c in two_by_two_checks(W))
        cyc &= wg_cycle_condition(W).satisfied
        worst = max(worst, np.abs(rank1_completion(W).V.V - V).max())
    bad = PartialMatrix(3, [(0, 1), (1, 2), (2, 0)], np.ones(3), np.exp(0.1j * np.ones(3)))
    named = False
    try:
        rank1_completion(bad)
    except CycleConditionError as exc:
        (e, d), = exc.defects.items()
        named = sorted(exc.cycles[e]) == [0, 1, 2] and abs(d - 0.3) <= 1e-12
    ok = checks and cyc and worst <= 1e-10 and named
    return ok, (f"200 rank-1 partial matrices: 2x2 checks {checks}, cycle condition {cyc}, "
                f"completion error {worst:.2e} (<= 1e-10); 0.3 rad 3-cycle rejected and named: {named}")


def criterion_5():
    ang = agree = 0.0
    for seed in range(50):
        net, V, _ = _random_mesh_net(2000 + seed)
        d = orient(net)
        tree = spanning_tree(d)
        x = relax_magnitudes(bim_to_bfm(d, V))
        res = check_cycle_condition(x, d, tree)
        ang = max(ang, np.abs(wrap_angle(res.theta_full - np.angle(V))).max())
        a, b = cycle_defects(tree, res.beta), matrix_defects(tree, res.beta)
        agree = max(agree, max(abs(wrap_angle(a[e] - b[e])) for e in a))
    ok = ang <= 1e-9 and agree <= 1e-10
    return ok, f"50 meshes: angle error {ang:.2e} (<= 1e-9 mod 2pi), defect routes differ by {agree:.2e} (<= 1e-10)"


@functools.lru_cache(maxsize=None)
def _suite6():
    out = []
    for seed in range(30):
        net = radial_opf(seed)
        cost = CostSpec.weighted_generation(np.random.default_rng(seed).uniform(0.5, 1.5, net.n + 1))
        out.append((net, solve_opf(net, cost, "bfm", recover=False), solve_opf(net, cost, "bim", recover=False)))
    return out


def criterion_6():
    obj = rt = corr = 0.0
    flags = True
    for net, a, b in _suite6():
        obj = max(obj, abs(a.objective - b.objective))
        d = b.dnet
        # g and g^-1 round trips on both relaxed optima
        x2 = wg_to_x(x_to_wg(a.x, d), d)
        W2 = x_to_wg(b.x, d)
        rt = max(rt, np.abs(x2.S - a.x.S).max(), np.abs(x2.l - a.x.l).max(), np.abs(W2.off - b.W.off).max())
        # cone gap of g(W), written out directly, equals |y|^2 times the 2x2 determinant
        for W in (a.W, b.W):
            t, h, w = d.tails, d.heads, W.oriented(d.edges)
            S = np.conj(d.y) * (W.diag[t] - w)
            l = np.abs(d.y) ** 2 * (W.diag[t] + W.diag[h] - 2 * w.real)
            cone = W.diag[t] * l - np.abs(S) ** 2
            det = np.array([c.gap for c in two_by_two_checks(W)])
            corr = max(corr, np.abs(cone - np.abs(d.y) ** 2 * det).max())
            flags &= list(np.abs(cone) <= 1e-6) == list(np.abs(det) * np.abs(d.y) ** 2 <= 1e-6)
    ok = obj <= 1e-7 and rt <= 1e-10 and corr <= 1e-10 and flags
    return ok, (f"30 radial OPFs: |C_bim - C_bfm| <= {obj:.2e} (<= 1e-7), g/g^-1 round trip {rt:.2e} (<= 1e-10), "
                f"cone vs 2x2 identity {corr:.2e}, tightness flags agree {flags}")


@functools.lru_cache(maxsize=None)
def _suite7():
    boxed = []
    for seed in range(10):
        net = small_boxed(seed)
        cost = LOSS if seed % 2 == 0 else CostSpec.weighted_generation(np.linspace(1.0, 0.5, net.n + 1))
        boxed.append((brute_force_opf(net, cost, budget=800, rounds=5), solve_opf(net, cost, recover=False)))
    fixed = []
    for net, s in _trees()[:10]:
        x = solve_radial(net, s)
        fixed.append((float(orient(net, AWAY).z.real @ x.l), solve_opf(net, LOSS, recover=False)))
    return boxed, fixed


def criterion_7():
    boxed, fixed = _suite7()
    below = True
    margin = -math.inf
    for bf, r in boxed:
        lo = r.solution.dual_objective
        below &= lo <= bf.value + bf.grid_slack and r.objective <= bf.value + bf.grid_slack + r.solution.residuals.gap
        margin = max(margin, r.objective - bf.value)
    eq = max(abs(r.objective - loss) for loss, r in fixed)
    ok = below and eq <= 1e-6
    return ok, (f"10 boxed 2-3 bus cases: C_socp <= brute force + grid slack {below} (max C_socp - brute {margin:.2e}); "
                f"10 fixed-load trees: |C_socp - sweep loss| {eq:.2e} (<= 1e-6)")


def criterion_8():
    G = [(1, 2), (1, 3), (2, 4), (3, 4), (3, 5), (4, 5)]
    b = chordal_extension(G, ordering=(4, 1, 2, 3, 5))
    c = chordal_extension(G, ordering=(1, 2, 3, 4, 5))
    ok_b = set(b.cliques) == {(1, 2, 3), (2, 3, 4, 5)} and b.decoupling_count == 4
    ok_c = len(c.cliques) == 3 and all(len(q) == 3 for q in c.cliques) and c.decoupling_count == 8
    return ok_b and ok_c, (f"two-clique extension {list(b.cliques)} count {b.decoupling_count} (4); "
                           f"three-clique extension {list(c.cliques)} count {c.decoupling_count} (8)")


def criterion_9():
    sols = [r for _, a, b in _suite6() for r in (a, b)]
    boxed, fixed = _suite7()
    sols += [r for _, r in boxed] + [r for _, r in fixed]
    worst = 0.0
    weak = True
    for r in sols:
        k = kkt_residuals(r.problem, r.solution)
        worst = max(worst, k.max)
        weak &= k.dual_objective <= k.primal_objective + 1e-8
    probe = _suite6()[0][1].problem
    x1, x2 = solve(probe), solve(probe)
    det = x1.x.tobytes() == x2.x.tobytes() and x1.y.tobytes() == x2.y.tobytes()
    net = radial_opf(0)
    cost = CostSpec.weighted_generation(np.random.default_rng(0).uniform(0.5, 1.5, net.n + 1))
    det &= solve_opf(net, cost).x.S.tobytes() == _suite6()[0][1].x.S.tobytes()
    ok = worst <= 1e-8 and weak and det
    return ok, f"{len(sols)} SOCP solves: max KKT residual {worst:.2e} (<= 1e-8), weak duality {weak}, bit-identical reruns {det}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9]


def _line(i, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {i}: {detail}"


@pytest.mark.parametrize("i", range(1, len(CRITERIA) + 1))
def test_criterion(i):
    from conftest import ACCEPTANCE_LINES
    ok, detail = CRITERIA[i - 1]()
    line = _line(i, ok, detail)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


if __name__ == "__main__":
    failed = 0
    for i, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        failed += not ok
        print(_line(i, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
