import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from opfrelax.socp import (INFEASIBLE, OPTIMAL, ConeProblem, RotatedCone, SolverOptions, kkt_residuals,
                           solve)


def no_rows(n):
    return np.zeros((0, n)), np.zeros(0)


def test_box_lp():
    A, b = no_rows(1)
    sol = solve(ConeProblem([1.0], A, b, lower=[1.0], upper=[3.0]))
    assert sol.status == OPTIMAL and sol.x[0] == pytest.approx(1.0, abs=1e-8)
    assert sol.z_lower[0] == pytest.approx(1.0, abs=1e-8)


def test_am_gm():
    # min a + b  s.t.  u = 1,  u^2 <= a b
    p = ConeProblem([0.0, 1.0, 1.0], [[1.0, 0.0, 0.0]], [1.0], [RotatedCone((0,), 1, 2)])
    sol = solve(p)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(2.0, abs=1e-7)
    assert sol.x[1] == pytest.approx(1.0, abs=1e-6) and sol.x[2] == pytest.approx(1.0, abs=1e-6)
    assert sol.residuals.max <= 1e-8


@pytest.mark.parametrize("dim", [1, 2, 5])
def test_linear_over_ball(dim):
    rng = np.random.default_rng(dim)
    c = rng.normal(size=dim)
    n = dim + 2
    A = np.zeros((2, n))
    A[0, dim] = A[1, dim + 1] = 1.0
    p = ConeProblem(np.concatenate([c, [0, 0]]), A, [1.0, 1.0], [RotatedCone(range(dim), dim, dim + 1)])
    sol = solve(p)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(-np.linalg.norm(c), abs=1e-7)
    assert np.allclose(sol.x[:dim], -c / np.linalg.norm(c), atol=1e-5)


def test_crossed_box_is_infeasible():
    A, b = no_rows(1)
    sol = solve(ConeProblem([1.0], A, b, lower=[2.0], upper=[1.0]))
    assert sol.status == INFEASIBLE and "reason" in sol.info


def test_infeasible_certificate():
    # x >= 0 componentwise cannot sum to -1
    p = ConeProblem([1.0, 1.0], [[1.0, 1.0]], [-1.0], lower=[0.0, 0.0])
    sol = solve(p)
    assert sol.status == INFEASIBLE and "certificate" in sol.info


def test_infeasible_cone():
    # u = 2, a = b = 1 violates u^2 <= a b
    A = np.eye(3)
    p = ConeProblem([0.0, 0.0, 0.0], A, [2.0, 1.0, 1.0], [RotatedCone((0,), 1, 2)])
    assert solve(p).status == INFEASIBLE


def test_rotated_cone_rejects_repeated_index():
    with pytest.raises(ValueError):
        RotatedCone((0,), 0, 1)


def test_problem_validation():
    with pytest.raises(ValueError):
        ConeProblem([1.0, 2.0], [[1.0]], [1.0])
    with pytest.raises(ValueError):
        ConeProblem([1.0], no_rows(1)[0], [], [RotatedCone((0,), 1, 2)])


def test_rotated_cone_membership_agrees_with_definition():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(10_000, 4))
    k = RotatedCone((0, 1), 2, 3)
    agree = 0
    checked = 0
    for x in pts:
        margin = x[2] * x[3] - x[0] ** 2 - x[1] ** 2
        direct = x[2] >= 0 and x[3] >= 0 and margin >= 0
        if min(abs(margin), abs(x[2]), abs(x[3])) < 1e-9:
            continue
        checked += 1
        agree += direct == (k.violation(x) == 0.0)
    assert checked > 9_900 and agree == checked


@st.composite
def feasible_lps(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(1, 6))
    m = draw(st.integers(0, n))
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0.1, 1.0, n)
    c = rng.normal(size=n)
    return ConeProblem(c, A, A @ x0, lower=np.zeros(n), upper=np.full(n, 2.0))


@settings(max_examples=50, deadline=None)
@given(feasible_lps())
def test_lp_matches_linprog(p):
    sol = solve(p)
    ref = linprog(p.c, A_eq=p.A if p.A.size else None, b_eq=p.b if p.A.size else None,
                  bounds=list(zip(p.lower, p.upper)), method="highs")
    assert sol.status == OPTIMAL and ref.status == 0
    assert sol.objective == pytest.approx(ref.fun, abs=1e-7)


@st.composite
def random_socps(draw):
    """Feasible by construction; bounded through boxes on every variable."""
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    k = draw(st.integers(1, 3))
    cones, n = [], 0
    for _ in range(k):
        d = int(rng.integers(1, 4))
        cones.append(RotatedCone(range(n, n + d), n + d, n + d + 1))
        n += d + 2
    x0 = rng.uniform(-0.3, 0.3, n)
    for q in cones:
        x0[q.a] = x0[q.b] = 1.0
    m = int(rng.integers(0, 3))
    A = rng.normal(size=(m, n))
    return ConeProblem(rng.normal(size=n), A, A @ x0, cones, lower=np.full(n, -3.0), upper=np.full(n, 3.0))


@settings(max_examples=40, deadline=None)
@given(random_socps())
def test_socp_certificate(p):
    sol = solve(p)
    assert sol.status == OPTIMAL
    rec = kkt_residuals(p, sol)
    assert abs(rec.primal - sol.residuals.primal) <= 1e-10
    assert rec.max <= 1e-8 * max(1.0, abs(sol.objective))
    assert rec.dual_objective <= rec.primal_objective + 1e-8 * max(1.0, abs(sol.objective))


def test_kkt_recompute_and_perturbation():
    p = ConeProblem([0.0, 1.0, 1.0], [[1.0, 0.0, 0.0]], [1.0], [RotatedCone((0,), 1, 2)])
    sol = solve(p)
    rec = kkt_residuals(p, sol)
    for name in ("primal", "dual", "gap", "primal_objective", "dual_objective"):
        assert abs(getattr(rec, name) - getattr(sol.residuals, name)) <= 1e-10
    moved = dataclasses.replace(sol, x=sol.x + np.array([1e-3, 0, 0]))
    assert kkt_residuals(p, moved).primal >= 1e-4
    bent = dataclasses.replace(sol, y=sol.y + 1e-3)
    assert kkt_residuals(p, bent).dual >= 1e-4


def test_max_iter_status():
    p = ConeProblem([0.0, 1.0, 1.0], [[1.0, 0.0, 0.0]], [1.0], [RotatedCone((0,), 1, 2)])
    sol = solve(p, SolverOptions(max_iter=1))
    assert sol.status == "max_iter"


def test_deterministic():
    rng = np.random.default_rng(3)
    n = 5
    A = rng.normal(size=(1, n))
    p = ConeProblem(rng.normal(size=n), A, A @ np.array([0.1, 0.1, 0.1, 1.0, 1.0]),
                    [RotatedCone((0, 1, 2), 3, 4)], lower=np.full(n, -2.0), upper=np.full(n, 2.0))
    a, b = solve(p), solve(p)
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert a.iterations == b.iterations


def test_json_round_trip():
    p = ConeProblem([1.0, 0.0, 2.0], [[1.0, 1.0, 0.0]], [1.0], [RotatedCone((0,), 1, 2)],
                    lower=[-math.inf, 0.0, 0.0], upper=[math.inf, 5.0, math.inf])
    q = ConeProblem.from_dict(json.loads(p.dumps()))
    for name in ("c", "A", "b", "lower", "upper"):
        assert np.array_equal(getattr(p, name), getattr(q, name))
    assert q.cones == p.cones
