import math

import numpy as np
import pytest
from conftest import make_network
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import S1, Z2, injections_direct, random_connected_edges, two_bus_newton

from opfrelax.bim import (VoltageProfile, admittance_operators, bim_residual, build_qcqp,
                          injections_from_voltage, line_losses)
from opfrelax.cost import CostSpec
from opfrelax.netmodel import Bus, Line, Network


def test_two_bus_admittance(two_bus):
    ops = admittance_operators(two_bus)
    y = 1 / Z2
    assert y == pytest.approx(20 - 40j)
    assert np.allclose(ops.Y, [[y, -y], [-y, y]])


def test_operator_identities(ring3):
    ops = admittance_operators(ring3)
    assert np.allclose(ops.Y_rows.sum(axis=0), ops.Y)
    assert np.allclose(ops.Y, ops.Y.T)
    for j in range(3):
        for M in (ops.Phi[j], ops.Psi[j], ops.J[j]):
            assert np.allclose(M, M.conj().T)
        assert np.allclose(ops.Phi[j] + 1j * ops.Psi[j], ops.Y_rows[j].conj().T)


def test_voltage_profile_pins_slack():
    with pytest.raises(ValueError):
        VoltageProfile([1j, 1.0])
    assert VoltageProfile([1.0, 0.9]).V[0] == 1.0


def test_flat_voltage_gives_zero_injections(ring3):
    s = injections_from_voltage(ring3, np.ones(3))
    assert np.all(s == 0)
    assert np.all(bim_residual(ring3, np.ones(3), np.zeros(3)) == 0)


def test_two_bus_oracle_injection(two_bus):
    V = two_bus_newton()
    s = injections_from_voltage(two_bus, V)
    assert abs(s[1] - S1) <= 1e-8
    assert np.abs(bim_residual(two_bus, VoltageProfile(V), s)).max() <= 1e-10
    V2 = V.copy()
    V2[1] += 1e-3
    assert np.abs(bim_residual(two_bus, V2, s)).max() > 1e-5


def test_operators_reproduce_oracle_injection(two_bus):
    V = two_bus_newton()
    ops = admittance_operators(two_bus)
    s = injections_from_voltage(two_bus, V)
    for j in range(2):
        assert np.vdot(V, ops.Phi[j] @ V).real == pytest.approx(s[j].real, abs=1e-12)
        assert np.vdot(V, ops.Psi[j] @ V).real == pytest.approx(s[j].imag, abs=1e-12)


def test_qcqp_counts():
    bounded = Network(
        (Bus(0, -1 - 1j, 1 + 1j, 1.0, 1.0), Bus(1, -1 - 1j, 1 + 1j)),
        (Line(0, 1, Z2),),
    )
    assert len(build_qcqp(bounded, CostSpec.total_loss()).constraints) == 12
    slack_free = Network((Bus(0, v_min=1.0, v_max=1.0), Bus(1, -1 - 1j, 1 + 1j)), (Line(0, 1, Z2),))
    assert len(build_qcqp(slack_free, CostSpec.total_loss()).constraints) == 8


def test_qcqp_constraints_hold_at_oracle(two_bus):
    V = two_bus_newton()
    q = build_qcqp(two_bus, CostSpec.total_loss())
    assert all(c.satisfied(V, tol=1e-9) for c in q.constraints)
    loss = q.objective(V)
    assert loss == pytest.approx(injections_from_voltage(two_bus, V).real.sum(), abs=1e-14)


def test_quadratic_cost_off_graph_rejected(ring3):
    C = np.zeros((3, 3))
    net = make_network([(0, 1), (1, 2)])
    C[0, 2] = C[2, 0] = 1.0
    with pytest.raises(ValueError):
        build_qcqp(net, CostSpec.quadratic_voltage(C))
    build_qcqp(ring3, CostSpec.quadratic_voltage(C))


@st.composite
def nets_and_voltages(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    nb = draw(st.integers(2, 6))
    edges = random_connected_edges(nb, draw(st.integers(0, 3)), rng)
    z = [complex(*rng.uniform(0.005, 0.05, 2)) for _ in edges]
    V = (1 + 0.1 * rng.uniform(-1, 1, nb)) * np.exp(1j * rng.uniform(-0.3, 0.3, nb))
    V[0] = 1.0
    return make_network(edges, z=z, nb=nb), V, rng


@settings(max_examples=80, deadline=None)
@given(nets_and_voltages())
def test_injections_match_quadratic_forms(data):
    net, V, _ = data
    ops = admittance_operators(net)
    s = injections_from_voltage(net, V)
    quad = np.array([np.vdot(V, ops.Phi[j] @ V) + 1j * np.vdot(V, ops.Psi[j] @ V) for j in range(len(V))])
    assert np.abs(s - quad).max() <= 1e-10
    assert np.abs(s - injections_direct(net.edges, net.z, V)).max() <= 1e-10


@settings(max_examples=80, deadline=None)
@given(nets_and_voltages())
def test_energy_balance(data):
    net, V, _ = data
    s = injections_from_voltage(net, V)
    assert abs(s.sum() - line_losses(net, V).sum()) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(nets_and_voltages())
def test_hermitian_constraints_are_real(data):
    net, V, rng = data
    q = build_qcqp(net, CostSpec.weighted_generation(rng.uniform(0, 1, len(V))))
    W = rng.normal(size=len(V)) + 1j * rng.normal(size=len(V))
    for c in q.constraints:
        assert abs(np.vdot(W, c.M @ W).imag) <= 1e-12 * max(1.0, abs(np.vdot(W, c.M @ W)))
    assert not any(math.isinf(c.b) for c in q.constraints)
