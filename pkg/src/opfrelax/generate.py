"""Seeded random networks, loads and voltage profiles for experiments and tests."""
from __future__ import annotations

import numpy as np

from .netmodel import Bus, Line, Network


def random_tree_edges(n: int, rng: np.random.Generator) -> list:
    """Random recursive tree on buses 0..n (each new bus hangs off an earlier one)."""
    return [(int(rng.integers(0, k)), k) for k in range(1, n + 1)]


def random_impedance(rng: np.random.Generator, scale: float = 0.01) -> complex:
    return complex(scale * rng.uniform(0.5, 2.0), scale * rng.uniform(0.5, 2.0))


def random_network(n: int, rng: np.random.Generator, extra_edges: int = 0, z_scale: float = 0.01,
                   loads=None, v0: float = 1.0, bus_factory=None) -> Network:
    """Connected network on buses 0..n: a random tree plus ``extra_edges`` chords.

    ``loads`` (complex injections over buses 1..n) are fixed at their buses;
    without them non-slack buses get unbounded injections.
    """
    edges = random_tree_edges(n, rng)
    have = {tuple(sorted(e)) for e in edges}
    candidates = [(a, b) for a in range(n + 1) for b in range(a + 1, n + 1) if (a, b) not in have]
    if extra_edges:
        pick = rng.choice(len(candidates), size=min(extra_edges, len(candidates)), replace=False)
        edges += [candidates[i] for i in sorted(pick)]
    lines = tuple(Line(a, b, random_impedance(rng, z_scale)) for a, b in edges)
    buses = [Bus(0, v_min=v0, v_max=v0)]
    for j in range(1, n + 1):
        if bus_factory is not None:
            buses.append(bus_factory(j))
        elif loads is not None:
            s = complex(loads[j - 1])
            buses.append(Bus(j, s_min=s, s_max=s))
        else:
            buses.append(Bus(j))
    return Network(tuple(buses), lines, v0)


def random_loads(n: int, rng: np.random.Generator, p_max: float = 0.05, pf_min: float = 0.8) -> np.ndarray:
    """Consumption-only injections (negative real and reactive parts)."""
    p = rng.uniform(0.1, 1.0, n) * p_max
    pf = rng.uniform(pf_min, 1.0, n)
    q = p * np.sqrt(1 - pf ** 2) / pf
    return -(p + 1j * q)


def random_voltage(nb: int, rng: np.random.Generator, mag: float = 0.05, ang: float = 0.1) -> np.ndarray:
    """Voltage profile near 1 with V_0 = 1 exactly."""
    V = (1 + mag * rng.uniform(-1, 1, nb)) * np.exp(1j * ang * rng.uniform(-1, 1, nb))
    V[0] = 1.0
    return V
