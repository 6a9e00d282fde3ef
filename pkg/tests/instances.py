"""Seeded test networks shared by the unit and acceptance suites."""
from __future__ import annotations

import numpy as np

from opfrelax.generate import random_loads, random_network
from opfrelax.netmodel import Bus, Line, Network


def loaded_tree(seed, n_max=30):
    """Random tree with fixed consumption at every non-slack bus."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    s = random_loads(n, rng)
    return random_network(n, rng, loads=s), s


def loaded_mesh(seed, n_max=10, extra=3):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    s = random_loads(n, rng)
    return random_network(n, rng, extra_edges=int(rng.integers(1, extra + 1)), loads=s), s


def radial_opf(seed, n_max=8):
    """Radial network mixing fixed loads and bounded generators, wide voltage boxes."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))

    def bus(j):
        if rng.random() < 0.3:
            return Bus(j, s_min=complex(0.0, -0.05), s_max=complex(0.1, 0.05), v_min=0.81, v_max=1.21)
        p, q = random_loads(1, rng)[0].real, random_loads(1, rng)[0].imag
        return Bus(j, s_min=complex(p, q), s_max=complex(p, q), v_min=0.81, v_max=1.21)

    return random_network(n, rng, bus_factory=bus)


def small_boxed(seed):
    """Two- or three-bus radial network with bounded injection boxes at every non-slack bus."""
    rng = np.random.default_rng(seed)
    n = 1 + int(rng.integers(0, 2))
    buses = [Bus(0, v_min=1.0, v_max=1.0)]
    for j in range(1, n + 1):
        lo = complex(-rng.uniform(0.05, 0.15), -rng.uniform(0.02, 0.08))
        width = complex(rng.uniform(0.02, 0.06), rng.uniform(0.01, 0.04))
        buses.append(Bus(j, s_min=lo, s_max=lo + width, v_min=0.9, v_max=1.1))
    lines = [Line(int(rng.integers(0, j)), j, complex(*rng.uniform(0.005, 0.03, 2))) for j in range(1, n + 1)]
    return Network(tuple(buses), tuple(lines))


def two_bus_gen_weights(rng, nb):
    w = rng.uniform(0.5, 1.5, nb)
    w[0] = 1.0
    return w
