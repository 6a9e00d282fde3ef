import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import TWO_BUS_CASE  # noqa: E402

from opfrelax.netmodel import Bus, Line, Network, parse_case  # noqa: E402

ACCEPTANCE_LINES = []


def make_network(edges, z=0.01 + 0.02j, loads=None, nb=None, bus=None):
    """Network on buses 0..nb-1; ``loads`` fixes non-slack injections, ``bus`` builds custom buses."""
    nb = nb or 1 + max(max(e) for e in edges)
    zs = z if isinstance(z, (list, tuple, np.ndarray)) else [z] * len(edges)
    buses = [Bus(0, v_min=1.0, v_max=1.0)]
    for j in range(1, nb):
        if bus is not None:
            buses.append(bus(j))
        elif loads is not None:
            buses.append(Bus(j, s_min=complex(loads[j - 1]), s_max=complex(loads[j - 1])))
        else:
            buses.append(Bus(j))
    return Network(tuple(buses), tuple(Line(a, b, complex(zz)) for (a, b), zz in zip(edges, zs)))


@pytest.fixture
def two_bus():
    return parse_case(TWO_BUS_CASE)


@pytest.fixture
def ring3():
    return make_network([(0, 1), (1, 2), (2, 0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
