import numpy as np
import pytest

from fsidiff.grid import DomainBoundaryConditions, EdgeCondition, GridSpec, build_operators


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running physics checks")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def freestream_ops():
    grid = GridSpec.from_extent(24, 20, (0.0, 6.0), (0.0, 5.0))
    return build_operators(grid, DomainBoundaryConditions.freestream(1.0))


@pytest.fixture
def cavity_ops():
    grid = GridSpec.from_extent(12, 12, (0.0, 1.0), (0.0, 1.0))
    return build_operators(grid, DomainBoundaryConditions.cavity())


def random_bc(rng):
    """Boundary conditions drawn from the supported kinds, at least one edge Dirichlet."""
    kinds = []
    for _ in range(4):
        k = rng.choice(["inflow", "outflow", "farfield", "wall"])
        if k == "wall":
            kinds.append(EdgeCondition.wall())
        elif k == "outflow":
            kinds.append(EdgeCondition.outflow())
        else:
            kinds.append(EdgeCondition(str(k), tuple(rng.normal(size=2))))
    if all(e.kind == "outflow" for e in kinds):
        kinds[0] = EdgeCondition.wall()
    return DomainBoundaryConditions(*kinds)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in mod.REPORT:
            terminalreporter.write_line(line)
