import numpy as np
import pytest

from hamwave.solver import SolverConfig
from hamwave.timestepper import RunConfig, initialize


def small_pde1(**kw):
    base = dict(
        problem="pde1", scheme="CN", tau=0.05, T=1.0, m=4, epsilon=2.0,
        n_Z=36, gamma=225 / 36, n_P=41**2, solver=SolverConfig(tol=1e-10),
    )
    base.update(kw)
    return RunConfig(**base)


def small_pde2(**kw):
    base = dict(
        problem="pde2", scheme="CN", tau=0.05, T=1.0, m=5, epsilon=2.0,
        n_Z=40, gamma=3.0, n_P=401, solver=SolverConfig(tol=1e-10),
    )
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def pde2_sim():
    """A small sine-Gordon simulation, freshly initialized (shared, do not advance)."""
    cfg = small_pde2()
    return initialize("pde2", cfg, keep_A=True)


@pytest.fixture(scope="session")
def pde1_sim_pointwise():
    cfg = small_pde1()
    return initialize("pde1", cfg, keep_A=True, compact=False)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
