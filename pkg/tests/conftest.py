import warnings

import numpy as np
import pytest

from relbolt.equilibrium import JuttnerParams, juttner_grid
from relbolt.grid import MomentumGrid
from relbolt.initial import InitialCondition

ACCEPTANCE = pytest.StashKey[dict]()

warnings.filterwarnings("ignore", message="The TBB threading layer")


@pytest.fixture(scope="session")
def small_grid():
    return MomentumGrid(8, 4.0)


@pytest.fixture(scope="session")
def small_juttner(small_grid):
    return juttner_grid(small_grid, JuttnerParams(1.0, 0.6))


@pytest.fixture(scope="session")
def small_two_bump(small_grid):
    ic = InitialCondition("two_bump", {"theta1": 0.4, "theta2": 0.4, "u1": (0.8, 0, 0), "u2": (-0.8, 0, 0)})
    return ic.build(small_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)



@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Verdict lines of the acceptance criteria, keyed by criterion number."""
    return pytestconfig.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter):
    found = terminalreporter.config.stash.get(ACCEPTANCE, {})
    if found:
        terminalreporter.section("acceptance criteria")
        for key in sorted(found):
            terminalreporter.write_line(found[key])
