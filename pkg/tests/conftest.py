import sys
from pathlib import Path
import warnings

import pytest

sys.path.insert(0, str(Path(__file__).parent))
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

from quickdetect import ModelParams, solve_continuous, solve_lump  # noqa: E402
from quickdetect.arrival import solve_arrival  # noqa: E402

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def params():
    return ModelParams(lam=0.1, c=0.01, alpha=1.0)


@pytest.fixture(scope="session")
def cont(params):
    return solve_continuous(params)


@pytest.fixture(scope="session")
def lump10(params, cont):
    return solve_lump(params, 10, phibar=cont.phibar)


@pytest.fixture(scope="session")
def lattices(params, cont):
    """n=1 lattices for a handful of arrival rates, keyed by mu."""
    return {mu: solve_arrival(params.with_mu(mu), 1, phibar=cont.phibar)
            for mu in (0.5, 1.0, 2.0, 8.0)}


@pytest.fixture(scope="session")
def lattice2(params, cont):
    return solve_arrival(params.with_mu(1.0), 2, phibar=cont.phibar)
