import numpy as np
import pytest

from safegame.problems import bounded_problem, unbounded_problem
from safegame.trainer import sample_collocation


@pytest.fixture(scope="session")
def bounded():
    return bounded_problem()


@pytest.fixture(scope="session")
def unbounded():
    return unbounded_problem()


@pytest.fixture(scope="session", params=["bounded", "unbounded"])
def problem(request, bounded, unbounded):
    return {"bounded": bounded, "unbounded": unbounded}[request.param]


def interior(problem, n=500, margin=0.01, seed=0):
    return sample_collocation(problem.game.safe_set, n, margin, seed).points


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one line per acceptance criterion; printed in the terminal summary."""
    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
