import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ranksort import RankingProblem

settings.register_profile(
    "ranksort", deadline=None, max_examples=150, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ranksort")


@pytest.fixture
def e1():
    return RankingProblem([4.0, 3.0, 0.0], [1.0, 1.0, 0.0])


@pytest.fixture
def e2():
    return RankingProblem([2.0, 2.0], [0.8, 0.0])


@pytest.fixture
def e3():
    # p1 = (s=1, y=0.9), p2 = (s=2, y=0.5)
    return RankingProblem([1.0, 2.0], [0.9, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
