import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pregelfl import generators
from pregelfl.graph import CostAssignment, Graph

settings.register_profile(
    "default",
    max_examples=int(os.environ.get("HYPOTHESIS_EXAMPLES", "40")),
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_instance(n: int, m: int, seed: int, weighted: bool = True, hi: float = 10.0,
                    cost_range=(0.5, 20.0), facilities: int | None = None):
    """Connected random graph with random facility costs."""
    rng = np.random.default_rng(seed)
    g = generators.gnm_random(n, m, seed=seed, connected=True)
    if weighted:
        g = generators.assign_uniform_weights(g, 1.0, hi, seed=seed)
    fac = None
    if facilities is not None:
        fac = np.sort(rng.choice(n, size=facilities, replace=False))
    costs = CostAssignment.uniform(n, 0.0, facilities=fac)
    costs.cost[:] = np.round(rng.uniform(*cost_range, size=n), 2)
    return g, costs


@pytest.fixture
def triangle() -> Graph:
    return Graph.from_edges(3, [0, 1, 2], [1, 2, 0])


@pytest.fixture(scope="session")
def ff300() -> Graph:
    return generators.forest_fire(300, seed=3)


ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
