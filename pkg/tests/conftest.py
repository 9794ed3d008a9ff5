import os

import pytest
from hypothesis import HealthCheck, settings

from sspi_lab.core import DistributionSpec, Edge, Instance

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


pm = DistributionSpec.point_mass
disc = DistributionSpec.discrete


@pytest.fixture
def triangle():
    return Instance("general-graph", edges=(
        Edge("e1", "u", "v", disc([(4.0, 0.5), (5.0, 0.5)])),
        Edge("e2", "v", "w", disc([(3.0, 0.5), (6.0, 0.5)])),
        Edge("e3", "u", "w", disc([(1.0, 0.5), (2.0, 0.5)])),
    ))


@pytest.fixture
def two_item_buyer():
    return Instance("bipartite", buyers=("b",), items=("i1", "i2"), edges=(
        Edge("e1", "b", "i1", disc([(4.0, 0.5), (5.0, 0.5)])),
        Edge("e2", "b", "i2", disc([(2.0, 0.5), (3.0, 0.5)])),
    ))
