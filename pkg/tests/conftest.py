from __future__ import annotations

import pytest

from edgepush.core.kernel import TransitionKernel
from scenarios import Scenarios


@pytest.fixture(scope="session")
def scenarios() -> Scenarios:
    return Scenarios()


@pytest.fixture(scope="session")
def paper_params(scenarios):
    return scenarios.paper()


@pytest.fixture(scope="session")
def paper_kernel(paper_params):
    return TransitionKernel(paper_params)


@pytest.fixture(scope="session")
def reduced_params(scenarios):
    return scenarios.reduced()


@pytest.fixture(scope="session")
def reduced_kernel(reduced_params):
    return TransitionKernel(reduced_params)


@pytest.fixture
def micro(scenarios):
    return scenarios.micro()
