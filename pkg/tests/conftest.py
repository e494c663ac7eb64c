import pytest

from tptl.radial import PhaseConfig


@pytest.fixture
def cfg2():
    return PhaseConfig(2, 0.5, 2.0)
