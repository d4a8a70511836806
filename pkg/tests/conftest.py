import pytest
from hypothesis import settings

from memtrap.atomtrap import TwoColorTrap
from memtrap.geometry import WaveguideCrossSection

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def xs():
    return WaveguideCrossSection()


@pytest.fixture(scope="session")
def trap(xs):
    """Both colors on the reference cross-section at h = 10 nm (full domain)."""
    return TwoColorTrap(xs, 10.0)


@pytest.fixture(scope="session")
def half_trap(xs):
    return TwoColorTrap(xs, 10.0, half_domain=True)
