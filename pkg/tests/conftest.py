import pytest

from artifact.conformal import MapChain
from artifact.domains import CuspModelDomain, Disc, build_single_spike_caltrop


@pytest.fixture(scope="session")
def disc():
    return Disc()


@pytest.fixture(scope="session")
def Q():
    return CuspModelDomain(2.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def chain():
    return MapChain(2.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def caltrop():
    return build_single_spike_caltrop(1.25, 1.0, 0.5)
