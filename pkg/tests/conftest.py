import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def triangle():
    """Three-node shielded triangle A->B, B->C, A->C."""
    from fedcaus.graphs import Dag

    return Dag.from_edges(3, directed=[(0, 1), (1, 2), (0, 2)], labels=("A", "B", "C"))
