import numpy as np
import pytest
from hypothesis import settings

from cutocp.multilevel import Discretization
from cutocp.problems import DISK_BOX, example1

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk():
    return example1()


@pytest.fixture(scope="session")
def disk_disc(disk):
    """Unit disk on 8x8 cells refined three times."""
    ls, _ = disk
    return Discretization.build(ls, DISK_BOX, 8, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, n, cond=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.geomspace(1.0, cond, n)
    return (Q * ev) @ Q.T
