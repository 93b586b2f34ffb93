import numpy as np
import pytest

from mrfbayes.models import ErgmModel, GraphStructure, IsingModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def lattice22():
    return GraphStructure.lattice(2, 2)


@pytest.fixture
def ising22():
    return IsingModel(2, 2, latent=True)


@pytest.fixture
def ergm3():
    return ErgmModel(3, latent=True)


def brute_states(n, values=(-1, 1)):
    """Every configuration of n binary sites, independent of the package's enumerator."""
    import itertools

    return np.array(list(itertools.product(values, repeat=n)), dtype=np.int64)
