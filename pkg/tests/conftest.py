import numpy as np
import pytest
from scipy.stats import unitary_group


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def haar_unitary(n, seed):
    """Haar-distributed unitary matrix, deterministic in the seed."""
    return unitary_group.rvs(n, random_state=np.random.default_rng(seed))


def random_hermitian(n, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (m + m.conj().T) / 2.0
