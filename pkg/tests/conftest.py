import numpy as np
import pytest

from gtct.numerics import JoinerLattice


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def one_hot_lattice(T, U, K, path, blank_id=0, big=30.0):
    """Lattice whose row (t, u) strongly prefers ``path[t][u]`` (or blank where unset)."""
    logits = np.zeros((T, U + 1, K))
    logits[:, :, blank_id] = big
    for (t, u), k in path.items():
        logits[t, u, :] = 0.0
        logits[t, u, k] = big
    return JoinerLattice(logits, blank_id=blank_id)
