import numpy as np
import pytest


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.Philox(20260809))


def random_low_state(rng, dims, occupied):
    """Random state supported on the lowest `occupied` levels of each mode."""
    from qndsim.fock import PureState

    dims = tuple(dims)
    shape = tuple(min(occupied, d) for d in dims)
    block = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    amps = np.zeros(dims, dtype=complex)
    amps[tuple(slice(0, s) for s in shape)] = block
    amps /= np.linalg.norm(amps)
    return PureState(dims, amps.reshape(-1))
