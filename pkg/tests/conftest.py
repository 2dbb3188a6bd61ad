from dataclasses import dataclass

import numpy as np
import pytest

from latticelz.model import ModelParams, SpinorField

# detuning that fully polarizes the compact test lattice (the crossover
# scale grows with u * peak density, which is large on a tight cloud)
COMPACT_EDGE_DETUNING = 0.1


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def _compact_params():
    return ModelParams(t1=-0.09, t2=0.0045, u=0.38, omega=0.2, nx=16, ny=16)


@pytest.fixture
def compact_params():
    """Small lattice with a tight trap so the cloud fits well inside."""
    return _compact_params()


@dataclass
class PreparedGround:
    field: SpinorField
    detuning: float
    energy: float


@pytest.fixture(scope="session")
def compact_ground():
    """Converged x-polarized ground state of the compact lattice (shared)."""
    from latticelz.groundstate import GroundConfig, find_ground

    params = _compact_params()
    result = find_ground(
        GroundConfig(detuning=-COMPACT_EDGE_DETUNING, rng_seed=1), params)
    assert result.report.converged and result.z_tot > 0.99
    return PreparedGround(field=result.field,
                          detuning=-COMPACT_EDGE_DETUNING,
                          energy=result.energy)


@pytest.fixture
def free_params():
    """Interacting, trapless, for propagation tests on random fields."""
    return ModelParams(t1=-0.09, t2=0.0045, u=0.38, omega=0.0, nx=8, ny=8)


def random_field(rng, nx, ny):
    f = SpinorField(
        rng.normal(size=(nx, ny)) + 1j * rng.normal(size=(nx, ny)),
        rng.normal(size=(nx, ny)) + 1j * rng.normal(size=(nx, ny)),
    )
    return f.normalized()


@pytest.fixture
def make_random_field(rng):
    def make(nx, ny):
        return random_field(rng, nx, ny)

    return make
