import hypothesis
import numpy as np
import pytest

from shadowstep.dynamics import PairTerm, PhaseState, SystemModel
from shadowstep.models import Subset
from shadowstep.potentials import Gravity
from shadowstep.threebody import build_sun_earth_moon

hypothesis.settings.register_profile("default", max_examples=25, deadline=None)
hypothesis.settings.load_profile("default")

# Minimum pair separation for random configurations
MIN_SEPARATION = 0.5


def two_body_unit(label: Subset = Subset.SLOW) -> tuple[PhaseState, SystemModel]:
    """Unit masses, k = 1, unit separation, circular relative orbit."""
    s = np.sqrt(2.0) / 2.0
    state = PhaseState(
        positions=[[0.0, 0.0], [1.0, 0.0]],
        velocities=[[0.0, -s], [0.0, s]],
        masses=[1.0, 1.0],
    )
    return state, SystemModel(2, (PairTerm(0, 1, Gravity(1.0), label),))


def random_state(rng: np.random.Generator, n: int, dim: int) -> PhaseState:
    while True:
        pos = rng.normal(scale=1.5, size=(n, dim))
        d = pos[:, None, :] - pos[None, :, :]
        r = np.sqrt(np.sum(d**2, axis=-1)) + np.eye(n) * 1e9
        if r.min() > MIN_SEPARATION:
            break
    return PhaseState(pos, rng.normal(scale=0.3, size=(n, dim)), rng.uniform(0.5, 2.0, size=n))


def gravity_model(masses: np.ndarray) -> SystemModel:
    """All pairs gravitational; pairs touching particle 0 are FAST."""
    n = len(masses)
    pairs = tuple(
        PairTerm(i, j, Gravity(float(masses[i] * masses[j])), Subset.FAST if i == 0 else Subset.SLOW)
        for i in range(n)
        for j in range(i + 1, n)
    )
    return SystemModel(n, pairs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_system():
    return two_body_unit()


@pytest.fixture
def sun_earth_moon():
    return build_sun_earth_moon()


@pytest.fixture
def random_three_body(rng):
    state = random_state(rng, 3, 2)
    return state, gravity_model(state.masses)
