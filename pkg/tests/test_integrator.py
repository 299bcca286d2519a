import numpy as np
import pytest
from sympy import Rational

from shadowstep.dynamics import PhaseState, force_gradient, forces, total_momentum
from shadowstep.errors import ConfigurationError, DomainError, IntegrationError
from shadowstep.integrator import EvalCounter, drift, integrate, kick, step
from shadowstep.models import CostWeights, Subset
from shadowstep.schemes import alike5_nested, leapfrog, nested_force_gradient, nested_leapfrog, omelyan5, omelyan5_fg, parse_scheme

from tests.conftest import two_body_unit
from tests.test_schemes import all_builders

REVERSIBILITY_TOLERANCE = 1e-9
MOMENTUM_TOLERANCE = 1e-12
SYMPLECTIC_TOLERANCE = 1e-5
JACOBIAN_STEP = 1e-6


def _flat(state: PhaseState) -> np.ndarray:
    return np.concatenate([state.positions.ravel(), state.velocities.ravel()])


def _rel_inf(a: PhaseState, b: PhaseState) -> float:
    x, y = _flat(a), _flat(b)
    return float(np.max(np.abs(x - y)) / np.max(np.abs(y)))


def test_drift_example():
    state = PhaseState([[0.0, 0.0]], [[1.0, 2.0]], [1.0])
    np.testing.assert_array_equal(drift(state, 0.5).positions, [[0.5, 1.0]])
    np.testing.assert_array_equal(drift(state, 0.0).positions, state.positions)
    np.testing.assert_array_equal(drift(drift(state, 0.25), 0.5).positions, drift(state, 0.75).positions)
    np.testing.assert_array_equal(drift(state, 0.5).velocities, state.velocities)


def test_kick_identity_and_plain_kick(unit_system):
    state, model = unit_system
    same = kick(state, model, Subset.FULL, 0.0, 0.0)
    np.testing.assert_array_equal(same.velocities, state.velocities)
    a = forces(state, model).accelerations(state.masses)
    out = kick(state, model, Subset.FULL, 0.1)
    np.testing.assert_allclose(out.velocities, state.velocities + 0.1 * a, rtol=1e-15)
    np.testing.assert_array_equal(out.positions, state.positions)


def test_kick_with_force_gradient(unit_system):
    state, model = unit_system
    a = forces(state, model).accelerations(state.masses)
    g = force_gradient(state, model)
    out = kick(state, model, Subset.FULL, 1.0, 1.0)
    np.testing.assert_allclose(out.velocities, state.velocities + a + g / state.masses[:, None], rtol=1e-14)


def test_single_drift_scheme_is_drift(unit_system):
    state, model = unit_system
    out = step(parse_scheme("D(1)"), state, model, 0.3)
    np.testing.assert_array_equal(out.positions, drift(state, 0.3).positions)


def test_step_rejects_non_positive_h(unit_system):
    state, model = unit_system
    with pytest.raises(ConfigurationError):
        step(leapfrog(), state, model, 0.0)


def test_integrate_one_step_equals_step(unit_system):
    state, model = unit_system
    traj = integrate(omelyan5_fg(), state, model, 0.05, 1)
    expected = step(omelyan5_fg(), state, model, 0.05)
    np.testing.assert_array_equal(traj.final_state.positions, expected.positions)
    np.testing.assert_array_equal(traj.final_state.velocities, expected.velocities)


def test_integrate_composes_bit_exactly(sun_earth_moon):
    state, model = sun_earth_moon
    scheme = nested_force_gradient(4)
    whole = integrate(scheme, state, model, 0.04, 12).final_state
    first = integrate(scheme, state, model, 0.04, 5).final_state
    second = integrate(scheme, first, model, 0.04, 7).final_state
    np.testing.assert_array_equal(whole.positions, second.positions)
    np.testing.assert_array_equal(whole.velocities, second.velocities)


def test_integrate_does_not_mutate_input(unit_system):
    state, model = unit_system
    before = state.copy()
    integrate(leapfrog(), state, model, 0.1, 10)
    np.testing.assert_array_equal(state.positions, before.positions)
    np.testing.assert_array_equal(state.velocities, before.velocities)


def test_sampling_schedule(unit_system):
    state, model = unit_system
    traj = integrate(leapfrog(), state, model, 0.1, 10, sample_every=4, record_states=True)
    assert traj.steps.tolist() == [0, 4, 8, 10]
    assert traj.times[0] == 0.0
    assert np.all(np.diff(traj.times) > 0)
    assert len(traj.states) == 4
    assert traj.rel_energy_errors[0] == 0.0


def test_integrate_argument_checks(unit_system):
    state, model = unit_system
    with pytest.raises(ConfigurationError):
        integrate(leapfrog(), state, model, 0.1, 0)
    with pytest.raises(ConfigurationError):
        integrate(leapfrog(), state, model, 0.1, 3, sample_every=0)


def test_coincident_particles_become_integration_error(unit_system):
    _, model = unit_system
    state = PhaseState([[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]], [1.0, 1.0])
    with pytest.raises(IntegrationError) as info:
        integrate(omelyan5(), state, model, 0.1, 5)
    assert info.value.scheme == "omelyan5"
    assert info.value.step_index == 0


def test_zero_initial_energy_is_rejected(unit_system):
    _, model = unit_system
    state = PhaseState([[0.0, 0.0], [1.0, 0.0]], [[0.0, -1.0], [0.0, 1.0]], [1.0, 1.0])
    with pytest.raises(IntegrationError) as info:
        integrate(leapfrog(), state, model, 0.1, 5)
    assert info.value.step_index == 0
    assert isinstance(info.value.__cause__, DomainError)


def test_rel_energy_errors_needs_nonzero_initial_energy(unit_system):
    state, model = unit_system
    traj = integrate(leapfrog(), state, model, 0.1, 2)
    traj.initial_energy = 0.0
    with pytest.raises(DomainError):
        traj.rel_energy_errors


def test_progress_callback(unit_system):
    state, model = unit_system
    seen = []
    integrate(leapfrog(), state, model, 0.1, 6, sample_every=2, progress=seen.append)
    assert [s.step for s in seen] == [2, 4, 6]
    assert seen[-1].time_mo == pytest.approx(0.6)


@pytest.mark.parametrize("scheme", all_builders(30), ids=lambda s: s.name)
def test_time_reversibility(scheme, random_three_body, sun_earth_moon):
    for state, model, h in ((*random_three_body, 0.005), (*sun_earth_moon, 0.04)):
        forward = integrate(scheme, state, model, h, 100).final_state
        back = integrate(scheme, forward.with_negated_velocities(), model, h, 100).final_state
        assert _rel_inf(back.with_negated_velocities(), state) < REVERSIBILITY_TOLERANCE


@pytest.mark.parametrize("scheme", [leapfrog(), omelyan5_fg(), nested_force_gradient(5)], ids=lambda s: s.name)
def test_momentum_conservation(scheme, sun_earth_moon):
    state, model = sun_earth_moon
    p0 = total_momentum(state)
    p1 = total_momentum(integrate(scheme, state, model, 0.01, 1000).final_state)
    assert np.linalg.norm(p1 - p0) <= MOMENTUM_TOLERANCE * np.linalg.norm(p0)


@pytest.mark.parametrize("scheme", all_builders(3), ids=lambda s: s.name)
@pytest.mark.parametrize("label", [Subset.FAST, Subset.SLOW])
def test_one_step_map_is_symplectic(scheme, label):
    state, model = two_body_unit(label)
    z0 = _flat(state)
    nd = state.positions.size
    jac = np.empty((2 * nd, 2 * nd))
    for k in range(2 * nd):
        cols = []
        for sign in (1.0, -1.0):
            z = z0.copy()
            z[k] += sign * JACOBIAN_STEP
            shifted = PhaseState(z[:nd].reshape(state.positions.shape), z[nd:].reshape(state.positions.shape), state.masses)
            cols.append(_flat(step(scheme, shifted, model, 0.01)))
        jac[:, k] = (cols[0] - cols[1]) / (2 * JACOBIAN_STEP)
    omega = np.block([[np.zeros((nd, nd)), np.eye(nd)], [-np.eye(nd), np.zeros((nd, nd))]])
    assert np.max(np.abs(jac.T @ omega @ jac - omega)) < SYMPLECTIC_TOLERANCE


def test_evaluation_counts_leapfrog(unit_system):
    state, model = unit_system
    traj = integrate(leapfrog(), state, model, 0.1, 20)
    assert traj.counter.force[Subset.FULL] == 21
    assert traj.counter.drifts == 20
    uncached = integrate(leapfrog(), state, model, 0.1, 20, use_cache=False)
    assert uncached.counter.force[Subset.FULL] == 40
    np.testing.assert_array_equal(traj.final_state.velocities, uncached.final_state.velocities)


@pytest.mark.parametrize("M", [1, 3, 30])
def test_evaluation_counts_nested_force_gradient(sun_earth_moon, M):
    state, model = sun_earth_moon
    l = 7
    counter = integrate(nested_force_gradient(M), state, model, 0.04, l).counter
    assert counter.force[Subset.SLOW] == 2 * l + 1
    assert counter.gradient[Subset.SLOW] == l
    assert counter.force[Subset.FAST] == 2 * M * l + 1
    assert counter.force[Subset.FULL] == 0
    w = CostWeights()
    expected = (2 * l + 1) * w.slow_force + l * w.slow_force_gradient + (2 * M * l + 1) * w.fast_force
    assert counter.weighted(w) == pytest.approx(expected)
    again = integrate(nested_force_gradient(M), state, model, 0.04, l).counter
    assert again.as_dict() == counter.as_dict()


def test_counter_weights_full_as_fast_plus_slow():
    c = EvalCounter()
    c.force[Subset.FULL] = 3
    c.gradient[Subset.FULL] = 1
    w = CostWeights()
    assert c.weighted(w) == pytest.approx(3 * 1.001 + 2.002)


@pytest.mark.parametrize("scheme", [leapfrog(), omelyan5(), omelyan5_fg()], ids=lambda s: s.name)
def test_energy_error_is_bounded(scheme, sun_earth_moon):
    state, model = sun_earth_moon
    traj = integrate(scheme, state, model, 0.04, 600)
    err = traj.rel_energy_errors
    first_year = err[traj.times <= 12.0 + 1e-9].max()
    assert err.max() < 2.0 * first_year


@pytest.mark.slow
@pytest.mark.parametrize(
    "scheme", [nested_leapfrog(30), alike5_nested(Rational(1, 6), 30), nested_force_gradient(30)], ids=lambda s: s.name
)
def test_energy_error_is_bounded_nested(scheme, sun_earth_moon):
    state, model = sun_earth_moon
    traj = integrate(scheme, state, model, 0.04, 600, sample_every=5)
    err = traj.rel_energy_errors
    assert err.max() < 2.0 * err[traj.times <= 12.0 + 1e-9].max()


def test_nested_with_M_one_and_no_fast_pairs_matches_leapfrog(unit_system):
    # all pairs SLOW: the inner loop only drifts
    state, model = unit_system
    a = integrate(nested_leapfrog(1), state, model, 0.05, 10).final_state
    b = integrate(leapfrog(), state, model, 0.05, 10).final_state
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.velocities, b.velocities)
