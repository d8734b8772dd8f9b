import math
import pytest
import numpy as np

from pygravsafe.gravity import DomainError, ZonalGravityField, potential
from pygravsafe.data import ElementRanges, sample_initial_conditions
from pygravsafe.dynamics import (CartesianState, DegenerateOrbitError, KeplerianElements, TrajectorySpec,
                                 UnsupportedOrbitError, classify_collision, elements_to_state, keplerian_period,
                                 propagate_and_sample, rk4_step, screen_collisions, state_to_elements)


bennu = ZonalGravityField.bennu()
point_mass = ZonalGravityField()

def angle_difference(a, b):
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi)

def energy(field, state):
    return state.velocity @ state.velocity / 2 - potential(field, state.position)


def test_keplerian_period():
    assert keplerian_period(1., 1.) == pytest.approx(2 * math.pi)
    assert keplerian_period(4., 1.) == pytest.approx(16 * math.pi)

    with pytest.raises(DomainError):
        keplerian_period(0., 1.)


def test_circular_equatorial_state():
    state = elements_to_state(KeplerianElements(2., 0., 0., 0., 0., 0.), 1.)
    assert np.allclose(state.position, [2., 0., 0.])
    assert np.allclose(state.velocity, [0., math.sqrt(.5), 0.])


def test_circular_polar_state():
    state = elements_to_state(KeplerianElements(2., 0., math.pi / 2, 0., 0., math.pi / 2), 1.)
    assert np.allclose(state.position, [0., 0., 2.], atol=1e-12)
    assert np.allclose(state.velocity, [-math.sqrt(.5), 0., 0.], atol=1e-12)


def test_elements_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        el = KeplerianElements(rng.uniform(1.25, 3.), rng.uniform(.05, .75), rng.uniform(.1, math.pi - .1),
                               *rng.uniform(0, 2 * math.pi, size=3))
        back = state_to_elements(elements_to_state(el, 1.), 1.)
        assert back.semi_major == pytest.approx(el.semi_major, rel=1e-9)
        assert back.eccentricity == pytest.approx(el.eccentricity, abs=1e-9)
        assert back.inclination == pytest.approx(el.inclination, abs=1e-9)
        for name in ('raan', 'arg_perigee', 'true_anomaly'):
            assert angle_difference(getattr(back, name), getattr(el, name)) < 1e-8


def test_degenerate_conventions():
    # Equatorial: Ω = 0, node line along x
    el = state_to_elements(elements_to_state(KeplerianElements(2., .3, 0., 0., 1., .5), 1.), 1.)
    assert el.raan == 0.
    assert angle_difference(el.arg_perigee + el.true_anomaly, 1.5) < 1e-9

    # Circular: ω = 0, ν measured from the node line
    el = state_to_elements(elements_to_state(KeplerianElements(2., 0., .4, 1., 0., .7), 1.), 1.)
    assert el.arg_perigee == 0.
    assert angle_difference(el.true_anomaly, .7) < 1e-9


def test_unsupported_orbits():
    with pytest.raises(UnsupportedOrbitError):
        elements_to_state(KeplerianElements(2., 1.2, 0., 0., 0., 0.), 1.)

    with pytest.raises(UnsupportedOrbitError):
        state_to_elements(CartesianState([2., 0., 0.], [0., 2., 0.]), 1.)

    with pytest.raises(DegenerateOrbitError):
        state_to_elements(CartesianState([2., 0., 0.], [.1, 0., 0.]), 1.)

    with pytest.raises(DomainError):
        CartesianState([0., 0., 0.], [1., 0., 0.])


def test_angles_are_wrapped():
    el = KeplerianElements(2., .1, -.5, 7., 2 * math.pi, 0.)
    assert el.inclination == pytest.approx(2 * math.pi - .5)
    assert el.raan == pytest.approx(7. - 2 * math.pi)
    assert el.arg_perigee == 0.
    assert el.periapsis == pytest.approx(1.8)


def test_rk4_fourth_order():
    state0 = elements_to_state(KeplerianElements(1.5, 0., .3, 0., 0., 0.), 1.)
    period = keplerian_period(1.5, 1.)

    def error(steps):
        state = state0
        for _ in range(steps):
            state = rk4_step(point_mass, state, period / steps)
        return np.linalg.norm(state.position - state0.position)

    observed_order = math.log2(error(200) / error(400))
    assert 3.8 <= observed_order <= 4.2

    with pytest.raises(DomainError):
        rk4_step(point_mass, state0, 0.)


def test_energy_conservation():
    state0 = elements_to_state(KeplerianElements(2., .2, .5, .1, .2, .3), 1.)
    traj = propagate_and_sample(bennu, state0, TrajectorySpec(10, 25, 1000))
    energies = np.array([energy(bennu, state) for state in traj.states])
    assert np.max(np.abs(energies - energies[0])) < 1e-6 * abs(energies[0])


def test_sampling():
    assert TrajectorySpec(10, 25).sample_count == 250
    assert TrajectorySpec(3, 25).sample_count == 75
    assert TrajectorySpec(.5, 25).sample_count == 13
    assert TrajectorySpec(1, 25, 1000).substeps == 40

    with pytest.raises(DomainError):
        TrajectorySpec(.01, 25)

    with pytest.raises(DomainError):
        TrajectorySpec(0, 25)

    state0 = elements_to_state(KeplerianElements(2., 0., .3, 0., 0., 0.), 1.)
    traj = propagate_and_sample(point_mass, state0, TrajectorySpec(2, 25, 1000))
    period = keplerian_period(2., 1.)

    assert len(traj.states) == 50
    assert traj.spec.base_period == pytest.approx(period)
    assert np.allclose(np.diff(traj.times), period / 25)
    assert traj.times[0] == 0.
    assert traj.true_accelerations.shape == (50, 3)
    # Back to the start after one period on a Keplerian orbit
    assert np.allclose(traj.states[25].position, state0.position, atol=1e-8)


def test_collision_screening():
    # Periapsis 0.3125, starting from apoapsis
    colliding = elements_to_state(KeplerianElements(1.25, .75, .2, 0., 0., math.pi), 1.)
    # Periapsis 2.85
    safe = elements_to_state(KeplerianElements(3., .05, .2, 0., 0., 0.), 1.)

    assert classify_collision(bennu, colliding, screen_periods=1)
    assert not classify_collision(bennu, safe, screen_periods=2)

    # Input order is preserved, and screening longer never clears a collision
    assert screen_collisions(bennu, [safe, colliding, safe], 1).tolist() == [False, True, False]
    assert screen_collisions(bennu, [safe, colliding], 2).tolist() == [False, True]

    # No collision sphere, no collision
    assert screen_collisions(bennu, [colliding], 1, collision_radius=0.).tolist() == [False]
    assert screen_collisions(bennu, []).tolist() == []


def test_collisions_grow_with_radius():
    states = [elements_to_state(ic, bennu.mu) for ic in sample_initial_conditions(ElementRanges(), 40, 11)]
    flags = [screen_collisions(bennu, states, 2, collision_radius=radius, steps_per_period=200)
             for radius in (.25, .5, 1., 1.5, 2.5)]

    # A larger sphere never clears a collision
    for smaller, larger in zip(flags, flags[1:]):
        assert np.all(larger[smaller])
    assert flags[-1].sum() > flags[0].sum()
