import math
import pytest
import numpy as np

from pygravsafe.gravity import (DomainError, InfluenceQuery, ZonalGravityField, acceleration, influence_contour,
                                influence_radius, legendre, potential, zonal_term_potential)


bennu = ZonalGravityField.bennu()
point_mass = ZonalGravityField()

def shell_points(count, seed=0, low=1.2, high=3.):
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * rng.uniform(low, high, size=(count, 1))

def numerical_gradient(field, position, h=1e-5):
    return np.array([(potential(field, position + h * e) - potential(field, position - h * e)) / (2 * h)
                     for e in np.eye(3)])


def test_legendre():
    p, dp = legendre(2, .5)
    assert p == pytest.approx(-.125)
    assert dp == pytest.approx(1.5)

    p, dp = legendre(3, .5)
    assert p == pytest.approx(-.4375)
    assert dp == pytest.approx(.375)

    x = np.linspace(-1, 1, 11)
    for n in range(6):
        assert legendre(n, 1.)[0] == pytest.approx(1.)
        assert np.allclose(legendre(n, -x)[0], (-1) ** n * legendre(n, x)[0])


def test_point_mass():
    assert potential(point_mass, [2., 0., 0.]) == pytest.approx(.5)
    assert np.allclose(acceleration(point_mass, [2., 0., 0.]), [-.25, 0., 0.])
    assert np.allclose(acceleration(point_mass, [0., 0., 4.]), [0., 0., -1 / 16])


def test_origin_is_outside_domain():
    with pytest.raises(DomainError):
        potential(bennu, [0., 0., 0.])

    with pytest.raises(DomainError):
        acceleration(bennu, np.array([[1., 0., 0.], [0., 0., 0.]]))


def test_field_validation():
    with pytest.raises(DomainError):
        ZonalGravityField(mu=-1.)

    with pytest.raises(DomainError):
        ZonalGravityField(normalized_zonals=((2, .1), (2, .2)))

    with pytest.raises(DomainError):
        ZonalGravityField(normalized_zonals=((1, .1),))


def test_acceleration_is_potential_gradient():
    for position in shell_points(50):
        assert np.allclose(acceleration(bennu, position), numerical_gradient(bennu, position), rtol=1e-6, atol=1e-9)

    # Both poles, where the spherical form of the gradient is singular
    for position in ([0., 0., 1.7], [0., 0., -2.3], [1e-9, 0., 2.]):
        position = np.array(position)
        assert np.all(np.isfinite(acceleration(bennu, position)))
        assert np.allclose(acceleration(bennu, position), numerical_gradient(bennu, position), rtol=1e-6, atol=1e-9)


def test_batch_matches_single():
    positions = shell_points(20, seed=1)
    batch = acceleration(bennu, positions)
    assert batch.shape == (20, 3)
    for position, accel in zip(positions, batch):
        assert np.allclose(accel, acceleration(bennu, position))


def test_potential_decomposition():
    for position in shell_points(10, seed=2):
        r = np.linalg.norm(position)
        zonals = sum(zonal_term_potential(bennu, n, position) for n in (2, 3, 4, 5))
        assert potential(bennu, position) == pytest.approx(1 / r + zonals, rel=1e-12)


def test_zonal_term_example():
    # J_2 = √5 · 1.93e-2, P_2(0) = −1/2
    assert zonal_term_potential(bennu, 2, [2., 0., 0.]) == pytest.approx(2.697e-3, rel=1e-3)

    with pytest.raises(KeyError):
        zonal_term_potential(bennu, 6, [2., 0., 0.])


def test_axisymmetry():
    for position in shell_points(10, seed=3):
        angle = 1.234
        rotation = np.array([[math.cos(angle), -math.sin(angle), 0.], [math.sin(angle), math.cos(angle), 0.],
                             [0., 0., 1.]])
        assert potential(bennu, rotation @ position) == pytest.approx(potential(bennu, position), rel=1e-12)
        assert np.allclose(acceleration(bennu, rotation @ position), rotation @ acceleration(bennu, position),
                           rtol=1e-10, atol=1e-14)


def test_unnormalized_coefficients():
    assert bennu.zonals[2] == pytest.approx(math.sqrt(5) * 1.93e-2)
    assert bennu.max_degree == 5
    assert point_mass.max_degree == 0


def test_field_from_config():
    field = ZonalGravityField.from_config({'mu': '2.0', 'zonals': '[(3, 1e-3), (2, 1e-2)]'})
    assert field.mu == 2.
    assert field.normalized_zonals == ((2, 1e-2), (3, 1e-3))
    assert ZonalGravityField.from_config({}) == point_mass


def test_influence_radius():
    physical = ZonalGravityField.bennu(physical=True)
    assert influence_radius(physical, InfluenceQuery(2, 0.)) == pytest.approx(1.04e3, rel=1e-2)

    # Root of P_2
    assert influence_radius(physical, InfluenceQuery(2, math.acos(1 / math.sqrt(3)))) is None

    with pytest.raises(KeyError):
        influence_radius(physical, InfluenceQuery(6, 0.))

    with pytest.raises(DomainError):
        InfluenceQuery(2, 0., fraction=0.)

    with pytest.raises(DomainError):
        InfluenceQuery(2, 4.)


def test_influence_radius_scaling():
    physical = ZonalGravityField.bennu(physical=True)
    for n in (2, 3, 4, 5):
        base = influence_radius(physical, InfluenceQuery(n, .3, fraction=.1))
        doubled = influence_radius(physical, InfluenceQuery(n, .3, fraction=.2))
        assert doubled / base == pytest.approx(2 ** (-1 / (n + 1)), rel=1e-12)


def test_influence_contour():
    colatitudes = np.linspace(0, math.pi, 7)
    rows = influence_contour(ZonalGravityField.bennu(physical=True), (2, 3), colatitudes)
    assert len(rows) == 14
    assert [n for n, _, _ in rows] == [2] * 7 + [3] * 7
    # P_3(0) = 0 on the equator
    assert rows[10][2] is None
    assert all(radius > 0 for _, _, radius in rows if radius is not None)
