""" Orbital state representations, fixed-step RK4 propagation with even sampling, and collision screening """
import math
import logging
import dataclasses

import numpy as np

from pygravsafe.gravity import DomainError, acceleration

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
# Below these, eccentricity or sin(inclination) are treated as zero for angle conventions
DEGENERATE_ECCENTRICITY = 1e-8
DEGENERATE_INCLINATION = 1e-8


class UnsupportedOrbitError(ValueError):
    """ The orbit is not elliptical (e ≥ 1 or non-negative specific energy) """
    pass


class DegenerateOrbitError(ValueError):
    """ The state has no angular momentum, so no orbital plane """
    pass


class IntegrationError(RuntimeError):
    """ The propagated trajectory left the domain of the gravity field """
    pass


@dataclasses.dataclass(frozen=True, eq=False)
class CartesianState:
    """ Position and velocity in normalized units """
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        position = np.array(self.position, dtype=float).reshape(3)
        velocity = np.array(self.velocity, dtype=float).reshape(3)
        if not (np.all(np.isfinite(position)) and np.all(np.isfinite(velocity))):
            raise DomainError('State components must be finite')
        if not np.linalg.norm(position) > 0:
            raise DomainError('State position must not be the origin')
        object.__setattr__(self, 'position', position)
        object.__setattr__(self, 'velocity', velocity)


    def as_array(self):
        """ `numpy.ndarray`: the 6-vector (position, velocity) """
        return np.concatenate([self.position, self.velocity])


    @classmethod
    def from_array(cls, y):
        """ Inverse of :meth:`~as_array` """
        return cls(y[:3], y[3:])


def _wrap(angle):
    """ Wrap an angle to [0, 2π) """
    angle = math.fmod(angle, TWO_PI)
    angle = angle + TWO_PI if angle < 0 else angle
    return 0. if angle >= TWO_PI else angle


@dataclasses.dataclass(frozen=True)
class KeplerianElements:
    """ Instantaneous (osculating) Keplerian elements, angles in radians wrapped to [0, 2π) """
    semi_major: float
    eccentricity: float
    inclination: float
    raan: float
    arg_perigee: float
    true_anomaly: float

    def __post_init__(self):
        for name in ('inclination', 'raan', 'arg_perigee', 'true_anomaly'):
            object.__setattr__(self, name, _wrap(float(getattr(self, name))))


    @property
    def periapsis(self):
        """ `float`: Keplerian periapsis radius a(1 − e) """
        return self.semi_major * (1 - self.eccentricity)


    def as_tuple(self):
        """ `tuple`: (a, e, i, Ω, ω, ν) """
        return dataclasses.astuple(self)


def keplerian_period(semi_major, mu):
    """ Instantaneous Keplerian period τ = 2π sqrt(a³/μ)

    Raises:
        :class:`~pygravsafe.gravity.DomainError`: non-positive semi-major axis or gravitational parameter
    """
    if not semi_major > 0 or not mu > 0:
        raise DomainError(f'Keplerian period needs positive semi-major axis and mu, got {semi_major}, {mu}')
    return TWO_PI * math.sqrt(semi_major ** 3 / mu)


def _rotation(el):
    """ Perifocal to inertial rotation matrix R3(−Ω) R1(−i) R3(−ω) """
    c_o, s_o = math.cos(el.raan), math.sin(el.raan)
    c_w, s_w = math.cos(el.arg_perigee), math.sin(el.arg_perigee)
    c_i, s_i = math.cos(el.inclination), math.sin(el.inclination)
    return np.array([
        [c_o * c_w - s_o * s_w * c_i, -c_o * s_w - s_o * c_w * c_i, s_o * s_i],
        [s_o * c_w + c_o * s_w * c_i, -s_o * s_w + c_o * c_w * c_i, -c_o * s_i],
        [s_w * s_i, c_w * s_i, c_i],
    ])


def elements_to_state(el, mu):
    """ Cartesian state of the elliptical orbit described by Keplerian elements

    Args:
        el (:class:`~KeplerianElements`): the elements
        mu (`float`): gravitational parameter

    Returns:
        :class:`~CartesianState`: the state at the given true anomaly

    Raises:
        :class:`~UnsupportedOrbitError`: the orbit is not elliptical
    """
    if not 0 <= el.eccentricity < 1 or not el.semi_major > 0:
        raise UnsupportedOrbitError(f'Only elliptical orbits are supported, got a={el.semi_major} e={el.eccentricity}')

    p = el.semi_major * (1 - el.eccentricity ** 2)
    c_nu, s_nu = math.cos(el.true_anomaly), math.sin(el.true_anomaly)
    r = p / (1 + el.eccentricity * c_nu)
    speed = math.sqrt(mu / p)

    rotation = _rotation(el)
    position = rotation @ np.array([r * c_nu, r * s_nu, 0.])
    velocity = rotation @ np.array([-speed * s_nu, speed * (el.eccentricity + c_nu), 0.])
    return CartesianState(position, velocity)


def state_to_elements(state, mu):
    """ Osculating Keplerian elements of a bound Cartesian state

    Degenerate conventions: for sin i below :data:`~DEGENERATE_INCLINATION`, Ω = 0 and the node line is the x axis;
    for e below :data:`~DEGENERATE_ECCENTRICITY`, ω = 0 and ν is measured from the node line.

    Args:
        state (:class:`~CartesianState`): position and velocity
        mu (`float`): gravitational parameter

    Returns:
        :class:`~KeplerianElements`: the elements

    Raises:
        :class:`~DegenerateOrbitError`: zero angular momentum
        :class:`~UnsupportedOrbitError`: the state is not bound
    """
    r_vec, v_vec = state.position, state.velocity
    r = np.linalg.norm(r_vec)
    h_vec = np.cross(r_vec, v_vec)
    h = np.linalg.norm(h_vec)
    if h <= 1e-14 * r * np.linalg.norm(v_vec) or h == 0:
        raise DegenerateOrbitError('Rectilinear state has no orbital plane')

    energy = v_vec @ v_vec / 2 - mu / r
    if energy >= 0:
        raise UnsupportedOrbitError(f'State is not bound (specific energy {energy})')

    semi_major = -mu / (2 * energy)
    e_vec = ((v_vec @ v_vec - mu / r) * r_vec - (r_vec @ v_vec) * v_vec) / mu
    ecc = np.linalg.norm(e_vec)

    h_unit = h_vec / h
    inclination = math.atan2(math.hypot(h_unit[0], h_unit[1]), h_unit[2])
    raan = 0. if math.sin(inclination) < DEGENERATE_INCLINATION else math.atan2(h_unit[0], -h_unit[1])

    node = np.array([math.cos(raan), math.sin(raan), 0.])
    node_normal = np.cross(h_unit, node)
    latitude_arg = math.atan2(r_vec @ node_normal, r_vec @ node)

    if ecc < DEGENERATE_ECCENTRICITY:
        arg_perigee = 0.
    else:
        arg_perigee = math.atan2(e_vec @ node_normal, e_vec @ node)

    return KeplerianElements(semi_major, ecc, inclination, raan, arg_perigee, latitude_arg - arg_perigee)


def _derivative(field, y):
    """ Time derivative of (a batch of) stacked 6-states under the gravity field """
    return np.concatenate([y[..., 3:], acceleration(field, y[..., :3])], axis=-1)


def _rk4(field, y, h):
    """ One classical RK4 step on stacked states, `h` broadcasting against the leading dimensions """
    k1 = _derivative(field, y)
    k2 = _derivative(field, y + h / 2 * k1)
    k3 = _derivative(field, y + h / 2 * k2)
    k4 = _derivative(field, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_step(field, state, h):
    """ One classical fourth-order Runge-Kutta step of ẋ = v, v̇ = a(x)

    Args:
        field (:class:`~pygravsafe.gravity.ZonalGravityField`): the gravity field
        state (:class:`~CartesianState`): the state to advance
        h (`float`): positive step size

    Returns:
        :class:`~CartesianState`: the state after one step
    """
    if not h > 0:
        raise DomainError(f'Step size must be positive, got {h}')
    return CartesianState.from_array(_rk4(field, state.as_array(), h))


@dataclasses.dataclass(frozen=True)
class TrajectorySpec:
    """ How long to propagate and how densely to sample, in instantaneous Keplerian periods

    Attributes:
        n_periods (`float`): trajectory length in periods of the initial condition
        samples_per_period (`int`): evenly spaced samples per period
        steps_per_period (`int`): internal integrator steps per period
        base_period (`float` or `None`): τ of the initial condition, filled in by propagation
    """
    n_periods: float
    samples_per_period: int = 25
    steps_per_period: int = 1000
    base_period: float = None

    def __post_init__(self):
        if not self.n_periods > 0 or not self.samples_per_period >= 1 or not self.steps_per_period >= 1:
            raise DomainError(f'Invalid trajectory specification {self}')
        if self.sample_count < 2:
            raise DomainError(f'Trajectory specification {self} yields fewer than 2 samples')


    @property
    def sample_count(self):
        """ `int`: ceil(n_periods · samples_per_period) """
        return math.ceil(self.n_periods * self.samples_per_period - 1e-9)


    @property
    def substeps(self):
        """ `int`: integrator steps between consecutive samples """
        return max(1, math.ceil(self.steps_per_period / self.samples_per_period - 1e-9))


@dataclasses.dataclass(frozen=True, eq=False)
class SampledTrajectory:
    """ Evenly time-sampled states with the truth accelerations at the sampled positions """
    times: np.ndarray
    states: list
    true_accelerations: np.ndarray
    spec: TrajectorySpec = None

    @property
    def positions(self):
        """ `numpy.ndarray`: (N, 3) sampled positions """
        return np.array([state.position for state in self.states])


def instantaneous_period(state, mu):
    """ τ of the osculating orbit of `state` """
    return keplerian_period(state_to_elements(state, mu).semi_major, mu)


def propagate_and_sample(field, state0, spec):
    """ Propagate an initial state with fixed-step RK4 and sample it evenly in time

    Samples are spaced τ / samples_per_period from t = 0, each interval integrated with `spec.substeps` equal steps,
    i.e. the internal step is τ / steps_per_period when the sampling rate divides the step rate.

    Args:
        field (:class:`~pygravsafe.gravity.ZonalGravityField`): the truth gravity field
        state0 (:class:`~CartesianState`): the initial condition
        spec (:class:`~TrajectorySpec`): length and sampling

    Returns:
        :class:`~SampledTrajectory`: the samples, with truth accelerations evaluated analytically

    Raises:
        :class:`~IntegrationError`: the trajectory reached the origin
    """
    tau = instantaneous_period(state0, field.mu)
    spec = dataclasses.replace(spec, base_period=tau)
    spacing = tau / spec.samples_per_period
    h = spacing / spec.substeps

    samples = np.empty((spec.sample_count, 6))
    y = state0.as_array()
    samples[0] = y
    try:
        for k in range(1, spec.sample_count):
            for _ in range(spec.substeps):
                y = _rk4(field, y, h)
            samples[k] = y
    except DomainError as err:
        raise IntegrationError('Trajectory passed through the origin') from err

    if not np.all(np.isfinite(samples)):
        raise IntegrationError('Trajectory diverged')

    times = np.arange(spec.sample_count) * spacing
    states = [CartesianState.from_array(row) for row in samples]
    return SampledTrajectory(times, states, acceleration(field, samples[:, :3]), spec)


def screen_collisions(field, states, screen_periods=50, collision_radius=1., steps_per_period=1000):
    """ Flag which initial conditions enter the collision sphere, checking every internal integrator step

    All states are propagated together, each with its own step τ / steps_per_period.

    Args:
        field (:class:`~pygravsafe.gravity.ZonalGravityField`): the truth gravity field
        states (`list` of :class:`~CartesianState`): initial conditions
        screen_periods (`float`): horizon in instantaneous Keplerian periods of each initial condition
        collision_radius (`float`): radius of the collision sphere, the Brillouin sphere by default
        steps_per_period (`int`): internal integrator steps per period

    Returns:
        `numpy.ndarray`: boolean collision flags, in input order
    """
    colliding = np.zeros(len(states), dtype=bool)
    if not states or not collision_radius > 0:
        return colliding

    y = np.array([state.as_array() for state in states])
    h = np.array([instantaneous_period(state, field.mu) / steps_per_period for state in states])[:, np.newaxis]

    colliding = np.linalg.norm(y[:, :3], axis=1) < collision_radius
    for _ in range(math.ceil(screen_periods * steps_per_period - 1e-9)):
        active = ~colliding
        if not active.any():
            break
        try:
            y[active] = _rk4(field, y[active], h[active])
        except DomainError:
            # A state hit the origin exactly: redo row by row to find which
            for row in np.flatnonzero(active):
                try:
                    y[row] = _rk4(field, y[row], h[row])
                except DomainError:
                    colliding[row] = True
        colliding |= ~np.isfinite(y).all(axis=1) | (np.linalg.norm(y[:, :3], axis=1) < collision_radius)

    logger.debug('Screened %d initial conditions, %d colliding', len(states), colliding.sum())
    return colliding


def classify_collision(field, state0, screen_periods=50, collision_radius=1., steps_per_period=1000):
    """ Whether the trajectory from `state0` enters the collision sphere within `screen_periods` periods """
    return bool(screen_collisions(field, [state0], screen_periods, collision_radius, steps_per_period)[0])
