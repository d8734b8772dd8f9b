""" Training and test data: initial condition sampling, trajectory datasets, observation noise and splits """
import json
import math
import hashlib
import logging
import pathlib
import functools
import dataclasses

import numpy as np

from pygravsafe.gravity import acceleration
from pygravsafe.config import ConfigError
from pygravsafe.dynamics import KeplerianElements, elements_to_state, propagate_and_sample, screen_collisions

logger = logging.getLogger(__name__)

ELEMENT_NAMES = ('semi_major', 'eccentricity', 'inclination', 'raan', 'arg_perigee', 'true_anomaly')
ANGLE_NAMES = ELEMENT_NAMES[2:]
CSV_COLUMNS = ('t', 'x1', 'x2', 'x3', 'ax', 'ay', 'az',
               'true_x1', 'true_x2', 'true_x3', 'true_ax', 'true_ay', 'true_az')
# Median acceleration magnitude over the initial condition domain after scaling
TARGET_MEDIAN_ACCELERATION = 10.


class RejectedInitialConditionError(ValueError):
    """ An initial condition cannot be used to build a dataset bundle """
    pass


def derive_seed(base_seed, *keys):
    """ Stable 63-bit seed from a base seed and any identifying keys, independent of scheduling or hash salting """
    digest = hashlib.sha256(repr((int(base_seed), *keys)).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') >> 1


@dataclasses.dataclass(frozen=True)
class ElementRanges:
    """ Uniform sampling bounds for the initial Keplerian elements; angles in degrees """
    semi_major: tuple = (1.25, 3.)
    eccentricity: tuple = (.05, .75)
    inclination: tuple = (0., 180.)
    raan: tuple = (0., 180.)
    arg_perigee: tuple = (0., 180.)
    true_anomaly: tuple = (0., 180.)

    def __post_init__(self):
        for name in ELEMENT_NAMES:
            lower, upper = map(float, getattr(self, name))
            object.__setattr__(self, name, (lower, upper))
            if not lower <= upper:
                raise ConfigError(f'Range of {name} has lower bound {lower} above upper bound {upper}')
            if name in ANGLE_NAMES and not 0 <= lower <= upper <= 360:
                raise ConfigError(f'Angle range of {name} must lie within [0°, 360°]')
        if not 0 < self.semi_major[0] or not 0 <= self.eccentricity[0] <= self.eccentricity[1] < 1:
            raise ConfigError('Ranges must describe elliptical orbits')


    def bounds(self):
        """ `tuple`: lower and upper bound arrays in element order, angles converted to radians """
        lower, upper = np.array([getattr(self, name) for name in ELEMENT_NAMES]).T
        lower[2:], upper[2:] = np.radians(lower[2:]), np.radians(upper[2:])
        return lower, upper


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    """ Isotropic zero-mean Gaussian observation noise on states and accelerations

    Attributes:
        sigma_state (`float`): standard deviation of position noise, normalized length units
        sigma_accel (`float`): standard deviation of acceleration noise, in scaled acceleration units
        accel_scale (`float`): multiplier applied to all accelerations before learning and noise injection
    """
    sigma_state: float = 0.
    sigma_accel: float = 0.
    accel_scale: float = 1.

    def __post_init__(self):
        if not self.sigma_state >= 0 or not self.sigma_accel >= 0:
            raise ConfigError('Noise standard deviations must be non-negative')
        if not self.accel_scale > 0:
            raise ConfigError('Acceleration scale must be positive')


    @property
    def is_identity(self):
        """ `bool`: whether injecting this noise leaves datasets unchanged """
        return self.sigma_state == 0 and self.sigma_accel == 0


@dataclasses.dataclass(frozen=True, eq=False)
class SampledDataset:
    """ N observed (position, acceleration) pairs, with the pre-noise truth kept for evaluation only

    Attributes:
        inputs (`numpy.ndarray`): (N, 3) observed positions
        targets (`numpy.ndarray`): (N, 3) observed accelerations, scaled by `accel_scale`
        truth_inputs (`numpy.ndarray`): (N, 3) true positions
        truth_targets (`numpy.ndarray`): (N, 3) true scaled accelerations
        times (`numpy.ndarray`): (N,) sample times
        accel_scale (`float`): scale applied to accelerations
        provenance (`dict`): JSON-serializable description of how the data was made
    """
    inputs: np.ndarray
    targets: np.ndarray
    truth_inputs: np.ndarray
    truth_targets: np.ndarray
    times: np.ndarray
    accel_scale: float = 1.
    provenance: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.inputs) == len(self.targets) == len(self.truth_inputs) == len(self.truth_targets)
                == len(self.times)):
            raise ValueError('Dataset arrays must all have the same length')


    def __len__(self):
        return len(self.inputs)


    @property
    def data_volume(self):
        """ `int`: 6N, three position plus three acceleration values per sample """
        return 6 * len(self)


    def subset(self, indices, **provenance):
        """ Dataset restricted to `indices`, in that order, with extra provenance entries """
        return SampledDataset(self.inputs[indices], self.targets[indices], self.truth_inputs[indices],
                              self.truth_targets[indices], self.times[indices], self.accel_scale,
                              {**self.provenance, **provenance})


@dataclasses.dataclass(frozen=True, eq=False)
class DatasetBundle:
    """ Training set with its siphoned interpolation test set, and an extrapolation test set from another orbit """
    train: SampledDataset
    interp_test: SampledDataset
    extrap_test: SampledDataset


def sample_initial_conditions(ranges, count, rng_seed):
    """ Independent uniform draws of each Keplerian element within `ranges`

    Args:
        ranges (:class:`~ElementRanges`): the sampling bounds
        count (`int`): number of draws
        rng_seed (`int` or :class:`~numpy.random.Generator`): seed, or a generator to continue drawing from

    Returns:
        `list` of :class:`~pygravsafe.dynamics.KeplerianElements`: the draws
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    lower, upper = ranges.bounds()
    draws = rng.uniform(lower, upper, size=(count, len(ELEMENT_NAMES)))
    return [KeplerianElements(*row) for row in draws]


def filter_collision_free(field, ics, screen_periods=50, collision_radius=1., steps_per_period=1000):
    """ Partition initial conditions into collision-free and colliding, preserving order within each

    Returns:
        `tuple`: the collision-free and the colliding `list` of :class:`~pygravsafe.dynamics.KeplerianElements`
    """
    states = [elements_to_state(ic, field.mu) for ic in ics]
    colliding = screen_collisions(field, states, screen_periods, collision_radius, steps_per_period)
    return ([ic for ic, hit in zip(ics, colliding) if not hit], [ic for ic, hit in zip(ics, colliding) if hit])


@functools.lru_cache(maxsize=16)
def default_accel_scale(field, ranges, samples=10000, seed=0):
    """ Acceleration scale making the median |a| over uniformly drawn initial positions equal 10

    Args:
        field (:class:`~pygravsafe.gravity.ZonalGravityField`): the truth gravity field
        ranges (:class:`~ElementRanges`): the initial condition domain
        samples (`int`): number of initial conditions drawn
        seed (`int`): seed of the draws

    Returns:
        `float`: the scale
    """
    positions = np.array([elements_to_state(ic, field.mu).position
                          for ic in sample_initial_conditions(ranges, samples, seed)])
    median = np.median(np.linalg.norm(acceleration(field, positions), axis=1))
    return float(TARGET_MEDIAN_ACCELERATION / median)


def build_dataset(traj, provenance=None, accel_scale=1.):
    """ Dataset of sampled positions and (scaled) truth accelerations, in trajectory order, without noise """
    positions = traj.positions
    accelerations = accel_scale * traj.true_accelerations
    return SampledDataset(positions, accelerations, positions.copy(), accelerations.copy(), np.asarray(traj.times),
                          accel_scale, dict(provenance or {}))


def inject_noise(ds, noise, field, rng_seed, collision_radius=1.):
    """ Observations a(x + ε_s) + ε_a at x + ε_s, with ε_s ~ N(0, σ_s² I) and ε_a ~ N(0, σ_a² I)

    The state noise corrupts the target through the physics: the field is re-evaluated at the perturbed position.
    A perturbed position inside the collision sphere is redrawn once, then the sample is dropped.

    Args:
        ds (:class:`~SampledDataset`): noise-free dataset carrying truth values
        noise (:class:`~NoiseSpec`): noise levels
        field (:class:`~pygravsafe.gravity.ZonalGravityField`): the truth field
        rng_seed (`int`): seed of the noise draws
        collision_radius (`float`): radius inside which perturbed positions are rejected

    Returns:
        :class:`~SampledDataset`: the observed dataset, truth values unchanged
    """
    if noise.is_identity:
        return ds

    rng = np.random.default_rng(rng_seed)
    keep = np.ones(len(ds), dtype=bool)
    inputs = ds.truth_inputs.copy()
    if noise.sigma_state > 0:
        inputs = ds.truth_inputs + rng.normal(0., noise.sigma_state, size=ds.truth_inputs.shape)
        inside = np.flatnonzero(np.linalg.norm(inputs, axis=1) < collision_radius)
        if inside.size:
            inputs[inside] = ds.truth_inputs[inside] + rng.normal(0., noise.sigma_state, size=(inside.size, 3))
            keep[inside] = np.linalg.norm(inputs[inside], axis=1) >= collision_radius
        if not keep.all():
            logger.warning('Dropped %d samples whose perturbed positions fell inside the collision sphere twice',
                           np.count_nonzero(~keep))

    targets = ds.accel_scale * acceleration(field, inputs[keep])
    if noise.sigma_accel > 0:
        targets = targets + rng.normal(0., noise.sigma_accel, size=targets.shape)

    provenance = {**ds.provenance, 'noise': dataclasses.asdict(noise), 'noise_seed': int(rng_seed)}
    return SampledDataset(inputs[keep], targets, ds.truth_inputs[keep], ds.truth_targets[keep], ds.times[keep],
                          ds.accel_scale, provenance)


def shuffle_split(ds, siphon_fraction=.05, rng_seed=0):
    """ Shuffle a dataset and siphon round(fraction · N) samples off as the interpolation test set

    Returns:
        `tuple`: the training and interpolation test :class:`~SampledDataset`

    Raises:
        :class:`~pygravsafe.config.ConfigError`: fraction outside (0, 1) or fewer than 2 samples
    """
    if not 0 < siphon_fraction < 1:
        raise ConfigError(f'Siphon fraction must be in (0, 1), got {siphon_fraction}')
    if len(ds) < 2:
        raise ConfigError(f'Need at least 2 samples to split, got {len(ds)}')

    permutation = np.random.default_rng(rng_seed).permutation(len(ds))
    n_test = int(math.floor(siphon_fraction * len(ds) + .5))
    return (ds.subset(permutation[n_test:], split='train', shuffle_seed=int(rng_seed)),
            ds.subset(permutation[:n_test], split='interp_test', shuffle_seed=int(rng_seed)))


def _same_ic(first, second):
    return np.allclose(first.as_tuple(), second.as_tuple(), rtol=0, atol=1e-12)


def build_bundle(field, ic_train, ic_extrap, spec_train, spec_extrap, noise, seeds, siphon_fraction=.05,
                 screen_periods=50, collision_radius=1., screen=True):
    """ Training, interpolation and extrapolation datasets from two distinct collision-free initial conditions

    Args:
        field (:class:`~pygravsafe.gravity.ZonalGravityField`): the truth gravity field
        ic_train (:class:`~pygravsafe.dynamics.KeplerianElements`): initial condition of the training trajectory
        ic_extrap (:class:`~pygravsafe.dynamics.KeplerianElements`): initial condition of the extrapolation trajectory
        spec_train (:class:`~pygravsafe.dynamics.TrajectorySpec`): training trajectory length and sampling
        spec_extrap (:class:`~pygravsafe.dynamics.TrajectorySpec`): extrapolation trajectory length and sampling
        noise (:class:`~NoiseSpec`): observation noise, applied to all three sets
        seeds (`dict`): seeds for the `train_noise`, `extrap_noise` and `shuffle` streams
        siphon_fraction (`float`): share of the training trajectory kept for interpolation testing
        screen (`bool`): whether to re-screen the initial conditions for collisions

    Returns:
        :class:`~DatasetBundle`: the three datasets

    Raises:
        :class:`~RejectedInitialConditionError`: identical or colliding initial conditions
    """
    if _same_ic(ic_train, ic_extrap):
        raise RejectedInitialConditionError('Extrapolation test trajectory must start from a separate initial condition')

    states = [elements_to_state(ic, field.mu) for ic in (ic_train, ic_extrap)]
    if screen:
        colliding = screen_collisions(field, states, screen_periods, collision_radius, spec_train.steps_per_period)
        if colliding.any():
            raise RejectedInitialConditionError(f'Initial condition(s) {np.flatnonzero(colliding).tolist()} collide')

    datasets = []
    for state, ic, spec, stream in zip(states, (ic_train, ic_extrap), (spec_train, spec_extrap),
                                       ('train_noise', 'extrap_noise')):
        traj = propagate_and_sample(field, state, spec)
        provenance = {'ic': dict(zip(ELEMENT_NAMES, ic.as_tuple())), 'spec': dataclasses.asdict(traj.spec)}
        clean = build_dataset(traj, provenance, noise.accel_scale)
        datasets.append(inject_noise(clean, noise, field, seeds[stream], collision_radius))

    train, interp = shuffle_split(datasets[0], siphon_fraction, seeds['shuffle'])
    return DatasetBundle(train, interp, datasets[1])


def save_dataset(ds, path):
    """ Write a dataset as CSV with a JSON provenance sidecar next to it (same name, `.json` suffix)

    Returns:
        `str`: SHA-256 of the written CSV file
    """
    path = pathlib.Path(path)
    table = np.column_stack([ds.times, ds.inputs, ds.targets, ds.truth_inputs, ds.truth_targets])
    np.savetxt(path, table, delimiter=',', header=','.join(CSV_COLUMNS), comments='', fmt='%.17g')
    sidecar = {**ds.provenance, 'accel_scale': ds.accel_scale, 'size': len(ds)}
    path.with_suffix('.json').write_text(json.dumps(sidecar, indent=2, sort_keys=True) + '\n')
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_dataset(path):
    """ Read a dataset written by :func:`~save_dataset` """
    path = pathlib.Path(path)
    table = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    sidecar = json.loads(path.with_suffix('.json').read_text())
    accel_scale = sidecar.pop('accel_scale')
    sidecar.pop('size', None)
    return SampledDataset(table[:, 1:4], table[:, 4:7], table[:, 7:10], table[:, 10:13], table[:, 0], accel_scale,
                          sidecar)
