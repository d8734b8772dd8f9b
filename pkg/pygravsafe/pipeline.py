""" Orchestration: single-run characterization of a learning framework, and sweeps over frameworks and parameters

A sweep evaluates every parameter instance on the same frozen list of collision-free initial condition pairs, with
per-run seeds derived from indices so that results do not depend on scheduling.
"""
import os
import csv
import json
import time
import hashlib
import logging
import pathlib
import itertools
import dataclasses
import concurrent.futures

import numpy as np

from pygravsafe.config import ConfigError
from pygravsafe.gravity import DomainError, ZonalGravityField, influence_contour
from pygravsafe.dynamics import KeplerianElements, TrajectorySpec, elements_to_state, screen_collisions
from pygravsafe.data import (ELEMENT_NAMES, ElementRanges, NoiseSpec, build_bundle, default_accel_scale, derive_seed,
                             sample_initial_conditions, save_dataset)
from pygravsafe.gp import GpTrainConfig, train_gp
from pygravsafe.nn import NnTrainConfig, train_nn
from pygravsafe.characterization import SET_LABELS, EmptySetError, TruthRegressor, characterize, loglog_fit

logger = logging.getLogger(__name__)

FRAMEWORKS = ('gp', 'nn', 'truth')
#: Independent random streams of a run
STREAMS = ('train_noise', 'extrap_noise', 'shuffle', 'model')
#: Run parameters that a sweep grid may vary
GRID_PARAMETERS = ('sigma_state', 'sigma_accel', 'accel_scale', 'train_periods', 'extrap_periods',
                   'samples_per_period', 'siphon_fraction')
#: Initial conditions drawn and screened together while building an IC list
IC_BATCH = 256
#: Give up on an IC list when fewer than this share of draws is collision-free ...
MIN_ACCEPTANCE = .01
#: ... after this many draws
ACCEPTANCE_DRAWS = 100000
#: Factor by which the extrapolation median must exceed the interpolation median to count as a robustness gap
ROBUSTNESS_FACTOR = 10.


class InfeasibleRangesError(ConfigError):
    """ The element ranges hardly produce any collision-free initial condition """
    pass


class SweepAbortedError(RuntimeError):
    """ Too many runs of a sweep failed. The partial :class:`~SweepResult` is available as `result` """
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


def _converted(section_name, build):
    """ Call `build`, turning value errors into configuration errors that name the section """
    try:
        return build()
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, SyntaxError) as err:
        raise ConfigError(f'Invalid [{section_name}] configuration: {err}') from err


@dataclasses.dataclass(frozen=True)
class ContextConfig:
    """ Physical context of the runs: truth gravity field, initial condition domain and collision screening """
    field: ZonalGravityField = ZonalGravityField.bennu()
    ranges: ElementRanges = ElementRanges()
    screen_periods: float = 50.
    collision_radius: float = 1.
    steps_per_period: int = 1000
    physical_field: ZonalGravityField = ZonalGravityField.bennu(physical=True)

    def __post_init__(self):
        if not self.screen_periods > 0 or self.collision_radius < 0 or self.steps_per_period < 1:
            raise ConfigError('Collision screening needs positive periods and steps, and a non-negative radius')


    @classmethod
    def from_config(cls, config):
        """ Build from the `[gravity]`, `[ranges]` and `[screen]` sections of a :class:`~Configuration` """
        def field():
            section = config.section('gravity')
            return (ZonalGravityField.from_config(section),
                    ZonalGravityField(float(section['physical_mu']), float(section['physical_radius']),
                                      ZonalGravityField.from_config(section).normalized_zonals))

        def ranges():
            bounds = {name: tuple(config.get_list('ranges', name)) for name in ELEMENT_NAMES}
            for name, bound in bounds.items():
                if len(bound) != 2:
                    raise ConfigError(f'Range {name} needs a lower and an upper bound, got {bound}')
            return ElementRanges(**bounds)

        truth, physical = _converted('gravity', field)
        return cls(truth, _converted('ranges', ranges), config.get('screen', 'periods', float),
                   config.get('screen', 'collision_radius', float), config.get('screen', 'steps_per_period', int),
                   physical)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """ What to train and on how much data

    Attributes:
        framework (`str`): `gp`, `nn`, or `truth` for the truth field as a perfect model
        train_periods (`float`): instantaneous periods of the training trajectory
        extrap_periods (`float`): instantaneous periods of the extrapolation test trajectory
        samples_per_period (`int`): sampling rate
        siphon_fraction (`float`): share of the training trajectory kept for interpolation testing
        sigma_state (`float`): position noise
        sigma_accel (`float`): acceleration noise, in scaled units
        accel_scale (`float` or `None`): acceleration scale, `None` to derive it from the context
        base_seed (`int`): root of all derived seeds
        volume (`str`): name of the data volume preset the periods came from
        gp (:class:`~pygravsafe.gp.GpTrainConfig`): GP training settings
        nn (:class:`~pygravsafe.nn.NnTrainConfig`): network training settings, whose seed is derived per run
    """
    framework: str = 'gp'
    train_periods: float = 100.
    extrap_periods: float = 10.
    samples_per_period: int = 25
    siphon_fraction: float = .05
    sigma_state: float = 0.
    sigma_accel: float = 0.
    accel_scale: float = None
    base_seed: int = 0
    volume: str = 'moderate'
    gp: GpTrainConfig = GpTrainConfig()
    nn: NnTrainConfig = NnTrainConfig()

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise ConfigError(f'Unknown framework {self.framework}, expected one of {", ".join(FRAMEWORKS)}')
        if not self.train_periods > 0 or not self.extrap_periods > 0 or self.samples_per_period < 1:
            raise ConfigError('Trajectory lengths and sampling rate must be positive')
        if not 0 < self.siphon_fraction < 1:
            raise ConfigError(f'Siphon fraction must be in (0, 1), got {self.siphon_fraction}')
        if self.accel_scale is not None and not self.accel_scale > 0:
            raise ConfigError('Acceleration scale must be positive')


    @classmethod
    def from_config(cls, config):
        """ Build from the `[run]`, `[gp]` and `[nn]` sections and the selected data volume preset """
        run = config.section('run')
        volume = run.get('volume', 'moderate')
        if volume not in config.presets():
            raise ConfigError(f'Unknown data volume preset {volume}, expected one of {", ".join(config.presets())}')
        preset = config.section(volume)

        def build():
            scale = run.get('accel_scale', 'auto').strip()
            return cls(run.get('framework', 'gp').strip(),
                       float(run.get('train_periods') or preset['train_periods']),
                       float(run.get('extrap_periods') or preset['extrap_periods']),
                       int(run['samples_per_period']), float(run['siphon_fraction']),
                       float(run['sigma_state']), float(run['sigma_accel']),
                       None if scale == 'auto' else float(scale), int(run['base_seed']), volume,
                       GpTrainConfig.from_config(config.section('gp')),
                       NnTrainConfig.from_config(config.section('nn')))

        return _converted('run', build)


    def resolve_accel_scale(self, ctx):
        """ `float`: the configured acceleration scale, or the automatic one of the context """
        if self.accel_scale is not None:
            return self.accel_scale
        return default_accel_scale(ctx.field, ctx.ranges)


    def noise_spec(self, ctx):
        """ :class:`~pygravsafe.data.NoiseSpec`: the run's observation noise """
        return NoiseSpec(self.sigma_state, self.sigma_accel, self.resolve_accel_scale(ctx))


    def trajectory_specs(self, ctx):
        """ `tuple`: training and extrapolation :class:`~pygravsafe.dynamics.TrajectorySpec` """
        return (TrajectorySpec(self.train_periods, self.samples_per_period, ctx.steps_per_period),
                TrajectorySpec(self.extrap_periods, self.samples_per_period, ctx.steps_per_period))


@dataclasses.dataclass(frozen=True)
class SweepInstance:
    """ One realization of the swept parameters: a framework and values of grid parameters """
    framework: str
    params: tuple
    run: RunConfig

    @property
    def label(self):
        """ `str`: framework and parameter values, e.g. `gp-sigma_state=0.5` """
        return '-'.join([self.framework, *(f'{key}={value:g}' for key, value in self.params)])


@dataclasses.dataclass(frozen=True)
class SweepSpec:
    """ Parameter instances of a sweep, the frozen initial condition list they share, and execution settings """
    instances: tuple
    ic_path: pathlib.Path
    workers: int = 1
    failure_threshold: float = .5

    def __post_init__(self):
        if not self.instances:
            raise ConfigError('A sweep needs at least one parameter instance')
        if not 0 <= self.failure_threshold <= 1:
            raise ConfigError(f'Failure threshold must be in [0, 1], got {self.failure_threshold}')


    @classmethod
    def from_config(cls, config, ic_path, workers=None):
        """ Frameworks of `[sweep]` crossed with the value lists of `[sweep.grid]`, applied on top of the `[run]` settings

        Args:
            config (:class:`~pygravsafe.config.Configuration`): the configuration
            ic_path (`str` or path-like): initial condition list written by :func:`~generate_ic_list`
            workers (`int`): overrides `[sweep] workers`, 0 for all available cores
        """
        base = RunConfig.from_config(config)
        frameworks = config.get_list('sweep', 'frameworks', str)
        grid = {key: config.get_list('sweep.grid', key) for key in config.section('sweep.grid')}
        unknown = set(grid) - set(GRID_PARAMETERS)
        if unknown:
            raise ConfigError(f'Cannot sweep over {", ".join(sorted(unknown))}, expected {", ".join(GRID_PARAMETERS)}')

        instances = []
        for framework in frameworks:
            for values in itertools.product(*grid.values()):
                params = tuple(zip(grid, values))
                changes = {key: int(value) if key == 'samples_per_period' else value for key, value in params}
                run = _converted('sweep', lambda: dataclasses.replace(base, framework=framework, **changes))
                instances.append(SweepInstance(framework, params, run))

        workers = config.get('sweep', 'workers', int) if workers is None else workers
        return cls(tuple(instances), pathlib.Path(ic_path), workers or os.cpu_count() or 1,
                   config.get('sweep', 'failure_threshold', float))


@dataclasses.dataclass(eq=False)
class SweepResult:
    """ Reports of every (instance, initial condition) run of a sweep, with what identifies the sweep

    Attributes:
        instances (`tuple`): the :class:`~SweepInstance` list
        ic_count (`int`): number of initial condition pairs
        reports (`dict`): :class:`~pygravsafe.characterization.CharacterizationReport` by (instance, IC) index pair
        failures (`dict`): error messages of failed runs by (instance, IC) index pair
        ic_digest (`str`): SHA-256 of the initial condition file
        config_echo (`dict`): every effective configuration value
        config_digest (`str`): SHA-256 of the configuration echo
        timings (`dict`): wall-clock durations of run stages by run label
    """
    instances: tuple
    ic_count: int
    reports: dict = dataclasses.field(default_factory=dict)
    failures: dict = dataclasses.field(default_factory=dict)
    ic_digest: str = ''
    config_echo: dict = dataclasses.field(default_factory=dict)
    config_digest: str = ''
    timings: dict = dataclasses.field(default_factory=dict)

    @property
    def run_count(self):
        """ `int`: number of runs the sweep consists of """
        return len(self.instances) * self.ic_count


    def instance_reports(self, index):
        """ `list`: successful reports of one instance, in initial condition order """
        return [self.reports[index, k] for k in range(self.ic_count) if (index, k) in self.reports]


    def instance_rows(self):
        """ Aggregate table: per instance, median and interquartile range of the per-run medians of each set

        Returns:
            `list` of `dict`: one row per instance
        """
        rows = []
        for index, instance in enumerate(self.instances):
            reports = self.instance_reports(index)
            row = {'instance': index, 'label': instance.label, 'framework': instance.framework,
                   **dict(instance.params), 'runs': len(reports),
                   'failed': sum((index, k) in self.failures for k in range(self.ic_count)),
                   'flagged': sum(report.instability_flag for report in reports)}
            for label in SET_LABELS:
                medians = [report.median(label) for report in reports]
                q1, median, q3 = np.quantile(medians, [.25, .5, .75]) if medians else (np.nan,) * 3
                row.update({f'{label}_median': float(median), f'{label}_q1': float(q1), f'{label}_q3': float(q3)})
            gaps = [report.median('extrap_test') >= ROBUSTNESS_FACTOR * report.median('interp_test')
                    for report in reports]
            row['extrap_10x_interp_fraction'] = float(np.mean(gaps)) if gaps else np.nan
            rows.append(row)
        return rows


    def fits(self):
        """ Per instance, log-log fits of interpolation and extrapolation run medians against training run medians

        Returns:
            `dict`: instance label to `interp_vs_train` and `extrap_vs_train`
            :class:`~pygravsafe.characterization.CorrelationFit` (`None` with too few usable runs)
        """
        fits = {}
        for index, instance in enumerate(self.instances):
            reports = self.instance_reports(index)
            train = [report.median('train') for report in reports]
            fits[instance.label] = {}
            for label in ('interp_test', 'extrap_test'):
                try:
                    fit = loglog_fit(train, [report.median(label) for report in reports])
                except (EmptySetError, ValueError) as err:
                    logger.warning('No %s fit for %s: %s', label, instance.label, err)
                    fit = None
                fits[instance.label][f'{label.split("_")[0]}_vs_train'] = fit
        return fits


def _ic_from_row(row, prefix):
    return KeplerianElements(*(float(row[f'{prefix}{name}']) for name in ELEMENT_NAMES))


def write_ic_list(path, pairs, seed):
    """ Write initial condition pairs as CSV, after a `# seed:` comment line; angles in radians """
    with open(path, 'w', newline='') as f:
        f.write(f'# seed: {seed}\n')
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['ic_index', *(f'train_{name}' for name in ELEMENT_NAMES),
                         *(f'extrap_{name}' for name in ELEMENT_NAMES)])
        for index, (train, extrap) in enumerate(pairs):
            writer.writerow([index, *(repr(float(v)) for v in train.as_tuple()),
                             *(repr(float(v)) for v in extrap.as_tuple())])


def read_ic_list(path):
    """ Read initial condition pairs written by :func:`~write_ic_list`

    Returns:
        `tuple`: the `list` of (training, extrapolation) :class:`~pygravsafe.dynamics.KeplerianElements` pairs, and
        the recorded seed (or `None`)
    """
    seed = None
    with open(path, newline='') as f:
        lines = f.read().splitlines()
    if lines and lines[0].startswith('#'):
        seed = int(lines.pop(0).split(':', 1)[1])
    try:
        return [(_ic_from_row(row, 'train_'), _ic_from_row(row, 'extrap_')) for row in csv.DictReader(lines)], seed
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f'Malformed initial condition file {path}: {err}') from err


def file_digest(path):
    """ `str`: SHA-256 of a file's contents """
    return hashlib.sha256(pathlib.Path(path).read_bytes()).hexdigest()


def generate_ic_list(ctx, count, seed, out=None, screening_out=None):
    """ Rejection-sample collision-free initial conditions, pairing consecutive accepted draws

    Args:
        ctx (:class:`~ContextConfig`): the element ranges, truth field and screening settings
        count (`int`): number of (training, extrapolation) pairs
        seed (`int`): seed of the draws
        out (path-like): if given, where to write the pairs with :func:`~write_ic_list`
        screening_out (path-like): if given, where to write every screened draw with its periapsis and verdict

    Returns:
        `list`: the pairs of :class:`~pygravsafe.dynamics.KeplerianElements`

    Raises:
        :class:`~InfeasibleRangesError`: fewer than 1% of the first 10⁵ draws are collision-free
    """
    if count < 1:
        raise ConfigError(f'Need at least one initial condition pair, got {count}')

    rng = np.random.default_rng(seed)
    free, screened, draws = [], [], 0
    while len(free) < 2 * count:
        batch = sample_initial_conditions(ctx.ranges, IC_BATCH, rng)
        states = [elements_to_state(ic, ctx.field.mu) for ic in batch]
        colliding = screen_collisions(ctx.field, states, ctx.screen_periods, ctx.collision_radius,
                                      ctx.steps_per_period)
        draws += len(batch)
        free.extend(ic for ic, hit in zip(batch, colliding) if not hit)
        screened.extend(zip(batch, colliding))
        logger.info('Screened %d draws, %d collision-free', draws, len(free))
        if draws >= ACCEPTANCE_DRAWS and len(free) < MIN_ACCEPTANCE * draws:
            raise InfeasibleRangesError(f'Only {len(free)} of {draws} initial conditions are collision-free')

    pairs = [(free[2 * k], free[2 * k + 1]) for k in range(count)]
    if out is not None:
        write_ic_list(out, pairs, seed)
    if screening_out is not None:
        with open(screening_out, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['draw', *ELEMENT_NAMES, 'periapsis', 'colliding'])
            for index, (ic, hit) in enumerate(screened):
                writer.writerow([index, *map(repr, ic.as_tuple()), repr(ic.periapsis), int(hit)])
    return pairs


def run_seeds(base_seed, instance_index, ic_index):
    """ `dict`: seed of each random stream of a run, derived from its indices only """
    return {stream: derive_seed(base_seed, instance_index, ic_index, stream) for stream in STREAMS}


def run_single(run, ctx, ic_pair, instance_index=0, ic_index=0, out_dir=None, provenance=None, screen=False,
               timings=None):
    """ Build the datasets of one initial condition pair, train the framework and characterize the model

    Args:
        run (:class:`~RunConfig`): what to train
        ctx (:class:`~ContextConfig`): physical context
        ic_pair (`tuple`): collision-free training and extrapolation initial conditions
        instance_index (`int`): index of the parameter instance, for seed derivation
        ic_index (`int`): index of the initial condition pair, for seed derivation
        out_dir (path-like): if given, where to write the datasets and the model
        provenance (`dict`): extra identification copied into the report
        screen (`bool`): whether to screen the initial conditions for collisions again
        timings (`dict`): if given, filled with wall-clock durations of the run stages

    Returns:
        `tuple`: the trained model and its :class:`~pygravsafe.characterization.CharacterizationReport`
    """
    seeds = run_seeds(run.base_seed, instance_index, ic_index)
    noise = run.noise_spec(ctx)
    spec_train, spec_extrap = run.trajectory_specs(ctx)
    durations = {} if timings is None else timings

    start = time.perf_counter()
    bundle = build_bundle(ctx.field, *ic_pair, spec_train, spec_extrap, noise, seeds, run.siphon_fraction,
                          ctx.screen_periods, ctx.collision_radius, screen)
    durations['data_generation'] = time.perf_counter() - start

    start = time.perf_counter()
    if run.framework == 'gp':
        model = train_gp(bundle.train, run.gp)
    elif run.framework == 'nn':
        model = train_nn(bundle.train, dataclasses.replace(run.nn, seed=seeds['model']))
    else:
        model = TruthRegressor(ctx.field, noise.accel_scale)
    durations['training'] = time.perf_counter() - start

    start = time.perf_counter()
    report = characterize(model, bundle, {
        **(provenance or {}),
        'framework': run.framework,
        'instance_index': instance_index,
        'ic_index': ic_index,
        'seeds': seeds,
        'noise': dataclasses.asdict(noise),
        'accel_scale_source': 'auto' if run.accel_scale is None else 'config',
        'volume': run.volume,
        'sizes': {label: len(getattr(bundle, label)) for label in SET_LABELS},
    })
    durations['evaluation'] = time.perf_counter() - start
    logger.info('Run %s #%d/%d: data %.1fs, training %.1fs, evaluation %.1fs, safety gap %s, robustness gap %s',
                run.framework, instance_index, ic_index, durations['data_generation'], durations['training'],
                durations['evaluation'], report.safety_gap, report.robustness_gap)

    if out_dir is not None:
        out_dir = pathlib.Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        data_ref = {label: {'path': f'{label}.csv', 'sha256': save_dataset(getattr(bundle, label),
                                                                          out_dir / f'{label}.csv')}
                    for label in SET_LABELS}
        if run.framework == 'gp':
            payload = model.to_dict(data_ref['train'])
        elif run.framework == 'nn':
            payload = model.to_dict()
        else:
            payload = {'framework': 'truth', 'accel_scale': noise.accel_scale}
        _write_json(out_dir / 'model.json', payload)
    return model, report


def _write_json(path, payload):
    pathlib.Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n')


def run_label(instance_index, ic_index):
    """ `str`: directory name of a sweep run """
    return f'{instance_index:03d}-{ic_index:03d}'


def write_report(report, run_dir, label=''):
    """ Write a run's report JSON and per-sample error CSV into `run_dir` """
    run_dir = pathlib.Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_json(run_dir / 'report.json', report.to_dict())
    report.write_samples(run_dir / 'samples.csv', label)


def _sweep_job(instance, ctx, ic_pair, instance_index, ic_index, provenance, out_dir):
    """ One sweep run, with failures returned instead of raised so that sibling runs are unaffected """
    timings = {}
    run_dir = None if out_dir is None else pathlib.Path(out_dir) / 'runs' / run_label(instance_index, ic_index)
    try:
        _, report = run_single(instance.run, ctx, ic_pair, instance_index, ic_index, run_dir,
                               {**provenance, 'instance': instance.label}, timings=timings)
    except Exception as err:
        return instance_index, ic_index, None, f'{type(err).__name__}: {err}', timings
    return instance_index, ic_index, report, None, timings


def run_sweep(spec, ctx, config=None, out_dir=None):
    """ Run every parameter instance on every initial condition pair, in parallel processes if `spec.workers` > 1

    Args:
        spec (:class:`~SweepSpec`): instances, initial condition file and execution settings
        ctx (:class:`~ContextConfig`): physical context
        config (:class:`~pygravsafe.config.Configuration`): configuration to echo into the result
        out_dir (path-like): if given, runs write their datasets and models under `out_dir/runs/`, and partial
                             outputs are emitted there when the sweep aborts

    Returns:
        :class:`~SweepResult`: the reports of successful runs and the errors of failed ones

    Raises:
        :class:`~SweepAbortedError`: more than `spec.failure_threshold` of the runs failed
    """
    pairs, _ = read_ic_list(spec.ic_path)
    if not pairs:
        raise ConfigError(f'No initial conditions in {spec.ic_path}')
    result = SweepResult(spec.instances, len(pairs), ic_digest=file_digest(spec.ic_path),
                         config_echo=config.echo() if config is not None else {},
                         config_digest=config.digest() if config is not None else '')
    provenance = {'config_digest': result.config_digest, 'ic_digest': result.ic_digest}
    jobs = [(instance, ctx, pair, i, k, provenance, out_dir)
            for i, instance in enumerate(spec.instances) for k, pair in enumerate(pairs)]
    allowed_failures = spec.failure_threshold * len(jobs)

    def collect(outcome):
        i, k, report, error, timings = outcome
        result.timings[run_label(i, k)] = timings
        if error is None:
            result.reports[i, k] = report
            return False
        logger.warning('Run %s of %s failed: %s', run_label(i, k), spec.instances[i].label, error)
        result.failures[i, k] = error
        return len(result.failures) > allowed_failures

    aborted = False
    if spec.workers <= 1:
        for job in jobs:
            if collect(_sweep_job(*job)):
                aborted = True
                break
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=spec.workers) as executor:
            futures = {executor.submit(_sweep_job, *job): job for job in jobs}
            for future in concurrent.futures.as_completed(futures):
                try:
                    outcome = future.result()
                except Exception as err:
                    _, _, _, i, k, _, _ = futures[future]
                    outcome = (i, k, None, f'{type(err).__name__}: {err}', {})
                if collect(outcome):
                    aborted = True
                    executor.shutdown(wait=False, cancel_futures=True)
                    break

    if aborted:
        if out_dir is not None:
            emit_outputs(result, out_dir)
        raise SweepAbortedError(f'{len(result.failures)} of {len(jobs)} runs failed, sweep aborted', result)
    return result


def emit_outputs(result, out_dir, timings=False):
    """ Write the aggregate table, fits, per-run reports and the manifest of a sweep

    Files: `summary.csv` (one row per instance), `fits.json`, `runs/<instance>-<ic>/report.json` and `samples.csv`,
    `manifest.json` (configuration echo and digests, seeds and status of every run), and `timings.json` if asked.
    Everything but the timings is a pure function of the result.

    Args:
        result (:class:`~SweepResult`): the sweep result
        out_dir (path-like): destination directory, created if needed
        timings (`bool`): whether to write the wall-clock durations
    """
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for (i, k), report in sorted(result.reports.items()):
        write_report(report, out_dir / 'runs' / run_label(i, k), f'{result.instances[i].label}/{k}')

    rows = result.instance_rows()
    columns = list(dict.fromkeys(key for row in rows for key in row))
    with open(out_dir / 'summary.csv', 'w', newline='') as f:
        writer = csv.DictWriter(f, columns, lineterminator='\n')
        writer.writeheader()
        writer.writerows({key: repr(value) if isinstance(value, float) else value for key, value in row.items()}
                         for row in rows)

    _write_json(out_dir / 'fits.json', {label: {name: None if fit is None else dataclasses.asdict(fit)
                                                for name, fit in fits.items()}
                                        for label, fits in result.fits().items()})

    base_seed = result.instances[0].run.base_seed
    _write_json(out_dir / 'manifest.json', {
        'config': result.config_echo,
        'config_digest': result.config_digest,
        'ic_digest': result.ic_digest,
        'ic_count': result.ic_count,
        'instances': [{'index': i, 'label': instance.label, 'framework': instance.framework,
                       'params': dict(instance.params)} for i, instance in enumerate(result.instances)],
        'runs': [{'label': run_label(i, k), 'instance': i, 'ic_index': k,
                  'seeds': run_seeds(instance.run.base_seed, i, k),
                  'status': 'ok' if (i, k) in result.reports else 'failed' if (i, k) in result.failures else 'skipped',
                  'error': result.failures.get((i, k))}
                 for i, instance in enumerate(result.instances) for k in range(result.ic_count)],
        'base_seed': base_seed,
    })

    if timings:
        _write_json(out_dir / 'timings.json', result.timings)


def load_run_rows(in_dir):
    """ One summary row per run found in a run or sweep output directory

    Args:
        in_dir (path-like): a directory holding `report.json`, or a sweep directory holding `runs/*/report.json`

    Returns:
        `list` of `dict`: run label, framework, instance, per-set medians, gaps and instability flag
    """
    in_dir = pathlib.Path(in_dir)
    paths = [in_dir / 'report.json'] if (in_dir / 'report.json').exists() else sorted(in_dir.glob('runs/*/report.json'))
    if not paths:
        raise FileNotFoundError(f'No report.json under {in_dir}')

    rows = []
    for path in paths:
        report = json.loads(path.read_text())
        provenance = report.get('provenance', {})
        rows.append({
            'run': path.parent.name,
            'instance': provenance.get('instance', ''),
            'framework': provenance.get('framework', ''),
            'ic_index': provenance.get('ic_index', ''),
            **{f'{label}_median': report['summaries'][label]['median'] for label in SET_LABELS},
            'safety_gap': report['safety_gap'],
            'robustness_gap': report['robustness_gap'],
            'instability_flag': bool(report.get('diagnostics', {}).get('instability_flag', False)),
        })
    return rows


def influence_table(config):
    """ Influence radii of each configured zonal degree over evenly spaced colatitudes, on the physical field

    Returns:
        `list`: rows of (degree, colatitude in degrees, radius in physical length units or `None`)
    """
    ctx = ContextConfig.from_config(config)
    degrees = config.get_list('influence', 'degrees', int)
    points = config.get('influence', 'points', int)
    colatitudes = np.linspace(0., np.pi, points)
    try:
        rows = influence_contour(ctx.physical_field, degrees, colatitudes, config.get('influence', 'fraction', float),
                                 config.get('influence', 'hill_radius', float))
    except (KeyError, DomainError) as err:
        raise ConfigError(f'Invalid [influence] configuration: {err}') from err
    return [(n, float(np.degrees(theta)), radius) for n, theta, radius in rows]

