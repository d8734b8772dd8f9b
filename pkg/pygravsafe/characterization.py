""" Fractional errors of learned models on the training, interpolation and extrapolation sets, and their statistics """
import csv
import math
import logging
import dataclasses

import numpy as np
from scipy import stats

from pygravsafe.gravity import acceleration

logger = logging.getLogger(__name__)

SET_LABELS = ('train', 'interp_test', 'extrap_test')
#: Fractional errors above this are excluded from summaries, along with non-finite ones
EXCLUSION_THRESHOLD = 1e15
#: Statistic of a run's per-sample errors that represents the run in correlation fits
RUN_STATISTIC = 'median'
#: Serialized value of a gap whose reference median is zero
INFINITE_GAP = 'inf'


class EmptySetError(ValueError):
    """ No usable values to compute statistics from """
    pass


class TruthRegressor:
    """ The truth gravity field, scaled like the datasets, exposed as a learned model """
    def __init__(self, field, accel_scale=1.):
        self.field = field
        self.accel_scale = accel_scale
        self.diagnostics = {'instability_flag': False}


    def predict_acceleration(self, positions):
        """ Scaled truth accelerations """
        return self.accel_scale * acceleration(self.field, np.asarray(positions, dtype=float).reshape(-1, 3))


def fractional_error(a_true, a_pred):
    """ ε = ‖a_true − a_pred‖ / ‖a_true‖, NaN where the true acceleration is zero

    Args:
        a_true (array): a 3-vector or (N, 3) true accelerations
        a_pred (array): predictions with the same shape

    Returns:
        `float` or `numpy.ndarray`: the fractional error(s)
    """
    a_true, a_pred = np.asarray(a_true, dtype=float), np.asarray(a_pred, dtype=float)
    reference = np.linalg.norm(a_true, axis=-1)
    with np.errstate(divide='ignore', invalid='ignore'):
        epsilon = np.where(reference > 0, np.linalg.norm(a_true - a_pred, axis=-1) / reference, np.nan)
    return float(epsilon) if epsilon.ndim == 0 else epsilon


@dataclasses.dataclass(frozen=True, eq=False)
class FractionalErrorSeries:
    """ Per-sample fractional errors of one set, with the radius of each sample """
    label: str
    epsilon: np.ndarray
    radii: np.ndarray
    excluded_count: int = 0

    def __len__(self):
        return len(self.epsilon)


@dataclasses.dataclass(frozen=True)
class ErrorSummary:
    """ Order statistics of a series, linearly interpolated between ranks """
    median: float
    q1: float
    q3: float
    min: float
    max: float
    count: int
    excluded_count: int = 0


@dataclasses.dataclass(frozen=True)
class CorrelationFit:
    """ Least squares line of log₁₀(test error) against log₁₀(train error) """
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    excluded_count: int = 0


@dataclasses.dataclass(frozen=True, eq=False)
class CharacterizationReport:
    """ Error series and summaries of the three sets, with the safety and robustness gaps

    Attributes:
        series (`dict`): :class:`~FractionalErrorSeries` by set label
        summaries (`dict`): :class:`~ErrorSummary` by set label
        safety_gap (`float` or `str`): log₁₀ of the interpolation over the training median
        robustness_gap (`float` or `str`): log₁₀ of the extrapolation over the training median
        diagnostics (`dict`): the model's training diagnostics
        provenance (`dict`): configuration digest, seeds and anything else identifying the run
    """
    series: dict
    summaries: dict
    safety_gap: object
    robustness_gap: object
    diagnostics: dict = dataclasses.field(default_factory=dict)
    provenance: dict = dataclasses.field(default_factory=dict)

    @property
    def instability_flag(self):
        """ `bool`: whether the model reported numerical trouble during training """
        return bool(self.diagnostics.get('instability_flag', False))


    def median(self, label):
        """ `float`: median fractional error of a set """
        return self.summaries[label].median


    def to_dict(self):
        """ JSON-serializable report, without the per-sample series """
        return {
            'summaries': {label: dataclasses.asdict(summary) for label, summary in self.summaries.items()},
            'safety_gap': self.safety_gap,
            'robustness_gap': self.robustness_gap,
            'run_statistic': RUN_STATISTIC,
            'diagnostics': self.diagnostics,
            'provenance': self.provenance,
        }


    def write_samples(self, path, run_label=''):
        """ Write the per-sample series as CSV with columns set, label, radius, epsilon

        Args:
            path (`str` or path-like): output file
            run_label (`str`): identifies the run in the `label` column, for concatenating files of a sweep
        """
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['set', 'label', 'radius', 'epsilon'])
            for name in SET_LABELS:
                for radius, epsilon in zip(self.series[name].radii, self.series[name].epsilon):
                    writer.writerow([name, run_label, repr(float(radius)), repr(float(epsilon))])


def evaluate_set(model, ds, label):
    """ Fractional errors of a model's predictions at the true positions against the true accelerations

    Args:
        model: any object with a `predict_acceleration(positions)` method
        ds (:class:`~pygravsafe.data.SampledDataset`): the dataset, of which only truth values are used
        label (`str`): name of the set

    Returns:
        :class:`~FractionalErrorSeries`: errors, without non-finite values or values above the exclusion threshold
    """
    predictions = model.predict_acceleration(ds.truth_inputs)
    epsilon = fractional_error(ds.truth_targets, predictions).reshape(-1)
    keep = np.isfinite(epsilon) & (epsilon <= EXCLUSION_THRESHOLD)
    excluded = int(np.count_nonzero(~keep))
    if excluded:
        logger.warning('Excluded %d non-finite or huge fractional errors from the %s set', excluded, label)
    return FractionalErrorSeries(label, epsilon[keep], np.linalg.norm(ds.truth_inputs, axis=1)[keep], excluded)


def summarize(series):
    """ Median, quartiles and extremes of a series

    Raises:
        :class:`~EmptySetError`: the series has no values
    """
    if not len(series):
        raise EmptySetError(f'No fractional errors to summarize in the {series.label} set')
    low, q1, median, q3, high = np.quantile(series.epsilon, [0., .25, .5, .75, 1.])
    return ErrorSummary(float(median), float(q1), float(q3), float(low), float(high), len(series),
                        series.excluded_count)


def loglog_fit(train_errors, test_errors):
    """ Ordinary least squares of log₁₀(test) on log₁₀(train) over paired per-run errors

    Pairs with a non-positive or non-finite value are excluded.

    Returns:
        :class:`~CorrelationFit`: slope, intercept and R², clamped to [0, 1]

    Raises:
        :class:`~EmptySetError`: fewer than 3 usable pairs
    """
    train_errors = np.asarray(train_errors, dtype=float)
    test_errors = np.asarray(test_errors, dtype=float)
    if train_errors.shape != test_errors.shape:
        raise ValueError('Train and test error lists must have equal lengths')

    keep = (train_errors > 0) & (test_errors > 0) & np.isfinite(train_errors) & np.isfinite(test_errors)
    excluded = int(np.count_nonzero(~keep))
    if excluded:
        logger.warning('Excluded %d non-positive error pairs from the log-log fit', excluded)
    if np.count_nonzero(keep) < 3:
        raise EmptySetError(f'Need at least 3 positive error pairs to fit, got {np.count_nonzero(keep)}')

    fit = stats.linregress(np.log10(train_errors[keep]), np.log10(test_errors[keep]))
    r_squared = min(max(fit.rvalue ** 2, 0.), 1.) if np.isfinite(fit.rvalue) else 0.
    return CorrelationFit(float(fit.slope), float(fit.intercept), float(r_squared), int(np.count_nonzero(keep)),
                          excluded)


def log_gap(test_median, train_median):
    """ log₁₀(test / train), 0 when both medians are 0, :data:`~INFINITE_GAP` when only one is """
    if test_median == 0 and train_median == 0:
        return 0.
    if test_median == 0 or train_median == 0:
        return INFINITE_GAP
    return math.log10(test_median) - math.log10(train_median)


def characterize(model, bundle, provenance=None):
    """ Evaluate a model on the training, interpolation and extrapolation sets of a bundle

    Args:
        model: the learned model, with `predict_acceleration` and `diagnostics`
        bundle (:class:`~pygravsafe.data.DatasetBundle`): the data the model was trained on, with its test sets
        provenance (`dict`): identification of the run, copied into the report

    Returns:
        :class:`~CharacterizationReport`: the report
    """
    series = {label: evaluate_set(model, getattr(bundle, label), label) for label in SET_LABELS}
    summaries = {label: summarize(values) for label, values in series.items()}
    train = summaries['train'].median
    return CharacterizationReport(series, summaries, log_gap(summaries['interp_test'].median, train),
                                  log_gap(summaries['extrap_test'].median, train),
                                  dict(getattr(model, 'diagnostics', {})), dict(provenance or {}))
