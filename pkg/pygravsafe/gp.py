""" Exact Gaussian process regression of accelerations on positions

One independent single-output GP per acceleration component, each with a constant mean and an ARD radial basis
function kernel, whose hyperparameters maximize the exact marginal log likelihood by Adam ascent.
"""
import math
import logging
import dataclasses

import numpy as np
from scipy.linalg import cholesky, cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from pygravsafe.optim import Adam
from pygravsafe.config import ConfigError

logger = logging.getLogger(__name__)

#: Largest diagonal jitter tried, relative to the signal variance, before giving up on a factorization
MAX_RELATIVE_JITTER = 1e-2
_LOG_2PI = math.log(2 * math.pi)
# exp() of log-hyperparameters beyond this overflows
_MAX_LOG = 700.


class GpInstabilityError(np.linalg.LinAlgError):
    """ The kernel matrix could not be factorized, even with the largest jitter """
    pass


@dataclasses.dataclass(frozen=True)
class GpHyperparams:
    """ Hyperparameters of one single-output GP, stored in log space so that positivity is structural

    Attributes:
        log_lengthscales (`tuple`): log ℓ_d, one per input dimension
        log_signal_variance (`float`): log σ_f²
        log_noise_variance (`float`): log σ_n²
        constant_mean (`float`): prior mean of the output
    """
    log_lengthscales: tuple = (0., 0., 0.)
    log_signal_variance: float = 0.
    log_noise_variance: float = math.log(1e-2)
    constant_mean: float = 0.

    def __post_init__(self):
        object.__setattr__(self, 'log_lengthscales', tuple(float(value) for value in self.log_lengthscales))
        if len(self.log_lengthscales) != 3:
            raise ValueError(f'Expected 3 lengthscales, got {len(self.log_lengthscales)}')
        vector = self.as_vector()
        if not np.all(np.isfinite(vector)) or np.any(np.abs(vector[:5]) >= _MAX_LOG):
            raise ValueError(f'Hyperparameters out of representable range: {vector}')


    @property
    def lengthscales(self):
        """ `numpy.ndarray`: ℓ_d """
        return np.exp(self.log_lengthscales)


    @property
    def signal_variance(self):
        """ `float`: σ_f² """
        return math.exp(self.log_signal_variance)


    @property
    def noise_variance(self):
        """ `float`: σ_n² """
        return math.exp(self.log_noise_variance)


    def as_vector(self):
        """ `numpy.ndarray`: (log ℓ_1, log ℓ_2, log ℓ_3, log σ_f², log σ_n², mean), the optimized parameters """
        return np.array([*self.log_lengthscales, self.log_signal_variance, self.log_noise_variance,
                         self.constant_mean])


    @classmethod
    def from_vector(cls, vector):
        """ Inverse of :meth:`~as_vector` """
        values = [float(value) for value in vector]
        return cls(tuple(values[:3]), *values[3:])


@dataclasses.dataclass(frozen=True)
class GpTrainConfig:
    """ Training settings: fixed epoch count and learning rate, relative jitter and noise variance floor """
    epochs: int = 500
    learning_rate: float = .01
    jitter: float = 1e-6
    noise_floor: float = 1e-6
    max_samples: int = 4000

    def __post_init__(self):
        if self.epochs < 0 or not self.learning_rate > 0:
            raise ConfigError('GP training needs a non-negative epoch count and a positive learning rate')
        if not 0 < self.jitter <= MAX_RELATIVE_JITTER or not self.noise_floor > 0:
            raise ConfigError(f'GP jitter must be in (0, {MAX_RELATIVE_JITTER}] and the noise floor positive')


    @classmethod
    def from_config(cls, section):
        """ Build from the `[gp]` configuration section mapping """
        return cls(int(section.get('epochs', cls.epochs)), float(section.get('learning_rate', cls.learning_rate)),
                   float(section.get('jitter', cls.jitter)), float(section.get('noise_floor', cls.noise_floor)),
                   int(section.get('max_samples', cls.max_samples)))


def kernel_matrix(x1, x2, hp):
    """ RBF kernel matrix σ_f² exp(−½ Σ_d (x1_d − x2_d)² / ℓ_d²) between two sets of points

    Args:
        x1 (array): (N, 3) points
        x2 (array): (M, 3) points
        hp (:class:`~GpHyperparams`): kernel hyperparameters

    Returns:
        `numpy.ndarray`: the (N, M) kernel matrix
    """
    scale = hp.lengthscales
    x1 = np.asarray(x1, dtype=float).reshape(-1, 3)
    x2 = np.asarray(x2, dtype=float).reshape(-1, 3)
    return hp.signal_variance * np.exp(-.5 * cdist(x1 / scale, x2 / scale, metric='sqeuclidean'))


def rbf_kernel(x1, x2, hp):
    """ Kernel value between two points """
    return float(kernel_matrix(x1, x2, hp)[0, 0])


def _factorize(kernel, hp, jitter):
    """ Lower Cholesky factor of K + σ_n² I + j I, escalating the jitter j tenfold from `jitter` · σ_f²

    Returns:
        `tuple`: the factor and the absolute jitter that was used
    """
    eye = np.eye(len(kernel))
    noisy = kernel + hp.noise_variance * eye
    level, ceiling = jitter * hp.signal_variance, MAX_RELATIVE_JITTER * hp.signal_variance
    while True:
        try:
            return cholesky(noisy + level * eye, lower=True), level
        except (np.linalg.LinAlgError, ValueError):
            if level >= ceiling * (1 - 1e-9):
                raise GpInstabilityError(f'Kernel matrix not positive definite with jitter {level:.3g}') from None
            level = min(10 * level, ceiling)


def mll_and_gradient(hp, inputs, targets, jitter=1e-6, gradient=True):
    """ Exact marginal log likelihood of one output, and its gradient with respect to :meth:`GpHyperparams.as_vector`

    The constant mean is subtracted from the targets here. The gradient of each kernel parameter is
    ½ tr((ααᵀ − K̃⁻¹) ∂K̃/∂θ) with α = K̃⁻¹ y, and that of the mean is Σ α.

    Args:
        hp (:class:`~GpHyperparams`): hyperparameters
        inputs (array): (N, 3) training positions
        targets (array): (N,) one output component
        jitter (`float`): initial relative jitter
        gradient (`bool`): whether to compute the gradient

    Returns:
        `tuple`: the log likelihood and its gradient (or `None`)

    Raises:
        :class:`~GpInstabilityError`: the jitter escalation failed
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 3)
    residual = np.asarray(targets, dtype=float) - hp.constant_mean
    kernel = kernel_matrix(inputs, inputs, hp)
    factor, level = _factorize(kernel, hp, jitter)
    alpha = cho_solve((factor, True), residual)

    value = -.5 * residual @ alpha - np.log(np.diag(factor)).sum() - .5 * len(residual) * _LOG_2PI
    if not gradient:
        return float(value), None

    inner = np.outer(alpha, alpha) - cho_solve((factor, True), np.eye(len(residual)))
    grad = np.empty(6)
    for d, lengthscale in enumerate(hp.lengthscales):
        column = inputs[:, d:d + 1]
        grad[d] = .5 * np.einsum('ij,ij->', inner, kernel * cdist(column, column, metric='sqeuclidean')) \
            / lengthscale ** 2
    grad[3] = .5 * (np.einsum('ij,ij->', inner, kernel) + level * np.trace(inner))
    grad[4] = .5 * hp.noise_variance * np.trace(inner)
    grad[5] = alpha.sum()
    return float(value), grad


def marginal_log_likelihood(hp, inputs, targets, jitter=1e-6):
    """ Exact marginal log likelihood −½ yᵀK̃⁻¹y − ½ log det K̃ − (N/2) log 2π of one output component

    Args:
        hp (:class:`~GpHyperparams`): hyperparameters, whose constant mean is subtracted from `targets`
        inputs (array): (N, 3) training positions
        targets (array): (N,) one output component
        jitter (`float`): initial relative jitter

    Returns:
        `float`: the log likelihood
    """
    return mll_and_gradient(hp, inputs, targets, jitter, gradient=False)[0]


@dataclasses.dataclass(frozen=True, eq=False)
class TrainedGp:
    """ Three conditioned single-output GPs, ready for prediction

    Attributes:
        hyperparams (`tuple`): one :class:`~GpHyperparams` per output component
        inputs (`numpy.ndarray`): (N, 3) retained training inputs
        targets (`numpy.ndarray`): (N, 3) retained training targets
        factors (`tuple`): lower Cholesky factors of each regularized kernel matrix
        weights (`tuple`): K̃⁻¹ (y − mean) for each output
        jitter (`float`): initial relative jitter used to condition
        diagnostics (`dict`): training diagnostics, including `instability_flag`
    """
    hyperparams: tuple
    inputs: np.ndarray
    targets: np.ndarray
    factors: tuple
    weights: tuple
    jitter: float = 1e-6
    diagnostics: dict = dataclasses.field(default_factory=dict)

    def predict_acceleration(self, positions):
        """ Posterior mean accelerations at `positions` """
        return predict_gp(self, positions)[0]


    def to_dict(self, data_ref=None):
        """ JSON-serializable description: hyperparameters, training data reference and diagnostics

        Args:
            data_ref (`dict`): where the training data is stored, e.g. `path` and `sha256` keys
        """
        return {
            'framework': 'gp',
            'hyperparams': [dataclasses.asdict(hp) for hp in self.hyperparams],
            'constant_means': [hp.constant_mean for hp in self.hyperparams],
            'jitter': self.jitter,
            'training_data': data_ref,
            'diagnostics': self.diagnostics,
        }


    @classmethod
    def from_dict(cls, payload, inputs, targets):
        """ Rebuild a model from :meth:`~to_dict` output and the referenced training data """
        hyperparams = [GpHyperparams(**hp) for hp in payload['hyperparams']]
        model = condition_gp(inputs, targets, hyperparams, payload['jitter'], strict=False)
        return dataclasses.replace(model, diagnostics=dict(payload.get('diagnostics', {})))


def condition_gp(inputs, targets, hyperparams, jitter=1e-6, strict=True):
    """ Condition three GPs with fixed hyperparameters on training data, without any training

    Args:
        inputs (array): (N, 3) positions
        targets (array): (N, 3) accelerations
        hyperparams (`list`): three :class:`~GpHyperparams`
        jitter (`float`): initial relative jitter
        strict (`bool`): if `False`, an output whose kernel matrix cannot be factorized falls back to its prior,
                         listed in the `prior_only` diagnostic with `instability_flag` set

    Returns:
        :class:`~TrainedGp`: the conditioned model

    Raises:
        :class:`~GpInstabilityError`: a kernel matrix could not be factorized and `strict` is set
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 3)
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    factors, weights, levels, prior_only = [], [], [], []
    for d, (hp, component) in enumerate(zip(hyperparams, targets.T)):
        try:
            factor, level = _factorize(kernel_matrix(inputs, inputs, hp), hp, jitter)
        except GpInstabilityError:
            if strict:
                raise
            logger.warning('GP output %d cannot be conditioned, predicting its prior', d)
            factors.append(None)
            weights.append(None)
            levels.append(None)
            prior_only.append(d)
            continue
        factors.append(factor)
        weights.append(cho_solve((factor, True), component - hp.constant_mean))
        levels.append(level)
    return TrainedGp(tuple(hyperparams), inputs, targets, tuple(factors), tuple(weights), jitter,
                     {'jitter_levels': levels, 'prior_only': prior_only, 'instability_flag': bool(prior_only)})


def predict_gp(model, positions):
    """ Posterior means and marginal variances of the latent accelerations

    Args:
        model (:class:`~TrainedGp`): the conditioned model
        positions (array): (M, 3) query positions

    Returns:
        `tuple`: (M, 3) means and (M, 3) variances, clamped non-negative
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    means = np.empty((len(positions), 3))
    variances = np.empty((len(positions), 3))
    if not len(positions):
        return means, variances

    for d, (hp, factor, weight) in enumerate(zip(model.hyperparams, model.factors, model.weights)):
        if factor is None:
            means[:, d], variances[:, d] = hp.constant_mean, hp.signal_variance
            continue
        cross = kernel_matrix(model.inputs, positions, hp)
        means[:, d] = hp.constant_mean + cross.T @ weight
        projection = solve_triangular(factor, cross, lower=True)
        variances[:, d] = np.maximum(hp.signal_variance - np.einsum('ij,ij->j', projection, projection), 0.)
    return means, variances


def _fit_component(inputs, targets, cfg):
    """ Adam ascent on the log likelihood of one output for `cfg.epochs` steps, frozen at the last finite state """
    theta = GpHyperparams(constant_mean=float(np.mean(targets))).as_vector()
    floor = math.log(cfg.noise_floor)
    theta[4] = max(theta[4], floor)
    optimizer = Adam([theta], cfg.learning_rate)

    last_good, last_value, initial_value, unstable = None, None, None, False
    while True:
        try:
            value, grad = mll_and_gradient(GpHyperparams.from_vector(theta), inputs, targets, cfg.jitter)
        except (GpInstabilityError, ValueError):
            unstable = True
            break
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            unstable = True
            break

        last_good, last_value = theta.copy(), value
        if initial_value is None:
            initial_value = value
        if optimizer.steps == cfg.epochs:
            break
        optimizer.step([-grad])
        theta[4] = max(theta[4], floor)

    if last_good is None:
        # Not even the initial state factorizes: keep it, flagged
        return GpHyperparams.from_vector(theta), {'initial_mll': math.nan, 'final_mll': math.nan, 'epochs_run': 0,
                                                  'unstable': True}
    return GpHyperparams.from_vector(last_good), {'initial_mll': initial_value, 'final_mll': last_value,
                                                  'epochs_run': optimizer.steps - unstable, 'unstable': unstable}


def train_gp(ds, cfg=GpTrainConfig()):
    """ Train three independent GPs, one per acceleration component, on a dataset's observed pairs

    Args:
        ds (:class:`~pygravsafe.data.SampledDataset`): training data
        cfg (:class:`~GpTrainConfig`): training settings

    Returns:
        :class:`~TrainedGp`: the trained model, whose `instability_flag` diagnostic is set if any output had to be
        frozen before completing its epochs

    Raises:
        :class:`~pygravsafe.config.ConfigError`: fewer than 2 or more than `cfg.max_samples` samples
    """
    if len(ds) < 2:
        raise ConfigError(f'GP training needs at least 2 samples, got {len(ds)}')
    if len(ds) > cfg.max_samples:
        raise ConfigError(f'Exact GP limited to {cfg.max_samples} samples, got {len(ds)}')

    hyperparams, components = [], []
    for d in range(3):
        hp, info = _fit_component(ds.inputs, ds.targets[:, d], cfg)
        if info['unstable']:
            logger.warning('GP output %d frozen after %d of %d epochs: numerical instability', d,
                           info['epochs_run'], cfg.epochs)
        hyperparams.append(hp)
        components.append(info)

    model = condition_gp(ds.inputs, ds.targets, hyperparams, cfg.jitter, strict=False)
    diagnostics = {
        **model.diagnostics,
        'instability_flag': model.diagnostics['instability_flag'] or any(info['unstable'] for info in components),
        'initial_mll': sum(info['initial_mll'] for info in components),
        'final_mll': sum(info['final_mll'] for info in components),
        'epochs_run': [info['epochs_run'] for info in components],
        'epochs': cfg.epochs,
        'learning_rate': cfg.learning_rate,
    }
    return dataclasses.replace(model, diagnostics=diagnostics)
