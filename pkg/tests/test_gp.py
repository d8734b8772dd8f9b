import math
import pytest
import numpy as np

from pygravsafe.config import ConfigError
from pygravsafe.gravity import ZonalGravityField, acceleration
from pygravsafe.data import SampledDataset
from pygravsafe.gp import (GpHyperparams, GpInstabilityError, GpTrainConfig, TrainedGp, condition_gp,
                           kernel_matrix, marginal_log_likelihood, mll_and_gradient, predict_gp, rbf_kernel, train_gp)


bennu = ZonalGravityField.bennu()

def shell_points(count, seed=0, low=1.5, high=3.):
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * rng.uniform(low, high, size=(count, 1))

def make_dataset(positions, scale=10.):
    targets = scale * acceleration(bennu, positions)
    return SampledDataset(positions, targets, positions.copy(), targets.copy(), np.arange(len(positions), dtype=float),
                          scale)

def grid_points():
    axis = np.array([1.5, 2.5, 3.5, 4.5])
    return np.array(np.meshgrid(axis, axis, axis)).reshape(3, -1).T


def test_kernel():
    hp = GpHyperparams(log_signal_variance=math.log(2.))
    assert rbf_kernel([1., 2., 3.], [1., 2., 3.], hp) == pytest.approx(2.)
    assert rbf_kernel([0., 0., 0.], [1., 0., 0.], hp) == pytest.approx(2. * math.exp(-.5))

    # Lengthscales are per dimension
    hp = GpHyperparams(log_lengthscales=(math.log(2.), 0., 0.))
    assert rbf_kernel([0., 0., 0.], [2., 0., 0.], hp) == pytest.approx(math.exp(-.5))
    assert rbf_kernel([0., 0., 0.], [0., 2., 0.], hp) == pytest.approx(math.exp(-2.))

    points = shell_points(15)
    matrix = kernel_matrix(points, points, hp)
    assert np.allclose(matrix, matrix.T)
    assert np.all(np.linalg.eigvalsh(matrix) > -1e-10)


def test_hyperparams():
    hp = GpHyperparams((.1, .2, .3), .4, -5., 1.5)
    assert GpHyperparams.from_vector(hp.as_vector()) == hp
    assert np.allclose(hp.lengthscales, np.exp([.1, .2, .3]))
    assert hp.noise_variance == pytest.approx(math.exp(-5.))

    with pytest.raises(ValueError):
        GpHyperparams(log_signal_variance=800.)

    with pytest.raises(ValueError):
        GpHyperparams(log_lengthscales=(0., 0.))

    with pytest.raises(ValueError):
        GpHyperparams(constant_mean=float('nan'))


def test_train_config():
    assert GpTrainConfig.from_config({'epochs': '10', 'learning_rate': '0.1'}) == GpTrainConfig(10, .1)

    with pytest.raises(ConfigError):
        GpTrainConfig(learning_rate=0.)

    with pytest.raises(ConfigError):
        GpTrainConfig(jitter=1.)


def test_marginal_log_likelihood():
    inputs = shell_points(25, seed=1)
    targets = acceleration(bennu, inputs)[:, 0]
    hp = GpHyperparams((.3, -.2, .1), .5, -3., .2)

    covariance = kernel_matrix(inputs, inputs, hp) + (hp.noise_variance + 1e-6 * hp.signal_variance) * np.eye(25)
    residual = targets - hp.constant_mean
    _, logdet = np.linalg.slogdet(covariance)
    expected = -.5 * residual @ np.linalg.solve(covariance, residual) - .5 * logdet - 12.5 * math.log(2 * math.pi)

    assert marginal_log_likelihood(hp, inputs, targets) == pytest.approx(expected, rel=1e-8)


def test_mll_gradient():
    inputs = shell_points(30, seed=2)
    targets = acceleration(bennu, inputs)[:, 2]
    theta = GpHyperparams((.3, -.2, .1), .5, -3., .2).as_vector()

    _, grad = mll_and_gradient(GpHyperparams.from_vector(theta), inputs, targets)

    h = 1e-5
    numerical = np.empty(6)
    for k in range(6):
        step = np.eye(6)[k] * h
        numerical[k] = (marginal_log_likelihood(GpHyperparams.from_vector(theta + step), inputs, targets)
                        - marginal_log_likelihood(GpHyperparams.from_vector(theta - step), inputs, targets)) / (2 * h)

    np.testing.assert_allclose(grad, numerical, rtol=1e-4, atol=1e-5)


def test_interpolates_training_data():
    ds = make_dataset(grid_points())
    hyperparams = [GpHyperparams(log_lengthscales=(math.log(.5),) * 3, log_noise_variance=math.log(1e-6),
                                 constant_mean=float(np.mean(component))) for component in ds.targets.T]
    model = condition_gp(ds.inputs, ds.targets, hyperparams)

    predictions = model.predict_acceleration(ds.inputs)
    assert np.allclose(predictions, ds.targets, rtol=0, atol=1e-4 * np.max(np.abs(ds.targets)))

    means, variances = predict_gp(model, ds.inputs)
    assert np.all(variances >= 0)
    assert np.all(variances < 1e-3)

    # Far away, the posterior reverts to the prior
    means, variances = predict_gp(model, [[50., 50., 50.]])
    assert np.allclose(means[0], [hp.constant_mean for hp in hyperparams])
    assert np.allclose(variances[0], 1.)


def test_posterior_mean_is_linear_in_targets():
    rng = np.random.default_rng(12)
    points = shell_points(30, seed=13)
    first, second = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
    hyperparams = [GpHyperparams(log_lengthscales=(math.log(.8), 0., math.log(1.2)), log_noise_variance=-4.)] * 3
    queries = shell_points(15, seed=14, low=1., high=4.)

    def posterior_mean(targets):
        return condition_gp(points, targets, hyperparams).predict_acceleration(queries)

    combined = posterior_mean(2.5 * first - .7 * second)
    np.testing.assert_allclose(combined, 2.5 * posterior_mean(first) - .7 * posterior_mean(second),
                               rtol=1e-8, atol=1e-10)


def test_predict_empty():
    ds = make_dataset(grid_points())
    model = condition_gp(ds.inputs, ds.targets, [GpHyperparams()] * 3)
    means, variances = predict_gp(model, np.empty((0, 3)))
    assert means.shape == variances.shape == (0, 3)


def test_train():
    ds = make_dataset(shell_points(40, seed=3))
    model = train_gp(ds, GpTrainConfig(epochs=30, learning_rate=.05))

    assert isinstance(model, TrainedGp)
    assert model.diagnostics['epochs_run'] == [30, 30, 30]
    assert not model.diagnostics['instability_flag']
    assert model.diagnostics['final_mll'] > model.diagnostics['initial_mll']
    assert all(hp.noise_variance >= 1e-6 * (1 - 1e-9) for hp in model.hyperparams)
    assert model.predict_acceleration(ds.inputs).shape == (40, 3)


def test_train_zero_epochs():
    ds = make_dataset(shell_points(10, seed=4))
    model = train_gp(ds, GpTrainConfig(epochs=0))
    assert model.diagnostics['epochs_run'] == [0, 0, 0]
    assert [hp.constant_mean for hp in model.hyperparams] == pytest.approx(np.mean(ds.targets, axis=0).tolist())


def test_train_sample_limits():
    with pytest.raises(ConfigError):
        train_gp(make_dataset(shell_points(1)))

    with pytest.raises(ConfigError):
        train_gp(make_dataset(shell_points(20)), GpTrainConfig(max_samples=10))


def test_duplicate_inputs_factorize():
    points = np.repeat(shell_points(5, seed=5), 2, axis=0)
    hp = GpHyperparams(log_noise_variance=math.log(1e-12))
    model = condition_gp(points, acceleration(bennu, points), [hp] * 3, jitter=1e-10)
    assert all(level >= 1e-10 for level in model.diagnostics['jitter_levels'])


def test_instability():
    points = shell_points(5, seed=6)
    points[2, 0] = np.nan
    with pytest.raises(GpInstabilityError):
        condition_gp(points, np.ones((5, 3)), [GpHyperparams()] * 3)


def test_training_flags_unfactorizable_start():
    ds = make_dataset(shell_points(8, seed=15))
    ds.inputs[2, 0] = np.nan
    model = train_gp(ds, GpTrainConfig(epochs=5))

    assert model.diagnostics['instability_flag']
    assert model.diagnostics['epochs_run'] == [0, 0, 0]
    assert model.diagnostics['prior_only'] == [0, 1, 2]

    # Predictions fall back to the prior
    means, variances = predict_gp(model, shell_points(4, seed=16))
    assert np.allclose(means, np.mean(ds.targets, axis=0))
    assert np.allclose(variances, 1.)


def test_serialization():
    ds = make_dataset(shell_points(20, seed=7))
    model = train_gp(ds, GpTrainConfig(epochs=5))
    payload = model.to_dict({'path': 'train.csv', 'sha256': '0' * 64})

    assert payload['framework'] == 'gp'
    assert payload['training_data']['path'] == 'train.csv'
    assert len(payload['hyperparams']) == 3

    rebuilt = TrainedGp.from_dict(payload, ds.inputs, ds.targets)
    queries = shell_points(10, seed=8)
    assert np.allclose(rebuilt.predict_acceleration(queries), model.predict_acceleration(queries))
    assert rebuilt.diagnostics == model.diagnostics
