""" Fully connected ReLU network with spectral normalization on every layer, trained by Adam on mean squared error """
import math
import logging
import dataclasses

import numpy as np

from pygravsafe.optim import Adam
from pygravsafe.config import ConfigError

logger = logging.getLogger(__name__)

#: Widths of the affine layers' inputs and outputs: 3 → 6 hidden layers of 80 → 3
LAYER_SIZES = (3, 80, 80, 80, 80, 80, 80, 3)
#: Power iterations run on the trained network, so that the stored vectors give a tight norm estimate
FINAL_POWER_ITERATIONS = 50


@dataclasses.dataclass(frozen=True)
class NnTrainConfig:
    """ Training settings of the network

    Attributes:
        epochs (`int`): number of passes over the data
        learning_rate (`float`): constant Adam step size
        batch_size (`int`): mini-batch size, capped at the dataset size
        lipschitz_budget (`float`): γ, bound on the end-to-end Lipschitz constant
        seed (`int`): seed of initialization and batch shuffling
    """
    epochs: int = 2000
    learning_rate: float = 1e-3
    batch_size: int = 64
    lipschitz_budget: float = 100.
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or not self.learning_rate > 0 or self.batch_size < 1:
            raise ConfigError('NN training needs epochs ≥ 1, a positive learning rate and batch size ≥ 1')
        if not self.lipschitz_budget > 0:
            raise ConfigError('Lipschitz budget must be positive')


    @classmethod
    def from_config(cls, section, seed=0):
        """ Build from the `[nn]` configuration section mapping """
        return cls(int(section.get('epochs', cls.epochs)), float(section.get('learning_rate', cls.learning_rate)),
                   int(section.get('batch_size', cls.batch_size)),
                   float(section.get('lipschitz_budget', cls.lipschitz_budget)), seed)


def _unit(vector, fallback):
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else fallback


def spectral_normalize(weight, u, v, iterations=1, budget=1.):
    """ Power iteration estimate of the largest singular value, and projection of the weight onto the norm budget

    Args:
        weight (array): (out, in) weight matrix W
        u (array): (out,) left singular vector estimate
        v (array): (in,) right singular vector estimate
        iterations (`int`): power iterations to run first, 0 to use `u` and `v` as they are
        budget (`float`): largest allowed spectral norm

    Returns:
        `tuple`: W · min(1, budget / σ̂), σ̂ = uᵀWv, and the updated u and v. A zero matrix is returned unchanged
        with σ̂ = 0.
    """
    weight = np.asarray(weight, dtype=float)
    if not np.any(weight):
        return weight, 0., u, v

    for _ in range(iterations):
        v = _unit(weight.T @ u, v)
        u = _unit(weight @ v, u)
    sigma = float(u @ weight @ v)
    if sigma > budget:
        return weight * (budget / sigma), sigma, u, v
    return weight, sigma, u, v


class MlpNetwork:
    """ Affine and ReLU layers whose weights are used through their spectral normalization

    Args:
        weights (`list`): raw (out, in) weight matrices
        biases (`list`): bias vectors
        left (`list`): per-layer left singular vector estimates u
        right (`list`): per-layer right singular vector estimates v
        lipschitz_budget (`float`): γ, split evenly as γ^{1/L} over the L layers
        diagnostics (`dict`): training diagnostics
    """
    def __init__(self, weights, biases, left, right, lipschitz_budget=100., diagnostics=None):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.left = [np.asarray(u, dtype=float) for u in left]
        self.right = [np.asarray(v, dtype=float) for v in right]
        self.lipschitz_budget = lipschitz_budget
        self.diagnostics = dict(diagnostics or {})


    @classmethod
    def initialize(cls, rng, lipschitz_budget=100., sizes=LAYER_SIZES):
        """ He-scaled Gaussian weights, zero biases and random unit singular vector estimates """
        weights, biases, left, right = [], [], [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0., math.sqrt(2 / fan_in), size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
            left.append(_unit(rng.normal(size=fan_out), np.eye(fan_out)[0]))
            right.append(_unit(rng.normal(size=fan_in), np.eye(fan_in)[0]))
        return cls(weights, biases, left, right, lipschitz_budget)


    @property
    def layer_budget(self):
        """ `float`: per-layer spectral norm budget γ^{1/L} """
        return self.lipschitz_budget ** (1 / len(self.weights))


    def power_iteration(self, iterations=1):
        """ Refine the stored singular vector estimates of every layer """
        for k, weight in enumerate(self.weights):
            _, _, self.left[k], self.right[k] = spectral_normalize(weight, self.left[k], self.right[k], iterations)


    def normalized_layers(self):
        """ `list`: per layer, the normalized weight W̃ and the estimate σ̂ from the stored singular vectors """
        return [spectral_normalize(weight, u, v, 0, self.layer_budget)[:2]
                for weight, u, v in zip(self.weights, self.left, self.right)]


    def predict_acceleration(self, positions):
        """ Network outputs at `positions` """
        return predict_nn(self, positions)


    def to_dict(self):
        """ JSON-serializable description: layer sizes, weights, biases, singular vectors, γ and diagnostics """
        return {
            'framework': 'nn',
            'layer_sizes': [self.weights[0].shape[1], *(w.shape[0] for w in self.weights)],
            'weights': [w.tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases],
            'left': [u.tolist() for u in self.left],
            'right': [v.tolist() for v in self.right],
            'lipschitz_budget': self.lipschitz_budget,
            'diagnostics': self.diagnostics,
        }


    @classmethod
    def from_dict(cls, payload):
        """ Inverse of :meth:`~to_dict` """
        return cls(payload['weights'], payload['biases'], payload['left'], payload['right'],
                   payload['lipschitz_budget'], payload.get('diagnostics'))


def _forward(layers, biases, inputs):
    """ Layer outputs, pre-activation for the last layer and post-ReLU otherwise, with the inputs first """
    activations = [inputs]
    for k, (weight, bias) in enumerate(zip(layers, biases)):
        out = activations[-1] @ weight.T + bias
        activations.append(out if k == len(layers) - 1 else np.maximum(out, 0.))
    return activations


def forward(net, position):
    """ Network output at one position, through the normalized weights """
    return predict_nn(net, np.asarray(position, dtype=float)[np.newaxis])[0]


def predict_nn(net, positions):
    """ Network outputs at a batch of positions, in order

    Args:
        net (:class:`~MlpNetwork`): the network
        positions (array): (M, 3) positions, possibly empty

    Returns:
        `numpy.ndarray`: (M, 3) outputs
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    layers = [weight for weight, _ in net.normalized_layers()]
    return _forward(layers, net.biases, positions)[-1]


def mse_and_gradients(net, inputs, targets):
    """ Mean squared error over all output components, and its gradients with respect to the raw parameters

    Gradients flow through W̃ = s W / σ̂ with σ̂ = uᵀWv and the singular vectors held constant:
    ∂L/∂W = (s / σ̂) [G − (⟨G, W⟩ / σ̂) u vᵀ] where G = ∂L/∂W̃, and ∂L/∂W = G for unscaled layers.

    Args:
        net (:class:`~MlpNetwork`): the network, with its current singular vector estimates
        inputs (array): (B, 3) positions
        targets (array): (B, 3) accelerations

    Returns:
        `tuple`: the loss, the `list` of weight gradients and the `list` of bias gradients
    """
    normalized = net.normalized_layers()
    layers = [weight for weight, _ in normalized]
    activations = _forward(layers, net.biases, inputs)
    error = activations[-1] - targets
    loss = float(np.mean(error ** 2))

    delta = 2 * error / error.size
    weight_grads, bias_grads = [None] * len(layers), [None] * len(layers)
    for k in reversed(range(len(layers))):
        grad = delta.T @ activations[k]
        bias_grads[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ layers[k]) * (activations[k] > 0)

        sigma = normalized[k][1]
        if sigma > net.layer_budget:
            scale = net.layer_budget / sigma
            grad = scale * (grad - np.sum(grad * net.weights[k]) / sigma * np.outer(net.left[k], net.right[k]))
        weight_grads[k] = grad
    return loss, weight_grads, bias_grads


def train_nn(ds, cfg=NnTrainConfig()):
    """ Train a spectrally normalized network by mini-batch Adam on the dataset's observed pairs

    Each optimizer step first runs one power iteration per layer. After training, the singular vector estimates are
    refined with :data:`~FINAL_POWER_ITERATIONS` iterations.

    Args:
        ds (:class:`~pygravsafe.data.SampledDataset`): training data
        cfg (:class:`~NnTrainConfig`): training settings

    Returns:
        :class:`~MlpNetwork`: the trained network, whose `halted` diagnostic is set if the loss became non-finite
    """
    n = len(ds)
    if n < 1:
        raise ConfigError('NN training needs at least one sample')

    rng = np.random.default_rng(cfg.seed)
    net = MlpNetwork.initialize(rng, cfg.lipschitz_budget)
    optimizer = Adam([*net.weights, *net.biases], cfg.learning_rate)
    batch_size = min(cfg.batch_size, n)
    initial_loss = mse_and_gradients(net, ds.inputs, ds.targets)[0]

    halted, loss = False, initial_loss
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            net.power_iteration(1)
            loss, weight_grads, bias_grads = mse_and_gradients(net, ds.inputs[batch], ds.targets[batch])
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in weight_grads):
                logger.warning('NN training halted at epoch %d: non-finite loss', epoch)
                halted = True
                break
            optimizer.step([*weight_grads, *bias_grads])
        if halted:
            break

    net.power_iteration(FINAL_POWER_ITERATIONS)
    net.diagnostics = {
        'halted': halted,
        'instability_flag': halted,
        'initial_loss': initial_loss,
        'final_loss': mse_and_gradients(net, ds.inputs, ds.targets)[0] if not halted else loss,
        'optimizer_steps': optimizer.steps,
        'epochs': cfg.epochs,
        'learning_rate': cfg.learning_rate,
        'batch_size': batch_size,
        'lipschitz_budget': cfg.lipschitz_budget,
    }
    return net
