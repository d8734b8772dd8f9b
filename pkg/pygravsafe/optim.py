""" Adam with a constant learning rate, shared by both learning frameworks """
import numpy as np


class Adam:
    """ First-order optimizer with bias-corrected moment estimates, updating a list of arrays in place

    Args:
        params (`list` of arrays): the parameters, updated in place by :meth:`~step`
        learning_rate (`float`): constant step size
        betas (`tuple`): decay rates of the first and second moment estimates
        eps (`float`): denominator regularization
    """
    def __init__(self, params, learning_rate=1e-3, betas=(.9, .999), eps=1e-8):
        if not learning_rate > 0:
            raise ValueError(f'Learning rate must be positive, got {learning_rate}')
        self.params = params
        self.learning_rate = learning_rate
        self.betas = betas
        self.eps = eps
        self.steps = 0
        self.first = [np.zeros_like(p) for p in params]
        self.second = [np.zeros_like(p) for p in params]


    def step(self, grads):
        """ Take one descent step along the given gradients (pass negated gradients to ascend)

        Args:
            grads (`list` of arrays): gradients matching `params` in order and shape
        """
        self.steps += 1
        beta1, beta2 = self.betas
        correction1 = 1 - beta1 ** self.steps
        correction2 = 1 - beta2 ** self.steps
        for param, grad, first, second in zip(self.params, grads, self.first, self.second):
            first *= beta1
            first += (1 - beta1) * grad
            second *= beta2
            second += (1 - beta2) * grad ** 2
            param -= self.learning_rate * (first / correction1) / (np.sqrt(second / correction2) + self.eps)
