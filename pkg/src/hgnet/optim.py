"""Root-mean-square gradient scaling optimizer (rmsprop)."""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)


def rmsprop_step(params, grads, state, lr, alpha=0.99, epsilon=1e-8):
    """One rmsprop update, in place.

    state <- alpha * state + (1 - alpha) * grad^2
    param <- param - lr * grad / (sqrt(state) + epsilon)

    params, grads and state are aligned sequences of arrays. A tensor
    whose gradient contains non-finite values is skipped (and the event
    logged) rather than poisoning the parameters.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    for i, (p, g, s) in enumerate(zip(params, grads, state)):
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            logger.warning("rmsprop: non-finite gradient for parameter %d, update skipped", i)
            continue
        s *= alpha
        s += (1.0 - alpha) * g * g
        p -= lr * g / (np.sqrt(s) + epsilon)


class RMSprop:
    """Stateful wrapper around :func:`rmsprop_step` for a parameter list."""

    def __init__(self, params, lr, alpha=0.99, epsilon=1e-8):
        self.params = list(params)
        self.lr = lr
        self.alpha = alpha
        self.epsilon = epsilon
        self.state = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        rmsprop_step(
            [p.data for p in self.params],
            [p.grad for p in self.params],
            self.state,
            self.lr,
            self.alpha,
            self.epsilon,
        )

    def zero_grad(self):
        for p in self.params:
            p.grad = None
