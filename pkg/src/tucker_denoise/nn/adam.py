"""ADAM with the step-decayed learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np

# (first epoch, learning rate) pairs
DEFAULT_SCHEDULE = ((0, 0.01), (30, 0.002), (60, 0.0004))


def learning_rate(epoch, schedule=DEFAULT_SCHEDULE):
    lr = schedule[0][1]
    for start, value in schedule:
        if epoch >= start:
            lr = value
    return lr


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: tuple = DEFAULT_SCHEDULE
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state, params, grads, epoch=0, lr=None):
    """One bias-corrected ADAM update, in place on ``params`` and ``state``.

    ``grads`` is the list returned by :func:`~tucker_denoise.nn.unet.backward`.
    The learning rate comes from the schedule at ``epoch`` unless ``lr`` is given.
    """
    arrays = params.arrays()
    flat = [g for pair in grads for g in pair]
    if not state.m:
        state.m = [np.zeros_like(a) for a in arrays]
        state.v = [np.zeros_like(a) for a in arrays]
    if lr is None:
        lr = learning_rate(epoch, state.schedule)
    state.t += 1
    c1 = 1 - state.beta1**state.t
    c2 = 1 - state.beta2**state.t
    for p, g, m, v in zip(arrays, flat, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
