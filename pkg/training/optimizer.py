"""
SGD with momentum and weight decay over named parameter dictionaries
"""
from typing import Dict, Optional

import numpy as np

from core.errors import NonFiniteGradientError

Params = Dict[str, np.ndarray]


def parameter_group(name: str) -> str:
    """'extractor.0.weight' -> 'extractor', 'prototypes' -> 'prototypes'"""
    return name.split('.', 1)[0]


def sgd_step(params: Params, grads: Params, config, velocity: Optional[Params] = None) -> Params:
    """v <- momentum v + grad + weight_decay param; param <- param - lr v.

    Parameters without a gradient entry are left untouched. ``velocity`` is
    updated in place when supplied; the returned parameters are new arrays.
    """
    if velocity is None:
        velocity = {}
    updated = dict(params)
    for name, grad in grads.items():
        param = params[name]
        if grad.shape != param.shape:
            raise ValueError(f"gradient for {name} has shape {grad.shape}, parameter has {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(parameter_group(name), name)
        v = velocity.get(name)
        step = grad + config.weight_decay * param
        v = step if v is None else config.momentum * v + step
        velocity[name] = v
        updated[name] = param - config.learning_rate * v
    return updated


class MomentumSGD:
    """Holds the velocity buffers across steps"""

    def __init__(self, config):
        self.config = config
        self.velocity: Params = {}
        self.steps = 0

    def step(self, params: Params, grads: Params) -> Params:
        self.steps += 1
        return sgd_step(params, grads, self.config, self.velocity)

    def reset(self):
        self.velocity.clear()
        self.steps = 0
