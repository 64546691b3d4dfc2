"""AdamW with decoupled weight decay.

Decay applies to matrices (ndim >= 2) only; biases and layer-norm
parameters are exempt. Updates mutate the parameter arrays in place.
"""

import numpy as np

from .config import TrainConfig


class AdamW:
    def __init__(self, params: dict, config: TrainConfig):
        self.lr = config.learning_rate
        self.wd = config.weight_decay
        self.b1 = config.beta1
        self.b2 = config.beta2
        self.eps = config.adam_epsilon
        self.grad_clip = config.grad_clip
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        if self.grad_clip is not None:
            norm = float(
                np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
            )
            if norm > self.grad_clip:
                scale = self.grad_clip / (norm + 1e-12)
                grads = {k: g * scale for k, g in grads.items()}
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for name, p in params.items():
            g = grads[name].astype(p.dtype, copy=False)
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.wd > 0.0 and p.ndim >= 2:
                update = update + self.wd * p
            p -= self.lr * update
