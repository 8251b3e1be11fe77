"""Network building blocks registered against a ParamStore."""

from __future__ import annotations

import numpy as np

from ..diagnostics import Diagnostics
from . import tensor as T
from .optim import ParamStore


def he_uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int, rng):
        self.w = store.param(f"{name}.w", he_uniform(rng, c_in, (c_in, c_out)))
        self.b = store.param(f"{name}.b", np.zeros(c_out))

    def __call__(self, x):
        return T.add_bias(T.matmul(x, self.w), self.b)


class BatchNorm:
    def __init__(self, store: ParamStore, name: str, channels: int,
                 momentum: float = 0.9, eps: float = 1e-8):
        self.gamma = store.param(f"{name}.gamma", np.ones(channels))
        self.beta = store.param(f"{name}.beta", np.zeros(channels))
        self.running_mean = store.buffer(f"{name}.running_mean", np.zeros(channels))
        self.running_var = store.buffer(f"{name}.running_var", np.ones(channels))
        # scalar flag buffer: 1.0 once any train-mode batch has passed through
        self.trained = store.buffer(f"{name}.trained", np.zeros(1))
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, train: bool, diag: Diagnostics | None = None):
        if train:
            self.trained[0] = 1.0
        elif self.trained[0] == 0.0 and diag is not None:
            diag.bn_eval_before_train += 1
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean,
                            self.running_var, train, self.momentum, self.eps)


class SharedMLP:
    """Stack of per-position affine + BN + ReLU sublayers applied identically
    at every (batch, point, neighbor) position."""

    def __init__(self, store: ParamStore, name: str, widths, rng):
        self.blocks = []
        for i, (c_in, c_out) in enumerate(zip(widths[:-1], widths[1:])):
            lin = Linear(store, f"{name}.mlp{i}", c_in, c_out, rng)
            bn = BatchNorm(store, f"{name}.bn{i}", c_out)
            self.blocks.append((lin, bn))

    def __call__(self, x, train: bool, diag: Diagnostics | None = None):
        for lin, bn in self.blocks:
            x = T.relu(bn(lin(x), train, diag))
        return x


class Dropout:
    def __init__(self, rate: float):
        self.rate = rate

    def __call__(self, x, train: bool, rng=None):
        return T.dropout(x, self.rate, train, rng)
