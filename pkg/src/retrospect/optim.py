"""Deterministic first-order optimizers: SGD, heavy-ball momentum, Adam.

All updates run in place on the parameter arrays through the kernel
backend. Buffers are keyed by parameter name; the step counter increments
exactly once per ``apply``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError
from .nn import Param
from .tensor import GradMap


class Sgd:
    kind = "sgd"

    def __init__(self, lr: float):
        if lr <= 0:
            raise ConfigError(f"lr must be positive, got {lr}")
        self.lr = float(lr)
        self.step_count = 0

    def apply(self, params: Sequence[Param], grads: GradMap) -> None:
        for p in params:
            kernels.sgd_step(p.tensor.values, grads.wrt(p.tensor), self.lr)
        self.step_count += 1


class Momentum:
    """Classical heavy-ball: v <- mu*v + g; theta <- theta - lr*v."""

    kind = "momentum"

    def __init__(self, lr: float, momentum: float = 0.5):
        if lr <= 0:
            raise ConfigError(f"lr must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.step_count = 0
        self._vel: dict[str, np.ndarray] = {}

    def apply(self, params: Sequence[Param], grads: GradMap) -> None:
        for p in params:
            vel = self._vel.get(p.name)
            if vel is None:
                vel = self._vel[p.name] = np.zeros_like(p.tensor.values)
            kernels.momentum_step(p.tensor.values, vel, grads.wrt(p.tensor),
                                  self.lr, self.momentum)
        self.step_count += 1


class Adam:
    kind = "adam"

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"lr must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError("betas must be in [0, 1)")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def apply(self, params: Sequence[Param], grads: GradMap) -> None:
        t = self.step_count + 1
        for p in params:
            m = self._m.get(p.name)
            if m is None:
                m = self._m[p.name] = np.zeros_like(p.tensor.values)
                self._v[p.name] = np.zeros_like(p.tensor.values)
            kernels.adam_step(p.tensor.values, m, self._v[p.name], grads.wrt(p.tensor),
                              self.lr, self.beta1, self.beta2, self.eps, t)
        self.step_count = t


Optimizer = Sgd | Momentum | Adam


def make_optimizer(kind: str, lr: float, momentum: float = 0.5,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Optimizer:
    if kind == "sgd":
        return Sgd(lr)
    if kind == "momentum":
        return Momentum(lr, momentum)
    if kind == "adam":
        return Adam(lr, beta1, beta2, eps)
    raise ConfigError(f"unknown optimizer kind {kind!r}")
