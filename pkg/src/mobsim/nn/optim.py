"""Plain SGD and Adam over a ParamSet."""

from __future__ import annotations

import numpy as np

from .core import ParamSet


class Sgd:
    def __init__(self, params: ParamSet, lr: float = 0.01):
        self.params = params
        self.lr = lr

    def step(self):
        for _, tensor in self.params.items():
            tensor.values -= self.lr * tensor.grad

    def zero_grad(self):
        self.params.zero_grad()


class Adam:
    def __init__(self, params: ParamSet, lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(t.values) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.values) for name, t in params.items()}

    def step(self):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, tensor in self.params.items():
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * tensor.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * tensor.grad ** 2
            tensor.values -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def zero_grad(self):
        self.params.zero_grad()


def make_optimizer(kind: str, params: ParamSet, lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return Sgd(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")
