"""Dense and recurrent layers composed from the autodiff primitives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ParamSet, Tensor, add, matmul, mul, sigmoid, sub, tanh


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias with bias broadcast over rows."""
    return add(matmul(x, weight), bias)


def glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))


@dataclass
class GruParams:
    """The nine tensors of one GRU cell, in update/reset/candidate order."""

    w_update: Tensor
    u_update: Tensor
    b_update: Tensor
    w_reset: Tensor
    u_reset: Tensor
    b_reset: Tensor
    w_cand: Tensor
    u_cand: Tensor
    b_cand: Tensor

    def tensors(self):
        return (self.w_update, self.u_update, self.b_update,
                self.w_reset, self.u_reset, self.b_reset,
                self.w_cand, self.u_cand, self.b_cand)


def init_gru(params: ParamSet, prefix: str, in_dim: int, hidden_dim: int, rng) -> GruParams:
    """Register a GRU cell's parameters under ``prefix`` and return them."""
    def gate(name):
        w = params.register(f"{prefix}/w_{name}", glorot(rng, in_dim, hidden_dim))
        u = params.register(f"{prefix}/u_{name}", glorot(rng, hidden_dim, hidden_dim))
        b = params.register(f"{prefix}/b_{name}", np.zeros(hidden_dim))
        return w, u, b

    return GruParams(*gate("update"), *gate("reset"), *gate("cand"))


def gru_cell(x: Tensor, z_prev: Tensor, p: GruParams) -> Tensor:
    """One GRU step.

    u = sigmoid(x Wu + z Uu + bu), r = sigmoid(x Wr + z Ur + br),
    candidate = tanh(x Wc + (r * z) Uc + bc),
    z_new = (1 - u) * z + u * candidate.
    """
    u = sigmoid(add(add(matmul(x, p.w_update), matmul(z_prev, p.u_update)), p.b_update))
    r = sigmoid(add(add(matmul(x, p.w_reset), matmul(z_prev, p.u_reset)), p.b_reset))
    cand = tanh(add(add(matmul(x, p.w_cand), matmul(mul(r, z_prev), p.u_cand)), p.b_cand))
    return add(mul(sub(1.0, u), z_prev), mul(u, cand))
