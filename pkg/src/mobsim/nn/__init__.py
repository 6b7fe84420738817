"""Minimal reverse-mode autodiff over float64 numpy arrays, plus the layers,
optimizers, gradient checker, and checkpoint format built on it."""

from .core import (
    Tensor,
    ParamSet,
    no_grad,
    constant,
    add,
    sub,
    mul,
    neg,
    matmul,
    exp,
    log,
    tanh,
    sigmoid,
    relu,
    leakyrelu,
    softmax,
    concat,
    gather_rows,
    narrow,
    reshape,
    tsum,
    tmean,
    dropout,
    cross_entropy,
    binary_cross_entropy,
)
from .layers import linear, GruParams, gru_cell, init_gru
from .attention import HeadParams, attention_bias, graph_attention, init_heads
from .gradcheck import grad_check
from .optim import Sgd, Adam, make_optimizer
from .checkpoint import save_checkpoint, load_checkpoint
