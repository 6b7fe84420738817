"""A recurrent discriminator over location id sequences.

Embeds each location (its own table, not shared with the generator), runs a
GRU across the full sequence, and maps the final hidden state through a
sigmoid to the probability that the sequence is real.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import Tensor
from .rng import stream


@dataclass
class DiscriminatorConfig:
    n_locations: int
    embed_dim: int = 32
    hidden_dim: int = 32

    def __post_init__(self):
        if self.n_locations < 2:
            raise ValueError("need at least 2 locations")


class Discriminator:
    def __init__(self, config: DiscriminatorConfig, seed: int = 0):
        self.config = config
        rng = stream(seed, "init/discriminator")
        params = nn.ParamSet()
        params.register("embed", rng.normal(0.0, 0.1, size=(config.n_locations, config.embed_dim)))
        self.gru = nn.init_gru(params, "gru", config.embed_dim, config.hidden_dim, rng)
        params.register("head/weight",
                        rng.normal(0.0, 1.0 / math.sqrt(config.hidden_dim),
                                   size=(config.hidden_dim, 1)))
        params.register("head/bias", np.zeros(1))
        self.params = params

    def classify(self, batch_ids: np.ndarray) -> Tensor:
        """Probability that each row of a (B, L) id matrix is a real trajectory."""
        batch_ids = np.asarray(batch_ids, dtype=np.int64)
        if batch_ids.ndim == 1:
            batch_ids = batch_ids[None, :]
        if batch_ids.size == 0:
            raise ValueError("empty batch")
        if batch_ids.min() < 0 or batch_ids.max() >= self.config.n_locations:
            raise ValueError(f"location ids outside [0, {self.config.n_locations})")
        b = batch_ids.shape[0]
        hidden = nn.constant(np.zeros((b, self.config.hidden_dim)))
        for l in range(batch_ids.shape[1]):
            hidden = nn.gru_cell(nn.gather_rows(self.params["embed"], batch_ids[:, l]),
                                 hidden, self.gru)
        out = nn.linear(hidden, self.params["head/weight"], self.params["head/bias"])
        return nn.reshape(nn.sigmoid(out), (b,))


CLAMP = 1e-7


def d_loss(disc: Discriminator, real_ids: np.ndarray, fake_ids: np.ndarray) -> Tensor:
    """mean log D(real) + mean log(1 - D(fake)), the objective the
    discriminator ascends.  Probabilities are clamped to [1e-7, 1 - 1e-7]
    inside the logs, so the value is at most 0 up to the clamp."""
    real_term = nn.binary_cross_entropy(disc.classify(real_ids),
                                        np.ones(len(np.atleast_2d(real_ids))), eps=CLAMP)
    fake_term = nn.binary_cross_entropy(disc.classify(fake_ids),
                                        np.zeros(len(np.atleast_2d(fake_ids))), eps=CLAMP)
    return nn.neg(nn.add(nn.tmean(real_term), nn.tmean(fake_term)))
