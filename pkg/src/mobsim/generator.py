"""The trajectory generator.

Location embeddings are refined by per-graph attention stacks whose per-layer
outputs are summed across channels; a GRU consumes the embedding of each
visited location; two heads read the hidden state: an exploration softmax
over all locations and a dwell head whose stay probability is

    sigmoid(h . w + b) * exp(-beta * C)

with C the number of times the current location already appears in the
prefix (itself included).  Sampling draws the dwell Bernoulli first (only
once the prefix is longer than one) and falls back to the exploration
softmax when it does not fire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .nn import Tensor, no_grad
from .rng import stream

_ALLOWED_LAYERS = (1, 2)
_ALLOWED_HEADS = (1, 2, 4)


@dataclass
class GeneratorConfig:
    n_locations: int
    embed_dim: int = 32
    hidden_dim: int = 32
    layers: int = 1
    heads: int = 1
    channels: tuple = ("sdg", "ttg", "stg")
    dropout: float = 0.6
    beta: float = 1.0
    dwell: bool = True
    attn_slope: float = 0.2

    def __post_init__(self):
        self.channels = tuple(self.channels)
        if self.n_locations < 2:
            raise ValueError("need at least 2 locations")
        if not self.channels:
            raise ValueError("at least one graph channel is required")
        if self.layers not in _ALLOWED_LAYERS:
            raise ValueError(f"layers must be one of {_ALLOWED_LAYERS}")
        if self.heads not in _ALLOWED_HEADS:
            raise ValueError(f"heads must be one of {_ALLOWED_HEADS}")
        if self.embed_dim % self.heads != 0:
            raise ValueError("heads must divide embed_dim")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.beta < 0.0:
            raise ValueError("beta must be non-negative")


class Generator:
    """Holds the parameter set and the per-channel attention biases."""

    def __init__(self, config: GeneratorConfig, graphs: dict, seed: int = 0):
        missing = [c for c in config.channels if c not in graphs]
        if missing:
            raise ValueError(f"no graph supplied for channels {missing}")
        for name in config.channels:
            if graphs[name].n_locations != config.n_locations:
                raise ValueError(f"graph {name!r} is over {graphs[name].n_locations} "
                                 f"locations, config says {config.n_locations}")
        self.config = config
        self.biases = {name: nn.attention_bias(graphs[name]) for name in config.channels}
        rng = stream(seed, "init/generator")
        params = nn.ParamSet()
        params.register("embed", rng.normal(0.0, 0.1, size=(config.n_locations, config.embed_dim)))
        head_dim = config.embed_dim // config.heads
        self.attn = {}
        for name in config.channels:
            self.attn[name] = [
                nn.init_heads(params, f"attn/{name}/l{layer}", config.heads,
                              config.embed_dim, head_dim, rng)
                for layer in range(config.layers)
            ]
        self.gru = nn.init_gru(params, "gru", config.embed_dim, config.hidden_dim, rng)
        params.register("explore/weight",
                        rng.normal(0.0, 1.0 / math.sqrt(config.hidden_dim),
                                   size=(config.hidden_dim, config.n_locations)))
        params.register("explore/bias", np.zeros(config.n_locations))
        params.register("dwell/weight",
                        rng.normal(0.0, 1.0 / math.sqrt(config.hidden_dim),
                                   size=(config.hidden_dim, 1)))
        params.register("dwell/bias", np.zeros(1))
        self.params = params

    def embed_locations(self, training: bool = False, rng=None) -> Tensor:
        """The fused (N, embed_dim) location table after the attention stacks."""
        if training and self.config.dropout > 0.0 and rng is None:
            raise ValueError("training-mode embedding needs an rng for dropout")
        table = self.params["embed"]
        for layer in range(self.config.layers):
            fused = None
            for name in self.config.channels:
                out = nn.graph_attention(table, self.biases[name], self.attn[name][layer],
                                         slope=self.config.attn_slope,
                                         dropout_rate=self.config.dropout,
                                         rng=rng, training=training)
                fused = out if fused is None else nn.add(fused, out)
            table = fused
        if training and self.config.dropout > 0.0:
            table = nn.dropout(table, self.config.dropout, rng)
        return table

    def gru_step(self, table: Tensor, ids: np.ndarray, hidden: Tensor) -> Tensor:
        return nn.gru_cell(nn.gather_rows(table, ids), hidden, self.gru)

    def explore_probs(self, hidden: Tensor) -> Tensor:
        return nn.softmax(nn.linear(hidden, self.params["explore/weight"],
                                    self.params["explore/bias"]))

    def dwell_sigmoid(self, hidden: Tensor) -> Tensor:
        out = nn.linear(hidden, self.params["dwell/weight"], self.params["dwell/bias"])
        return nn.reshape(nn.sigmoid(out), (hidden.shape[0],))

    def zero_hidden(self, batch: int) -> Tensor:
        return nn.constant(np.zeros((batch, self.config.hidden_dim)))

    def sequence_nll(self, batch_ids: np.ndarray, training: bool = False, rng=None):
        """Teacher-forced losses over a (B, L) id matrix.

        Returns ``(nll, dwell_bce)``: the mean (over trajectories) summed
        negative log likelihood of each next location under the exploration
        softmax, and the mean summed binary cross-entropy of the dwell
        sigmoid against the stay indicator of each step.
        """
        batch_ids = np.asarray(batch_ids, dtype=np.int64)
        if batch_ids.ndim != 2 or batch_ids.shape[1] < 2:
            raise ValueError("need a (B, L>=2) id matrix")
        self._check_ids(batch_ids)
        b, length = batch_ids.shape
        table = self.embed_locations(training=training, rng=rng)
        hidden = self.zero_hidden(b)
        nll_total = None
        bce_total = None
        for l in range(length - 1):
            hidden = self.gru_step(table, batch_ids[:, l], hidden)
            step_nll = nn.cross_entropy(self.explore_probs(hidden), batch_ids[:, l + 1])
            nll_total = step_nll if nll_total is None else nn.add(nll_total, step_nll)
            stay = (batch_ids[:, l + 1] == batch_ids[:, l]).astype(np.float64)
            step_bce = nn.binary_cross_entropy(self.dwell_sigmoid(hidden), stay)
            bce_total = step_bce if bce_total is None else nn.add(bce_total, step_bce)
        return nn.tmean(nll_total), nn.tmean(bce_total)

    def _check_ids(self, ids: np.ndarray):
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.n_locations):
            raise ValueError(f"location ids outside [0, {self.config.n_locations})")


@dataclass
class SampleStreams:
    """The independent random streams one sampling pass consumes."""

    explore: np.random.Generator
    dwell: np.random.Generator
    seed: np.random.Generator


def sample_streams(master_seed: int, tag: str) -> SampleStreams:
    return SampleStreams(
        explore=stream(master_seed, f"{tag}/explore"),
        dwell=stream(master_seed, f"{tag}/dwell"),
        seed=stream(master_seed, f"{tag}/seed"),
    )


def categorical(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row of a (B, N) probability matrix."""
    cdf = np.cumsum(probs, axis=-1)
    return np.clip((uniforms[:, None] >= cdf).sum(axis=-1), 0, probs.shape[-1] - 1)


@dataclass
class GenState:
    """Single-trajectory sampling state.

    ``hidden`` is the GRU state after consuming every prefix location except
    the newest one; ``explore_step`` consumes that newest location.  ``counts``
    always equals a recount of the full prefix.
    """

    prefix: list
    hidden: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_prefix(cls, gen: Generator, table: Tensor, prefix) -> "GenState":
        prefix = [int(p) for p in prefix]
        if not prefix:
            raise ValueError("prefix must be non-empty")
        gen._check_ids(np.array(prefix))
        with no_grad():
            hidden = gen.zero_hidden(1)
            for loc in prefix[:-1]:
                hidden = gen.gru_step(table, np.array([loc]), hidden)
        counts = np.zeros(gen.config.n_locations, dtype=np.int64)
        for loc in prefix:
            counts[loc] += 1
        return cls(prefix, hidden.values, counts)


def explore_step(gen: Generator, table: Tensor, state: GenState):
    """Advance the GRU over the newest prefix location.

    Returns ``(probs, advanced_state)`` where ``probs`` is the exploration
    distribution over all locations; pure in its inputs.
    """
    with no_grad():
        hidden = gen.gru_step(table, np.array([state.prefix[-1]]), nn.constant(state.hidden))
        probs = gen.explore_probs(hidden).values[0]
    return probs, replace(state, hidden=hidden.values)


def dwell_prob(gen: Generator, hidden: np.ndarray, state: GenState) -> float:
    """Stay probability sigmoid(h . w + b) * exp(-beta * C) at the current location."""
    with no_grad():
        base = gen.dwell_sigmoid(nn.constant(hidden)).values[0]
    count = state.counts[state.prefix[-1]]
    return float(base * math.exp(-gen.config.beta * count))


def next_location(probs: np.ndarray, dwell_y: float, prefix_len: int, current: int,
                  streams: SampleStreams) -> int:
    """Sample the next location: dwell Bernoulli first (once the prefix is
    longer than one), exploration draw otherwise."""
    if prefix_len > 1:
        if streams.dwell.random() < dwell_y:
            return current
    return int(categorical(probs[None, :], streams.explore.random(1))[0])


def complete_batch(gen: Generator, table: Tensor, prefix_ids: np.ndarray, length: int,
                   streams: SampleStreams, record: bool = False):
    """Extend a (B, l0) prefix batch to ``length`` slots by sampling.

    The dwell stream is consumed only at steps where the dwell branch is
    active; the exploration stream is consumed at every step, so disabling
    the dwell branch leaves the exploration draws untouched.  With ``record``
    the (B, length - l0) matrix of dwell-fired flags is returned as well.
    """
    prefix_ids = np.asarray(prefix_ids, dtype=np.int64)
    b, start = prefix_ids.shape
    if not 1 <= start <= length:
        raise ValueError(f"prefix length {start} outside [1, {length}]")
    gen._check_ids(prefix_ids)
    out = np.empty((b, length), dtype=np.int64)
    out[:, :start] = prefix_ids
    counts = np.zeros((b, gen.config.n_locations), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(b), start), prefix_ids.reshape(-1)), 1)
    fired = np.zeros((b, length - start), dtype=bool)
    rows = np.arange(b)
    dwell_active = gen.config.dwell
    with no_grad():
        hidden = gen.zero_hidden(b)
        for l in prefix_ids.T[:-1]:
            hidden = gen.gru_step(table, l, hidden)
        current = out[:, start - 1]
        for pos in range(start, length):
            hidden = gen.gru_step(table, current, hidden)
            probs = gen.explore_probs(hidden).values
            stay = np.zeros(b, dtype=bool)
            if dwell_active and pos > 1:
                base = gen.dwell_sigmoid(hidden).values
                dwell_y = base * np.exp(-gen.config.beta * counts[rows, current])
                stay = streams.dwell.random(b) < dwell_y
            drawn = categorical(probs, streams.explore.random(b))
            chosen = np.where(stay, current, drawn)
            out[:, pos] = chosen
            fired[:, pos - start] = stay
            counts[rows, chosen] += 1
            current = chosen
    if record:
        return out, fired
    return out


def rollout(gen: Generator, table: Tensor, prefix, length: int,
            streams: SampleStreams) -> np.ndarray:
    """Complete one prefix to ``length`` slots; the prefix is preserved."""
    prefix = np.asarray(prefix, dtype=np.int64).reshape(1, -1)
    if prefix.shape[1] == length:
        return prefix[0].copy()
    return complete_batch(gen, table, prefix, length, streams)[0]


def seed_distribution(batch_ids: np.ndarray, n_locations: int) -> np.ndarray:
    """Empirical distribution of first-slot locations in a training matrix."""
    counts = np.bincount(batch_ids[:, 0], minlength=n_locations).astype(np.float64)
    if counts.sum() == 0:
        raise ValueError("empty training matrix")
    return counts / counts.sum()


def generate_batch(gen: Generator, count: int, length: int, seed_dist: np.ndarray,
                   streams: SampleStreams, table: Tensor | None = None,
                   record: bool = False):
    """Sample ``count`` trajectories from scratch, seeding the first slot from
    the given distribution."""
    if table is None:
        with no_grad():
            table = gen.embed_locations(training=False)
    seeds = categorical(np.broadcast_to(seed_dist, (count, len(seed_dist))),
                        streams.seed.random(count))
    return complete_batch(gen, table, seeds[:, None], length, streams, record=record)
