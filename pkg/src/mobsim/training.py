"""MLE pretraining and adversarial policy-gradient training.

The generator is pretrained by teacher forcing (sequence NLL plus the dwell
head's binary cross-entropy against the stay indicator) and then refined
with REINFORCE: per-step rewards are the discriminator's scores of Monte
Carlo completions of each prefix, an exponential moving average serves as
the baseline, and each step's realized branch (dwell Bernoulli when it
fired, exploration softmax entry otherwise) receives the credit.  The
discriminator ascends mean log D(real) + mean log(1 - D(fake)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .discriminator import Discriminator, d_loss
from .generator import (
    Generator,
    SampleStreams,
    complete_batch,
    generate_batch,
    sample_streams,
    seed_distribution,
)
from .metrics import evaluate, matrix_to_trajectories
from .records import Dataset, trajectory_matrix
from .rng import stream


class TrainingDiverged(RuntimeError):
    """A parameter went non-finite; the message names the offending step."""


@dataclass
class TrainConfig:
    epochs: int = 50               # adversarial epochs
    pretrain_epochs: int = 10
    d_pretrain_epochs: int = 3
    batch_size: int = 32
    lr: float = 0.01
    optimizer: str = "adam"
    rollouts: int = 16
    g_steps: int = 1
    d_steps: int = 1
    seed: int = 0
    baseline: bool = True
    baseline_decay: float = 0.9
    eval_count: int = 0            # trajectories generated per validation pass; 0 = |valid|
    steps_per_epoch: int = 0       # adversarial iterations per epoch; 0 = ceil(|train| / batch)

    def __post_init__(self):
        if self.epochs < 0 or self.pretrain_epochs < 0 or self.d_pretrain_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.rollouts < 1:
            raise ValueError("rollouts must be positive")
        if self.g_steps < 1 or self.d_steps < 1:
            raise ValueError("g_steps and d_steps must be positive")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must lie in [0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _check_finite(params: nn.ParamSet, where: str):
    name = params.first_nonfinite()
    if name is not None:
        raise TrainingDiverged(f"parameter {name!r} went non-finite during {where}")


def _minibatches(n: int, batch_size: int, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def mean_nll(gen: Generator, ids: np.ndarray, batch_size: int = 256) -> float:
    """Teacher-forced mean NLL per trajectory, evaluation mode."""
    total = 0.0
    with nn.no_grad():
        for start in range(0, len(ids), batch_size):
            chunk = ids[start:start + batch_size]
            nll, _ = gen.sequence_nll(chunk)
            total += nll.item() * len(chunk)
    return total / len(ids)


def pretrain_generator(gen: Generator, train_ids: np.ndarray, config: TrainConfig):
    """Teacher-forced pretraining; returns per-epoch log lines.

    Epoch 0 logs the starting NLL before any update.  The dwell BCE term is
    dropped when the generator's dwell branch is disabled.
    """
    optimizer = nn.make_optimizer(config.optimizer, gen.params, config.lr)
    shuffle_rng = stream(config.seed, "pretrain_g/shuffle")
    dropout_rng = stream(config.seed, "pretrain_g/dropout")
    log = [f"phase=pretrain_g epoch=0 nll={mean_nll(gen, train_ids)!r}"]
    for epoch in range(1, config.pretrain_epochs + 1):
        nll_sum = bce_sum = 0.0
        batches = 0
        for batch_index in _minibatches(len(train_ids), config.batch_size, shuffle_rng):
            optimizer.zero_grad()
            nll, bce = gen.sequence_nll(train_ids[batch_index], training=True, rng=dropout_rng)
            loss = nn.add(nll, bce) if gen.config.dwell else nll
            loss.backward()
            optimizer.step()
            _check_finite(gen.params, f"generator pretraining epoch {epoch}")
            nll_sum += nll.item()
            bce_sum += bce.item()
            batches += 1
        log.append(f"phase=pretrain_g epoch={epoch} nll={nll_sum / batches!r} "
                   f"dwell_bce={bce_sum / batches!r}")
    return log


def pretrain_discriminator(disc: Discriminator, gen: Generator, train_ids: np.ndarray,
                           config: TrainConfig):
    """Fit the discriminator on real batches against freshly sampled fakes."""
    optimizer = nn.make_optimizer(config.optimizer, disc.params, config.lr)
    shuffle_rng = stream(config.seed, "pretrain_d/shuffle")
    seed_dist = seed_distribution(train_ids, gen.config.n_locations)
    length = train_ids.shape[1]
    log = []
    for epoch in range(1, config.d_pretrain_epochs + 1):
        loss_sum = 0.0
        batches = 0
        for batch_index in _minibatches(len(train_ids), config.batch_size, shuffle_rng):
            streams = sample_streams(config.seed, f"pretrain_d/e{epoch}/b{batches}")
            fake = generate_batch(gen, len(batch_index), length, seed_dist, streams)
            optimizer.zero_grad()
            objective = d_loss(disc, train_ids[batch_index], fake)
            nn.neg(objective).backward()
            optimizer.step()
            _check_finite(disc.params, f"discriminator pretraining epoch {epoch}")
            loss_sum += objective.item()
            batches += 1
        log.append(f"phase=pretrain_d epoch={epoch} d_loss={loss_sum / batches!r}")
    return log


def compute_rewards(gen: Generator, disc: Discriminator, batch_ids: np.ndarray,
                    n_rollouts: int, master_seed: int, tag: str) -> np.ndarray:
    """Monte Carlo reward table for a generated batch.

    Column l-1 holds the reward of the length-l prefix: the mean
    discriminator score of ``n_rollouts`` completions for l < L, and the
    score of the full sequence for l = L.  Each prefix length uses its own
    derived random stream.
    """
    batch_ids = np.asarray(batch_ids, dtype=np.int64)
    b, length = batch_ids.shape
    rewards = np.empty((b, length))
    with nn.no_grad():
        table = gen.embed_locations(training=False)
        for l in range(1, length):
            streams = sample_streams(master_seed, f"{tag}/l{l}")
            tiled = np.repeat(batch_ids[:, :l], n_rollouts, axis=0)
            completed = complete_batch(gen, table, tiled, length, streams)
            scores = disc.classify(completed).values.reshape(b, n_rollouts)
            rewards[:, l - 1] = scores.mean(axis=1)
        rewards[:, length - 1] = disc.classify(batch_ids).values
    return rewards


def sequence_log_prob(gen: Generator, batch_ids: np.ndarray, fired: np.ndarray,
                      weights: np.ndarray, training: bool = False, rng=None):
    """Weighted sum of per-step log probabilities of the realized branches.

    For the step that produced position l+1: log of the dwell stay
    probability when the dwell Bernoulli fired, log of the exploration
    softmax entry of the chosen location otherwise.  ``weights`` is (B, L-1),
    one coefficient per step; returns the batch-mean weighted sum.
    """
    batch_ids = np.asarray(batch_ids, dtype=np.int64)
    b, length = batch_ids.shape
    table = gen.embed_locations(training=training, rng=rng)
    hidden = gen.zero_hidden(b)
    counts = np.zeros((b, gen.config.n_locations), dtype=np.int64)
    rows = np.arange(b)
    counts[rows, batch_ids[:, 0]] += 1
    total = None
    for pos in range(1, length):
        hidden = gen.gru_step(table, batch_ids[:, pos - 1], hidden)
        step_fired = fired[:, pos - 1]
        chosen = batch_ids[:, pos]
        explore_lp = nn.neg(nn.cross_entropy(gen.explore_probs(hidden), chosen))
        dwell_count = counts[rows, batch_ids[:, pos - 1]]
        damp = np.exp(-gen.config.beta * dwell_count)
        stay_prob = nn.mul(gen.dwell_sigmoid(hidden), nn.constant(damp))
        dwell_lp = nn.neg(nn.binary_cross_entropy(stay_prob, np.ones(b)))
        mask = step_fired.astype(np.float64)
        step_lp = nn.add(nn.mul(dwell_lp, nn.constant(mask)),
                         nn.mul(explore_lp, nn.constant(1.0 - mask)))
        term = nn.mul(step_lp, nn.constant(weights[:, pos - 1]))
        total = term if total is None else nn.add(total, term)
        counts[rows, chosen] += 1
    return nn.tmean(total)


def policy_gradient_step(gen: Generator, optimizer, batch_ids: np.ndarray,
                         fired: np.ndarray, rewards: np.ndarray, baseline: float,
                         rng=None, training: bool = True) -> float:
    """One REINFORCE ascent step.

    The step that produced position l+1 is credited with the reward of the
    prefix that includes its outcome (column l of the reward table), minus
    the baseline.  Returns the mean weighted log-probability objective.
    """
    weights = rewards[:, 1:] - baseline
    objective = sequence_log_prob(gen, batch_ids, fired, weights,
                                  training=training, rng=rng)
    optimizer.zero_grad()
    nn.neg(objective).backward()
    optimizer.step()
    return objective.item()


def generated_dataset(gen: Generator, count: int, length: int, seed_dist: np.ndarray,
                      streams: SampleStreams):
    ids = generate_batch(gen, count, length, seed_dist, streams)
    return matrix_to_trajectories(ids)


def adversarial_train(gen: Generator, disc: Discriminator, train: Dataset,
                      valid: Dataset, config: TrainConfig):
    """Alternate policy-gradient and discriminator steps, tracking the best
    validation mean JSD.

    Returns ``(best_gen_params, best_disc_params, log_lines)``.  With zero
    adversarial epochs the current parameters are returned unchanged.
    """
    train_ids = trajectory_matrix(train.trajectories)
    length = train_ids.shape[1]
    seed_dist = seed_distribution(train_ids, gen.config.n_locations)
    eval_count = config.eval_count or len(valid.trajectories)
    per_epoch = config.steps_per_epoch or math.ceil(len(train_ids) / config.batch_size)
    g_opt = nn.make_optimizer(config.optimizer, gen.params, config.lr)
    d_opt = nn.make_optimizer(config.optimizer, disc.params, config.lr)
    shuffle_rng = stream(config.seed, "adv/shuffle")
    dropout_rng = stream(config.seed, "adv/dropout")

    best_gen = gen.params.copy()
    best_disc = disc.params.copy()
    best_score = math.inf
    baseline = 0.0
    baseline_ready = False
    log = []

    real_pool = iter(())
    for epoch in range(1, config.epochs + 1):
        g_objective = d_objective = 0.0
        reward_mean = 0.0
        for step in range(per_epoch):
            for g in range(config.g_steps):
                tag = f"adv/e{epoch}/s{step}/g{g}"
                streams = sample_streams(config.seed, f"{tag}/sample")
                batch, fired = generate_batch(gen, config.batch_size, length, seed_dist,
                                              streams, record=True)
                rewards = compute_rewards(gen, disc, batch, config.rollouts,
                                          config.seed, f"{tag}/reward")
                if config.baseline:
                    mean_r = float(rewards.mean())
                    baseline = (mean_r if not baseline_ready
                                else config.baseline_decay * baseline
                                + (1.0 - config.baseline_decay) * mean_r)
                    baseline_ready = True
                g_objective += policy_gradient_step(gen, g_opt, batch, fired, rewards,
                                                    baseline, rng=dropout_rng)
                _check_finite(gen.params, f"policy gradient epoch {epoch} step {step}")
                reward_mean += float(rewards[:, -1].mean())
            for d in range(config.d_steps):
                tag = f"adv/e{epoch}/s{step}/d{d}"
                streams = sample_streams(config.seed, f"{tag}/sample")
                fake = generate_batch(gen, config.batch_size, length, seed_dist, streams)
                try:
                    real = next(real_pool)
                except StopIteration:
                    real_pool = _minibatches(len(train_ids), config.batch_size, shuffle_rng)
                    real = next(real_pool)
                d_opt.zero_grad()
                objective = d_loss(disc, train_ids[real], fake)
                nn.neg(objective).backward()
                d_opt.step()
                _check_finite(disc.params, f"discriminator epoch {epoch} step {step}")
                d_objective += objective.item()

        eval_streams = sample_streams(config.seed, f"adv/eval/e{epoch}")
        generated = generated_dataset(gen, eval_count, length, seed_dist, eval_streams)
        report = evaluate(valid, generated)
        score = report.mean_jsd
        marker = 0
        if score < best_score:
            best_score = score
            best_gen = gen.params.copy()
            best_disc = disc.params.copy()
            marker = 1
        per_metric = " ".join(f"jsd_{k}={v!r}" for k, v in report.scores.items())
        log.append(
            f"phase=adv epoch={epoch} g_objective={g_objective / per_epoch!r} "
            f"d_loss={d_objective / per_epoch!r} "
            f"reward={reward_mean / (per_epoch * config.g_steps)!r} "
            f"baseline={baseline!r} jsd_mean={score!r} {per_metric} best={marker}"
        )
    return best_gen, best_disc, log
