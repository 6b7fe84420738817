import numpy as np
import pytest

from mobsim import graphs, nn, synth, training
from mobsim.discriminator import Discriminator, DiscriminatorConfig
from mobsim.generator import Generator, GeneratorConfig, generate_batch, sample_streams
from mobsim.records import trajectory_matrix
from mobsim.training import (
    TrainConfig,
    TrainingDiverged,
    adversarial_train,
    compute_rewards,
    mean_nll,
    policy_gradient_step,
    pretrain_discriminator,
    pretrain_generator,
    sequence_log_prob,
)


def _cycle_graph(n):
    src = np.arange(n)
    return graphs.LocationGraph("sdg", "weighted", n, src, (src + 1) % n,
                                np.full(n, 0.5))


def _gen(n=8, seed=0, **overrides):
    defaults = dict(n_locations=n, embed_dim=4, hidden_dim=4, channels=("sdg",),
                    dropout=0.0)
    defaults.update(overrides)
    config = GeneratorConfig(**defaults)
    return Generator(config, {"sdg": _cycle_graph(n)}, seed=seed)


def _disc(n=8, seed=0):
    return Discriminator(DiscriminatorConfig(n_locations=n, embed_dim=4,
                                             hidden_dim=4), seed=seed)


def _sticky_ids(n_locations=8, rows=48, length=24, stay=0.8, seed=0):
    planted = synth.synth_generate(synth.SynthConfig(
        n_locations=n_locations, users=rows // 4, days=4, stay_prob=stay,
        seed=seed, slots_per_day=length))
    return trajectory_matrix(planted.dataset.trajectories)


# ---------------------------------------------------------------------------
# configuration and helpers


@pytest.mark.parametrize("kwargs", [
    dict(epochs=-1),
    dict(batch_size=0),
    dict(lr=-0.1),
    dict(rollouts=0),
    dict(g_steps=0),
    dict(baseline_decay=1.0),
    dict(optimizer="rmsprop"),
])
def test_train_config_rejects(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_check_finite_names_parameter():
    gen = _gen()
    gen.params["explore/bias"].values[0] = np.inf
    with pytest.raises(TrainingDiverged, match="explore/bias"):
        training._check_finite(gen.params, "unit test")


def test_mean_nll_matches_direct_evaluation():
    gen = _gen()
    ids = np.array([[0, 1, 2, 3], [4, 4, 4, 4], [7, 6, 5, 4]])
    with nn.no_grad():
        direct, _ = gen.sequence_nll(ids)
    assert mean_nll(gen, ids, batch_size=2) == pytest.approx(direct.item(), rel=1e-12)


# ---------------------------------------------------------------------------
# pretraining


def test_pretrain_generator_reduces_nll():
    gen = _gen(seed=1)
    ids = _sticky_ids()
    before = mean_nll(gen, ids)
    log = pretrain_generator(gen, ids, TrainConfig(pretrain_epochs=8, lr=0.05,
                                                   batch_size=16, seed=0))
    after = mean_nll(gen, ids)
    assert after < before * 0.8
    assert log[0].startswith("phase=pretrain_g epoch=0 nll=")
    assert len(log) == 9


def test_pretrain_generator_without_dwell_drops_bce_term():
    ids = _sticky_ids()
    for dwell in (True, False):
        gen = _gen(seed=2, dwell=dwell)
        pretrain_generator(gen, ids, TrainConfig(pretrain_epochs=2, lr=0.05, seed=0))
        # The dwell head only trains when the branch is enabled.
        moved = not np.allclose(gen.params["dwell/weight"].values,
                                _gen(seed=2, dwell=dwell).params["dwell/weight"].values)
        assert moved == dwell


def test_pretrain_discriminator_improves_objective():
    ids = _sticky_ids()
    gen = _gen(seed=3)
    disc = _disc(seed=3)
    log = pretrain_discriminator(disc, gen, ids,
                                 TrainConfig(d_pretrain_epochs=3, lr=0.02, seed=1))
    first = float(log[0].split("d_loss=")[1])
    last = float(log[-1].split("d_loss=")[1])
    assert last > first
    assert len(log) == 3


# ---------------------------------------------------------------------------
# rewards


class _CountingDisc:
    """Stands in for the discriminator: score = share of zeros in the row."""

    def classify(self, ids):
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        return nn.constant((ids == 0).mean(axis=1))


def test_compute_rewards_shape_range_and_final_column():
    gen = _gen(seed=4)
    disc = _disc(seed=4)
    batch = generate_batch(gen, 6, 10, np.full(8, 1 / 8), sample_streams(0, "s"))
    rewards = compute_rewards(gen, disc, batch, n_rollouts=3, master_seed=0, tag="r")
    assert rewards.shape == (6, 10)
    assert np.all((rewards >= 0.0) & (rewards <= 1.0))
    with nn.no_grad():
        full = disc.classify(batch).values
    assert np.allclose(rewards[:, -1], full)


def test_compute_rewards_is_deterministic():
    gen = _gen(seed=5)
    disc = _disc(seed=5)
    batch = generate_batch(gen, 4, 8, np.full(8, 1 / 8), sample_streams(1, "s"))
    a = compute_rewards(gen, disc, batch, 4, master_seed=2, tag="r")
    b = compute_rewards(gen, disc, batch, 4, master_seed=2, tag="r")
    c = compute_rewards(gen, disc, batch, 4, master_seed=3, tag="r")
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_compute_rewards_prefix_column_alignment():
    # With a deterministic scoring stub, column l-1 is the mean stub score of
    # completions that all share the length-l prefix.
    gen = _gen(seed=6)
    batch = np.array([[0, 0, 0, 0], [1, 2, 3, 4]])
    rewards = compute_rewards(gen, _CountingDisc(), batch, n_rollouts=16,
                              master_seed=0, tag="r")
    # Row 0 starts with zeros: every completion of its length-l prefix keeps
    # at least l/L zeros, so the reward grows with the prefix of zeros.
    assert rewards[0, -1] == 1.0
    assert rewards[1, -1] == 0.0
    assert np.all(rewards[0, :-1] >= rewards[1, :-1])
    assert rewards[0, 2] >= 3 / 4 - 1e-12


# ---------------------------------------------------------------------------
# the REINFORCE estimator on a two-armed bandit


def _bandit_generator():
    """Length-2 sequences over 2 locations; the policy is softmax(explore bias).

    Zeroing every other parameter keeps the hidden state at zero, so the
    exploration distribution is exactly softmax(b) whatever the input.
    """
    gen = _gen(n=2, seed=7)
    for name, tensor in gen.params.items():
        tensor.values[:] = 0.0
    gen.params["explore/bias"].values[:] = [0.3, -0.2]
    return gen


def test_bandit_gradient_matches_per_sample_formula():
    # The tape gradient of the weighted log-likelihood must equal the closed
    # form mean((1{a=k} - pi_k) * w) computed outside the library.
    gen = _bandit_generator()
    bias = gen.params["explore/bias"].values
    pi = np.exp(bias) / np.exp(bias).sum()

    actions = np.array([0, 1, 1, 0, 1])
    batch = np.column_stack([np.zeros(5, dtype=np.int64), actions])
    fired = np.zeros((5, 1), dtype=bool)
    reward_of = np.array([0.9, 0.1])
    baseline = 0.37
    weights = (reward_of[actions] - baseline)[:, None]

    objective = sequence_log_prob(gen, batch, fired, weights)
    gen.params.zero_grad()
    objective.backward()
    got = gen.params["explore/bias"].grad

    indicator = np.column_stack([actions == 0, actions == 1]).astype(float)
    expected = ((indicator - pi) * weights).mean(axis=0)
    assert np.allclose(got, expected, atol=1e-12)


def test_bandit_estimator_is_unbiased_within_three_se():
    # Draw many actions from the policy itself; the mean estimated gradient
    # must land within 3 standard errors of the analytic policy gradient
    # pi_0 * pi_1 * (R_0 - R_1), independently of the baseline.
    gen = _bandit_generator()
    bias = gen.params["explore/bias"].values
    pi = np.exp(bias) / np.exp(bias).sum()
    reward_of = np.array([0.9, 0.1])
    baseline = 0.4
    analytic = pi[0] * pi[1] * (reward_of[0] - reward_of[1])

    total = 40000
    chunk = 8000
    grad_sum = np.zeros(2)
    sq_sum = np.zeros(2)
    for i in range(total // chunk):
        batch = generate_batch(gen, chunk, 2, np.array([1.0, 0.0]),
                               sample_streams(i, "bandit"))
        actions = batch[:, 1]
        weights = (reward_of[actions] - baseline)[:, None]
        fired = np.zeros((chunk, 1), dtype=bool)
        objective = sequence_log_prob(gen, batch, fired, weights)
        gen.params.zero_grad()
        objective.backward()
        grad_sum += gen.params["explore/bias"].grad * chunk
        # Per-sample spread for the standard error, via the closed form.
        indicator = np.column_stack([actions == 0, actions == 1]).astype(float)
        per_sample = (indicator - pi) * weights
        sq_sum += (per_sample ** 2).sum(axis=0)

    mean = grad_sum / total
    var = sq_sum / total - mean ** 2
    se = np.sqrt(var / total)
    assert abs(mean[0] - analytic) < 3 * se[0]
    assert abs(mean[1] + analytic) < 3 * se[1]


def test_policy_step_with_equal_rewards_and_matching_baseline_is_noop():
    gen = _gen(seed=8)
    before = gen.params.copy()
    batch = generate_batch(gen, 6, 6, np.full(8, 1 / 8),
                           sample_streams(0, "s"), record=True)
    ids, fired = batch
    rewards = np.full((6, 6), 0.5)
    opt = nn.Sgd(gen.params, lr=0.5)
    policy_gradient_step(gen, opt, ids, fired, rewards, baseline=0.5)
    for name, tensor in gen.params.items():
        assert np.allclose(tensor.values, before[name].values, atol=1e-15)


def test_policy_step_zero_lr_is_noop():
    gen = _gen(seed=9)
    before = gen.params.copy()
    ids, fired = generate_batch(gen, 4, 6, np.full(8, 1 / 8),
                                sample_streams(1, "s"), record=True)
    rewards = np.random.default_rng(0).random((4, 6))
    opt = nn.Sgd(gen.params, lr=0.0)
    policy_gradient_step(gen, opt, ids, fired, rewards, baseline=0.0)
    for name, tensor in gen.params.items():
        assert np.array_equal(tensor.values, before[name].values)


def test_dwell_credit_goes_to_dwell_branch():
    # A step where the dwell gate fired must propagate its weight into the
    # dwell head, not the exploration head, and vice versa.
    gen = _gen(seed=10)
    batch = np.array([[3, 3, 3]])
    weights = np.array([[1.0, 1.0]])

    fired_dwell = np.array([[False, True]])
    objective = sequence_log_prob(gen, batch, fired_dwell, weights)
    gen.params.zero_grad()
    objective.backward()
    dwell_grad = np.abs(gen.params["dwell/weight"].grad).sum()
    assert dwell_grad > 0.0

    fired_none = np.array([[False, False]])
    objective = sequence_log_prob(gen, batch, fired_none, weights)
    gen.params.zero_grad()
    objective.backward()
    assert np.abs(gen.params["dwell/weight"].grad).sum() == 0.0
    assert np.abs(gen.params["explore/weight"].grad).sum() > 0.0


# ---------------------------------------------------------------------------
# adversarial loop


def _tiny_datasets(seed=12):
    planted = synth.synth_generate(synth.SynthConfig(
        n_locations=8, users=6, days=4, stay_prob=0.6, seed=seed))
    from mobsim.records import split
    return split(planted.dataset, seed=seed)


def test_adversarial_zero_epochs_returns_current_params():
    train, valid, _ = _tiny_datasets()
    gen = _gen(seed=13)
    disc = _disc(seed=13)
    config = TrainConfig(epochs=0, seed=0)
    best_gen, best_disc, log = adversarial_train(gen, disc, train, valid, config)
    assert log == []
    for name, tensor in gen.params.items():
        assert np.array_equal(best_gen[name].values, tensor.values)
    for name, tensor in disc.params.items():
        assert np.array_equal(best_disc[name].values, tensor.values)


def test_adversarial_epoch_runs_and_logs():
    train, valid, _ = _tiny_datasets()
    gen = _gen(seed=14)
    disc = _disc(seed=14)
    config = TrainConfig(epochs=2, batch_size=8, rollouts=2, eval_count=4,
                         steps_per_epoch=2, lr=0.005, seed=3)
    best_gen, best_disc, log = adversarial_train(gen, disc, train, valid, config)
    assert len(log) == 2
    for line in log:
        assert "jsd_mean=" in line and "reward=" in line and "best=" in line
    assert "best=1" in log[0]                     # first epoch always improves on inf
    gen.params.load_values(best_gen)              # loadable snapshot
    assert gen.params.first_nonfinite() is None


def test_adversarial_is_deterministic():
    results = []
    for _ in range(2):
        train, valid, _ = _tiny_datasets(seed=20)
        gen = _gen(seed=21)
        disc = _disc(seed=21)
        config = TrainConfig(epochs=1, batch_size=8, rollouts=2, eval_count=4,
                             steps_per_epoch=2, lr=0.005, seed=4)
        best_gen, _, log = adversarial_train(gen, disc, train, valid, config)
        results.append((log, {name: t.values.copy() for name, t in best_gen.items()}))
    assert results[0][0] == results[1][0]
    for name in results[0][1]:
        assert np.array_equal(results[0][1][name], results[1][1][name])
