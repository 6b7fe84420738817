import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobsim import metrics
from mobsim.metrics import (
    Histogram,
    MarkovBaseline,
    align_categorical,
    align_rank,
    continuous_histogram,
    daily_locations_histogram,
    duration_histogram,
    equal_width_edges,
    evaluate,
    global_rank_histogram,
    gyration_radii,
    individual_rank_histogram,
    jsd,
    matrix_to_trajectories,
    run_lengths,
    step_distances,
    visit_grid,
)
from mobsim.records import Dataset, Trajectory
from oracles import haversine_naive, jsd_naive, markov_counts

LN2 = math.log(2.0)


def _traj(slot_ids, user="u"):
    return Trajectory(user, dt.date(2012, 1, 1),
                      np.array(slot_ids, dtype=np.int64), ())


def _cat(masses, support=None):
    masses = np.asarray(masses, dtype=np.float64)
    support = np.arange(len(masses)) if support is None else np.asarray(support)
    return Histogram(masses, support=support)


# ---------------------------------------------------------------------------
# histograms


def test_histogram_validation():
    with pytest.raises(ValueError):
        Histogram(np.array([0.5, 0.6]), support=np.arange(2))
    with pytest.raises(ValueError):
        Histogram(np.array([-0.1, 1.1]), support=np.arange(2))
    with pytest.raises(ValueError):
        Histogram(np.array([1.0]))                         # neither support nor edges
    with pytest.raises(ValueError):
        Histogram(np.array([1.0]), support=np.arange(1), edges=np.arange(2))


def test_equal_width_edges_span_data():
    edges = equal_width_edges(np.array([2.0, 10.0]), bins=4)
    assert np.allclose(edges, [2, 4, 6, 8, 10])


def test_equal_width_edges_degenerate_range():
    edges = equal_width_edges(np.array([3.0, 3.0, 3.0]), bins=10)
    assert edges[0] == 3.0 and edges[-1] == 4.0
    h = continuous_histogram(np.array([3.0, 3.0]), edges)
    assert h.masses[0] == 1.0


def test_continuous_histogram_clamps_outliers():
    edges = np.linspace(0.0, 10.0, 11)
    h = continuous_histogram(np.array([-5.0, 0.5, 9.9, 25.0]), edges)
    assert h.masses[0] == 0.5                              # -5 clamped into bin 0
    assert h.masses[-1] == 0.5                             # 25 clamped into bin 9
    assert h.masses.sum() == pytest.approx(1.0)


def test_continuous_histogram_empty_is_all_zero():
    h = continuous_histogram(np.array([]), np.linspace(0, 1, 5))
    assert np.all(h.masses == 0.0)


# ---------------------------------------------------------------------------
# JSD


def test_jsd_frozen_hand_values():
    assert jsd(_cat([1.0, 0.0]), _cat([0.5, 0.5])) == pytest.approx(
        0.21576155433883570, abs=1e-12)
    assert jsd(_cat([0.7, 0.3]), _cat([0.2, 0.8])) == pytest.approx(
        0.13250545091704780, abs=1e-12)


def test_jsd_identity_symmetry_bound():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = rng.random(10) + 1e-12
        q = rng.random(10) + 1e-12
        hp, hq = _cat(p / p.sum()), _cat(q / q.sum())
        assert jsd(hp, hp) == pytest.approx(0.0, abs=1e-12)
        assert jsd(hp, hq) == pytest.approx(jsd(hq, hp), abs=1e-12)
        assert -1e-12 <= jsd(hp, hq) <= LN2 + 1e-12


def test_jsd_disjoint_supports_is_ln2():
    p = _cat([0.5, 0.5, 0.0, 0.0])
    q = _cat([0.0, 0.0, 0.25, 0.75])
    assert jsd(p, q) == pytest.approx(LN2, abs=1e-12)


def test_jsd_matches_naive_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        size = rng.integers(2, 20)
        p = rng.random(size)
        p[rng.random(size) < 0.3] = 0.0                    # exercise zero bins
        q = rng.random(size)
        if p.sum() == 0 or q.sum() == 0:
            continue
        p, q = p / p.sum(), q / q.sum()
        assert jsd(_cat(p), _cat(q)) == pytest.approx(jsd_naive(p, q), abs=1e-12)


def test_jsd_rejects_mismatches():
    with pytest.raises(ValueError):
        jsd(_cat([1.0]), _cat([0.5, 0.5]))
    with pytest.raises(ValueError):
        jsd(_cat([1.0, 0.0], support=[3, 4]), _cat([1.0, 0.0], support=[3, 5]))
    cont = continuous_histogram(np.array([1.0]), np.linspace(0, 2, 3))
    with pytest.raises(ValueError):
        jsd(cont, _cat([0.5, 0.5]))


@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=12),
       st.lists(st.floats(0.01, 10.0), min_size=2, max_size=12))
@settings(max_examples=80, deadline=None)
def test_jsd_properties(raw_p, raw_q):
    size = min(len(raw_p), len(raw_q))
    p = np.array(raw_p[:size]); p /= p.sum()
    q = np.array(raw_q[:size]); q /= q.sum()
    value = jsd(_cat(p), _cat(q))
    assert -1e-12 <= value <= LN2 + 1e-12
    assert value == pytest.approx(jsd(_cat(q), _cat(p)), abs=1e-12)


def test_align_categorical_by_id_union():
    p = _cat([0.6, 0.4], support=[2, 7])
    q = _cat([1.0], support=[5])
    ap, aq = align_categorical(p, q)
    assert ap.support.tolist() == [2, 5, 7]
    assert ap.masses.tolist() == [0.6, 0.0, 0.4]
    assert aq.masses.tolist() == [0.0, 1.0, 0.0]


def test_align_rank_pads_right():
    p = _cat([0.9, 0.1], support=[1, 2])
    q = _cat([0.5, 0.3, 0.2], support=[1, 2, 3])
    ap, aq = align_rank(p, q)
    assert ap.masses.tolist() == [0.9, 0.1, 0.0]
    assert aq.masses.tolist() == [0.5, 0.3, 0.2]


# ---------------------------------------------------------------------------
# trajectory statistics


def test_step_distances_include_stays():
    coords = np.array([[0.0, 0.0], [0.0, 1.0]])
    steps = step_distances([_traj([0, 0, 1])], coords)
    assert len(steps) == 2
    assert steps[0] == 0.0
    assert steps[1] == pytest.approx(haversine_naive(0, 0, 0, 1), rel=1e-9)


def test_gyration_radius_two_point_commute():
    # Half the time at each of two nearby points: radius is half the gap.
    coords = np.array([[40.0, -74.0], [40.0, -73.99]])
    gap = haversine_naive(40.0, -74.0, 40.0, -73.99)
    (radius,) = gyration_radii([_traj([0, 1] * 12)], coords)
    assert radius == pytest.approx(gap / 2, rel=1e-6)


def test_gyration_radius_stationary_is_zero():
    coords = np.array([[40.0, -74.0], [41.0, -74.0]])
    (radius,) = gyration_radii([_traj([1] * 24)], coords)
    assert radius == 0.0


def test_run_lengths_hand_cases():
    assert run_lengths(np.array([0, 0, 1, 1, 1, 0])).tolist() == [2, 3, 1]
    assert run_lengths(np.array([5])).tolist() == [1]
    assert run_lengths(np.array([2, 2, 2])).tolist() == [3]


def test_duration_histogram():
    h = duration_histogram([_traj([0, 0, 1, 2, 2, 2])], 6)
    assert h.support.tolist() == [1, 2, 3, 4, 5, 6]
    assert h.masses.tolist() == [1 / 3, 1 / 3, 1 / 3, 0, 0, 0]


def test_daily_locations_histogram():
    h = daily_locations_histogram([_traj([0, 0, 1]), _traj([2, 2, 2])], 3)
    assert h.masses.tolist() == [0.5, 0.5, 0.0]


def test_global_rank_top_selection_and_ties():
    trajs = [_traj([0, 0, 0, 1, 1, 2])]
    h = global_rank_histogram(trajs, 5, top=2)
    assert h.support.tolist() == [0, 1]                   # top 2 by visits
    assert np.allclose(h.masses, [0.6, 0.4])              # renormalized over chosen
    tie = global_rank_histogram([_traj([4, 3, 4, 3])], 5, top=1)
    assert tie.support.tolist() == [3]                    # tie goes to the lower id


def test_global_rank_disjoint_vocabularies_score_ln2():
    real = global_rank_histogram([_traj([0, 1, 0, 1])], 10, top=5)
    fake = global_rank_histogram([_traj([7, 8, 9, 7])], 10, top=5)
    assert jsd(*align_categorical(real, fake)) == pytest.approx(LN2, abs=1e-12)


def test_individual_rank_average():
    # Trajectory A: 3:1 split; trajectory B: single location.
    h = individual_rank_histogram([_traj([0, 0, 0, 1]), _traj([5, 5, 5, 5])])
    assert h.support.tolist() == [1, 2]
    # Profiles (0.75, 0.25) and (1.0, 0.0); mean (0.875, 0.125), already normal.
    assert np.allclose(h.masses, [0.875, 0.125])


def test_individual_rank_top_truncates():
    h = individual_rank_histogram([_traj(list(range(10)))], top=4)
    assert len(h.masses) == 4
    assert h.masses.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# evaluate


def _dataset(trajs, n=10):
    rng = np.random.default_rng(7)
    coords = np.column_stack([40 + 0.01 * rng.random(n), -74 + 0.01 * rng.random(n)])
    return Dataset(trajs, coords, slots_per_day=len(trajs[0].slots))


def test_evaluate_self_comparison_is_zero():
    rng = np.random.default_rng(8)
    trajs = [_traj(rng.integers(0, 10, size=24), user=f"u{i}") for i in range(12)]
    ds = _dataset(trajs)
    report = evaluate(ds, trajs)
    for name in metrics.METRIC_NAMES:
        assert report.scores[name] == pytest.approx(0.0, abs=1e-12)
    assert report.mean_jsd == pytest.approx(0.0, abs=1e-12)


def test_evaluate_returns_all_metrics_in_bounds():
    rng = np.random.default_rng(9)
    real = [_traj(rng.integers(0, 10, size=24)) for _ in range(15)]
    fake = [_traj(rng.integers(0, 10, size=24)) for _ in range(9)]
    report = evaluate(_dataset(real), fake)
    assert set(report.scores) == set(metrics.METRIC_NAMES)
    for value in report.scores.values():
        assert -1e-12 <= value <= LN2 + 1e-12


def test_evaluate_zero_step_toggle():
    real = [_traj([0, 0, 0, 1]), _traj([1, 1, 0, 0])]
    fake = [_traj([0, 1, 0, 1])]
    ds = _dataset(real)
    with_zeros = evaluate(ds, fake)
    without = evaluate(ds, fake, include_zero_steps=False)
    assert with_zeros.scores["distance"] != without.scores["distance"]


def test_evaluate_rejects_empty():
    ds = _dataset([_traj([0, 1, 2, 3])])
    with pytest.raises(ValueError):
        evaluate(ds, [])


# ---------------------------------------------------------------------------
# Markov baseline


def test_markov_rows_match_count_oracle():
    rng = np.random.default_rng(10)
    mat = rng.integers(0, 6, size=(40, 24))
    trajs = matrix_to_trajectories(mat)
    model = MarkovBaseline(trajs, 6)
    counts = markov_counts(mat, 6)
    expected = counts / counts.sum(axis=1, keepdims=True)
    assert np.allclose(model.transitions, expected, atol=1e-12)
    assert np.allclose(model.transitions.sum(axis=1), 1.0)


def test_markov_unseen_rows_fall_back_to_uniform():
    model = MarkovBaseline([_traj([0, 1, 0, 1])], 4)
    assert np.allclose(model.transitions[2], 0.25)
    assert np.allclose(model.transitions[3], 0.25)


def test_markov_initial_distribution():
    model = MarkovBaseline([_traj([2, 0]), _traj([2, 1]), _traj([1, 0])], 4)
    assert np.allclose(model.initial, [0, 1 / 3, 2 / 3, 0])


def test_markov_generate_deterministic_and_shaped():
    model = MarkovBaseline([_traj([0, 1, 2, 0]), _traj([1, 2, 0, 1])], 3)
    a = model.generate(5, seed=3)
    b = model.generate(5, seed=3)
    c = model.generate(5, seed=4)
    assert a == b and a != c
    assert all(t.slots.shape == (4,) for t in a)


def test_markov_learns_planted_kernel():
    # Fit on sticky chains; the diagonal of the fitted matrix must dominate.
    rng = np.random.default_rng(11)
    rows = []
    for _ in range(200):
        path = [int(rng.integers(0, 4))]
        for _ in range(23):
            path.append(path[-1] if rng.random() < 0.8 else int(rng.integers(0, 4)))
        rows.append(path)
    model = MarkovBaseline(matrix_to_trajectories(np.array(rows)), 4)
    assert np.diag(model.transitions).min() > 0.7


# ---------------------------------------------------------------------------
# miscellany


def test_matrix_to_trajectories_labels():
    trajs = matrix_to_trajectories(np.zeros((3, 4), dtype=np.int64), prefix="markov")
    assert [t.user for t in trajs] == ["markov00000", "markov00001", "markov00002"]


def test_visit_grid_bins_by_floor():
    coords = np.array([[40.001, -74.001], [40.002, -74.002], [40.011, -74.001]])
    rows = visit_grid([_traj([0, 1, 2, 2])], coords, cell_deg=0.01)
    # First two locations share the cell (40.00, -74.01); the third is alone.
    assert rows == [(40.0, -74.01, 2), (40.01, -74.01, 2)]


def test_write_report_format(tmp_path):
    real = [_traj([0, 1, 0, 1]), _traj([1, 1, 1, 1])]
    report = evaluate(_dataset(real), real)
    path = tmp_path / "report.txt"
    metrics.write_report(path, report)
    lines = path.read_text().splitlines()
    assert lines[0] == "jsd.distance=0.0"
    assert any(line.startswith("jsd.mean=") for line in lines)
    assert any(line.startswith("hist.i_rank.generated=") for line in lines)
