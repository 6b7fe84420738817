"""Synthetic check-in datasets with planted Markov dynamics.

Each user-day is an independent chain: the first slot is uniform over the
locations, and every later slot either repeats the previous location (with
probability ``stay_prob``) or draws from the transition kernel row of the
previous location.  The ground truth used to generate a dataset is kept next
to it so estimators can be checked against it.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .records import Dataset, Trajectory
from .rng import stream

_FIRST_DAY = dt.date(2012, 1, 2)


@dataclass
class SynthConfig:
    n_locations: int = 100
    users: int = 50
    days: int = 10
    stay_prob: float = 0.0
    kernel: str = "uniform"          # uniform | uniform_offdiag | random
    seed: int = 0
    slots_per_day: int = 24
    grid_step_deg: float = 0.01      # spacing of the location grid
    origin: tuple = (40.0, -74.0)    # south-west corner of the grid

    def __post_init__(self):
        if self.n_locations < 2:
            raise ValueError("need at least 2 locations")
        if not 0.0 <= self.stay_prob <= 1.0:
            raise ValueError(f"stay_prob {self.stay_prob} outside [0, 1]")
        if self.users < 1 or self.days < 1:
            raise ValueError("users and days must be positive")
        if self.kernel not in ("uniform", "uniform_offdiag", "random"):
            raise ValueError(f"unknown kernel kind {self.kernel!r}")


@dataclass
class SynthDataset:
    """A generated dataset together with the dynamics that produced it."""

    dataset: Dataset
    kernel: np.ndarray
    stay_prob: float


def make_kernel(kind: str, n: int, rng) -> np.ndarray:
    """Build a row-stochastic transition kernel of the requested kind."""
    if kind == "uniform":
        return np.full((n, n), 1.0 / n)
    if kind == "uniform_offdiag":
        kernel = np.full((n, n), 1.0 / (n - 1))
        np.fill_diagonal(kernel, 0.0)
        return kernel
    if kind == "random":
        # Blend with uniform so every entry stays comfortably positive.
        raw = rng.random((n, n))
        raw /= raw.sum(axis=1, keepdims=True)
        return 0.5 * raw + 0.5 / n
    raise ValueError(f"unknown kernel kind {kind!r}")


def validate_kernel(kernel: np.ndarray):
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"kernel must be square, got shape {kernel.shape}")
    if (kernel < 0).any():
        raise ValueError("kernel has negative entries")
    if np.abs(kernel.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValueError("kernel rows must sum to 1")
    return kernel


def grid_coordinates(n: int, step_deg: float, origin) -> np.ndarray:
    side = math.ceil(math.sqrt(n))
    ids = np.arange(n)
    lat = origin[0] + (ids // side) * step_deg
    lon = origin[1] + (ids % side) * step_deg
    return np.column_stack([lat, lon]).astype(np.float64)


def _draw_rows(kernel_cdf: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    rows = kernel_cdf[states]
    return np.clip((u[:, None] >= rows).sum(axis=1), 0, kernel_cdf.shape[1] - 1)


def synth_generate(config: SynthConfig, kernel: np.ndarray | None = None) -> SynthDataset:
    """Generate a dataset from the planted chain; reproducible from the seed."""
    n = config.n_locations
    rng = stream(config.seed, "synth")
    if kernel is None:
        kernel = make_kernel(config.kernel, n, rng)
    kernel = validate_kernel(kernel)
    if kernel.shape[0] != n:
        raise ValueError(f"kernel is {kernel.shape[0]}x{kernel.shape[0]}, expected {n}")
    m = config.users * config.days
    t_slots = config.slots_per_day
    kernel_cdf = np.cumsum(kernel, axis=1)
    states = np.empty((m, t_slots), dtype=np.int64)
    states[:, 0] = rng.integers(0, n, size=m)
    for t in range(1, t_slots):
        stay = rng.random(m) < config.stay_prob
        drawn = _draw_rows(kernel_cdf, states[:, t - 1], rng.random(m))
        states[:, t] = np.where(stay, states[:, t - 1], drawn)
    trajectories = []
    for u in range(config.users):
        for d in range(config.days):
            row = states[u * config.days + d]
            trajectories.append(Trajectory(
                user=f"u{u:04d}",
                day=_FIRST_DAY + dt.timedelta(days=d),
                slots=row,
                observed=tuple((t, int(loc)) for t, loc in enumerate(row)),
            ))
    coords = grid_coordinates(n, config.grid_step_deg, config.origin)
    dataset = Dataset(trajectories, coords, t_slots)
    return SynthDataset(dataset, kernel, config.stay_prob)


def write_kernel(path, kernel: np.ndarray):
    with open(path, "w", encoding="utf-8") as fh:
        for row in kernel:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_kernel(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append([float(tok) for tok in line.strip().split(",")])
    return np.array(rows, dtype=np.float64)
