"""Location graphs built from training trajectories and coordinates.

Three directed channels share one container type:

* ``sdg``: each location points at its k nearest neighbours by great-circle
  (or planar) distance, weight 1 / (1 + d);
* ``ttg``: an edge per observed consecutive transition between distinct
  locations, weight = transition count over the training split;
* ``stg``: each location points at the k locations with the most similar
  hour-of-day visit profile, weight = 1 - W1(profile_i, profile_j) in [0, 1].

``binarize`` maps any channel to its vanilla variant (all weights 1).  No
channel stores self-edges; the attention layer adds a self-loop to every node
(kept as a flag on the graph).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

EARTH_RADIUS_KM = 6371.0


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km between coordinate pairs in degrees."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=np.float64))
                              for x in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


@dataclass(frozen=True)
class VisitDistribution:
    """A distribution over the T slots of the day for one location."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError("visit distribution must be 1-D")
        if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("visit distribution must be non-negative and sum to 1")
        object.__setattr__(self, "probs", probs)

    def positions(self) -> np.ndarray:
        """Support positions (t + 0.5) / T on the unit interval."""
        t = len(self.probs)
        return (np.arange(t) + 0.5) / t


def wasserstein_1d(a, b) -> float:
    """1-D earth mover's distance between two slot distributions.

    Both distributions live on the equispaced support (t + 0.5) / T, so the
    transport cost reduces to the mean absolute difference of the CDFs.  The
    result lies in [0, (T - 1) / T].
    """
    pa = a.probs if isinstance(a, VisitDistribution) else np.asarray(a, dtype=np.float64)
    pb = b.probs if isinstance(b, VisitDistribution) else np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ValueError(f"support sizes differ: {pa.shape} vs {pb.shape}")
    return float(np.abs(np.cumsum(pa - pb)).sum() / len(pa))


@dataclass
class LocationGraph:
    """A directed weighted graph over dense location ids.

    Edges are stored as parallel arrays.  ``k`` is the neighbour budget for
    the kNN channels (0 when not applicable) and ``attention_self_loop``
    records that downstream attention adds a weight-1 self-loop per node.
    """

    channel: str
    mode: str
    n_locations: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    k: int = 0
    attention_self_loop: bool = True

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if not (len(self.src) == len(self.dst) == len(self.weight)):
            raise ValueError("edge arrays must have equal length")
        if (self.src == self.dst).any():
            raise ValueError("self-edges are not stored; attention adds the self-loop")
        if self.mode not in ("weighted", "vanilla"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_locations)


def _top_k_rows(score: np.ndarray, k: int, largest: bool):
    """Per-row top-k column indices; ties break toward the lower column id."""
    n = score.shape[0]
    ids = np.arange(score.shape[1])
    picks = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        key = -score[i] if largest else score[i]
        order = np.lexsort((ids, key))
        picks[i] = order[:k]
    return picks


def build_sdg(coords: np.ndarray, k: int = 20, metric: str = "haversine") -> LocationGraph:
    """Spatial kNN graph: each location points at its k nearest others.

    ``metric`` is ``haversine`` (km) or ``euclidean`` (plain degrees, kept for
    parity with planar studies).  Edge weight is 1 / (1 + distance).
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    if n < 2:
        raise ValueError("need at least 2 locations")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    if metric == "haversine":
        dist = haversine_km(coords[:, 0:1], coords[:, 1:2], coords[None, :, 0], coords[None, :, 1])
    elif metric == "euclidean":
        diff = coords[:, None, :] - coords[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
    else:
        raise ValueError(f"unknown metric {metric!r}")
    np.fill_diagonal(dist, np.inf)
    picks = _top_k_rows(dist, k, largest=False)
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = picks.reshape(-1)
    weight = 1.0 / (1.0 + dist[src, dst])
    return LocationGraph("sdg", "weighted", n, src, dst, weight, k=k)


def build_ttg(trajectories, n_locations: int) -> LocationGraph:
    """Transition-count graph over consecutive slots of the trajectories."""
    counts: dict[tuple, int] = {}
    for traj in trajectories:
        slots = traj.slots
        for a, b in zip(slots[:-1], slots[1:]):
            if a != b:
                counts[(int(a), int(b))] = counts.get((int(a), int(b)), 0) + 1
    if counts:
        pairs = sorted(counts)
        src = np.array([p[0] for p in pairs], dtype=np.int64)
        dst = np.array([p[1] for p in pairs], dtype=np.int64)
        weight = np.array([counts[p] for p in pairs], dtype=np.float64)
    else:
        src = dst = np.empty(0, dtype=np.int64)
        weight = np.empty(0, dtype=np.float64)
    return LocationGraph("ttg", "weighted", n_locations, src, dst, weight)


def visit_distribution(trajectories, location: int, slots_per_day: int = 24) -> VisitDistribution:
    """Hour-of-day visit profile of one location over the given trajectories.

    Counts the raw pre-fill observations when a trajectory carries them and
    falls back to its filled slots otherwise.  Raises for a location that
    never appears.
    """
    counts = np.zeros(slots_per_day)
    for traj in trajectories:
        if traj.observed:
            for slot, loc in traj.observed:
                if loc == location:
                    counts[slot] += 1
        else:
            counts[traj.slots == location] += 1
    total = counts.sum()
    if total == 0:
        raise ValueError(f"location {location} never visited")
    return VisitDistribution(counts / total)


def visit_profile_matrix(trajectories, n_locations: int, slots_per_day: int = 24) -> np.ndarray:
    """(N, T) matrix of visit profiles; unvisited locations get a uniform row."""
    counts = np.zeros((n_locations, slots_per_day))
    for traj in trajectories:
        if traj.observed:
            for slot, loc in traj.observed:
                counts[loc, slot] += 1
        else:
            np.add.at(counts, (traj.slots, np.arange(len(traj.slots))), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    profiles = np.divide(counts, totals, out=np.full_like(counts, 1.0 / slots_per_day),
                         where=totals > 0)
    return profiles


def build_stg(profiles: np.ndarray, k: int = 20, block: int = 256) -> LocationGraph:
    """Visit-profile similarity graph.

    Pairwise score is 1 - W1 between slot profiles, so it lies in [0, 1];
    each location keeps its k highest-scoring peers (ties to the lower id).
    """
    profiles = np.asarray(profiles, dtype=np.float64)
    n, t = profiles.shape
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    cdf = np.cumsum(profiles, axis=1)
    src_all, dst_all, w_all = [], [], []
    for start in range(0, n, block):
        stop = min(start + block, n)
        dist = np.abs(cdf[start:stop, None, :] - cdf[None, :, :]).sum(axis=2) / t
        score = 1.0 - dist
        for local, i in enumerate(range(start, stop)):
            score[local, i] = -np.inf
        picks = _top_k_rows(score, k, largest=True)
        src_all.append(np.repeat(np.arange(start, stop, dtype=np.int64), k))
        dst_all.append(picks.reshape(-1))
        w_all.append(score[np.repeat(np.arange(stop - start), k), picks.reshape(-1)])
    weight = np.clip(np.concatenate(w_all), 0.0, 1.0)
    return LocationGraph("stg", "weighted", n, np.concatenate(src_all),
                         np.concatenate(dst_all), weight, k=k)


def binarize(graph: LocationGraph) -> LocationGraph:
    """Vanilla variant: identical edge set, every weight 1."""
    return replace(graph, mode="vanilla", weight=np.ones_like(graph.weight))


def save_graph(path, graph: LocationGraph):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.channel},{graph.mode},{graph.k}\n")
        for s, d, w in zip(graph.src, graph.dst, graph.weight):
            fh.write(f"{s},{d},{float(w)!r}\n")


def load_graph(path, n_locations: int) -> LocationGraph:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        channel, mode, k = header.split(",")
        src, dst, weight = [], [], []
        for line in fh:
            if line.strip():
                s, d, w = line.strip().split(",")
                src.append(int(s))
                dst.append(int(d))
                weight.append(float(w))
    return LocationGraph(channel, mode, n_locations, np.array(src, dtype=np.int64),
                         np.array(dst, dtype=np.int64), np.array(weight), k=int(k))
