"""Empirical 2-Wasserstein distance and cloud diagnostics.

The distance between two equal-size clouds is computed exactly through a
linear assignment on squared Euclidean costs, solved with the
shortest-augmenting-path Hungarian method in O(n^3).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numba
import numpy as np

from .core import ParticleCloud, SeededRng, TraceEntry


@dataclass(frozen=True)
class AssignmentResult:
    permutation: np.ndarray  # row j is matched to column permutation[j]
    total_cost: float


@numba.njit(cache=True, nogil=True)
def _hungarian(cost):
    # Potentials u (rows) and v (columns), 1-based with a virtual column 0.
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[col] = row
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.empty(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv[:] = np.inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while True:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[match[j] - 1] = j - 1
    return perm


def solve_assignment(cost) -> AssignmentResult:
    """Permutation minimizing ``sum_j cost[j, perm[j]]``."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    if c.shape[0] == 0:
        return AssignmentResult(np.empty(0, dtype=np.int64), 0.0)
    perm = _hungarian(np.ascontiguousarray(c))
    # fsum is exactly rounded, so the total does not depend on summation order
    total = math.fsum(c[np.arange(c.shape[0]), perm].tolist())
    return AssignmentResult(perm, total)


def _points(x) -> np.ndarray:
    if isinstance(x, ParticleCloud):
        return x.positions
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x


def squared_distance_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijd,ijd->ij", diff, diff)


def wasserstein2(mu, nu) -> float:
    """Empirical 2-Wasserstein distance between equal-size point clouds.

    One-dimensional inputs are read as ``n`` points on the line.
    """
    x, y = _points(mu), _points(nu)
    if x.shape[0] != y.shape[0]:
        raise ValueError("empirical Wasserstein requires equal sample sizes")
    if x.shape[0] == 0:
        raise ValueError("empirical Wasserstein requires nonempty clouds")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    result = solve_assignment(squared_distance_matrix(x, y))
    return math.sqrt(result.total_cost / x.shape[0])


def exact_target_sampler(model, n: int, rng) -> np.ndarray:
    if n < 1:
        raise ValueError("sample size must be >= 1")
    return model.sample(n, rng)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BSVGD_THREADS", "1")))
    except ValueError:
        return 1


def w_replicates(snapshot, target_sampler: Callable[[int, SeededRng], np.ndarray], replicates: int,
                 rng: SeededRng) -> np.ndarray:
    """Distances from ``snapshot`` to ``replicates`` fresh target samples of equal size.

    Reference samples come from child streams of ``rng`` so the result is
    the same whether replicates run sequentially or on threads.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    x = _points(snapshot)
    streams = rng.spawn(replicates)
    samples = [np.asarray(target_sampler(x.shape[0], s), dtype=np.float64) for s in streams]
    workers = min(_threads(), replicates)
    if workers == 1:
        return np.array([wasserstein2(x, y) for y in samples])
    with ThreadPoolExecutor(workers) as pool:
        return np.array(list(pool.map(lambda y: wasserstein2(x, y), samples)))


def w_estimator(snapshot, target_sampler, replicates: int, rng: SeededRng) -> float:
    return float(np.mean(w_replicates(snapshot, target_sampler, replicates, rng)))


@dataclass(frozen=True)
class TrajectoryPoint:
    phase_index: int
    wall_time: float
    sample_size: int
    w_mean: float
    replicates: tuple[float, ...]


@dataclass
class DistanceTrajectory:
    points: list[TrajectoryPoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    @property
    def w_values(self) -> np.ndarray:
        return np.array([p.w_mean for p in self.points])

    @property
    def wall_times(self) -> np.ndarray:
        return np.array([p.wall_time for p in self.points])


def trajectory_report(entries: Iterable[TraceEntry], target_sampler, replicates: int, rng: SeededRng,
                      *, time_of: Callable[[TraceEntry], float] = lambda e: e.wall_time
                      ) -> DistanceTrajectory:
    """W estimate for every snapshot, with reference samples sized to that snapshot.

    Each snapshot gets its own child stream, so adding or dropping a
    snapshot does not shift the reference samples of the others.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("trace is empty")
    streams = rng.spawn(len(entries))
    points = []
    for entry, stream in zip(entries, streams):
        reps = w_replicates(entry.cloud, target_sampler, replicates, stream)
        points.append(TrajectoryPoint(entry.phase_index, time_of(entry), entry.sample_size,
                                      float(np.mean(reps)), tuple(reps.tolist())))
    return DistanceTrajectory(points)


def atom_diagnostic(cloud, tol: float) -> float:
    """Fraction of particles that have another particle closer than ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = _points(cloud)
    n = x.shape[0]
    if n < 2:
        return 0.0
    in_atom = np.zeros(n, dtype=bool)
    tol2 = tol * tol
    block = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n, block):
        sq = squared_distance_matrix(x[start:start + block], x)
        rows = np.arange(sq.shape[0])
        sq[rows, start + rows] = np.inf
        in_atom[start:start + block] = np.any(sq < tol2, axis=1)
    return float(np.count_nonzero(in_atom)) / n


def mode_coverage(cloud, mode_centers: Sequence, radius: float) -> int:
    """Number of mode centers with at least one particle within ``radius``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    x = _points(cloud)
    centers = np.asarray(mode_centers, dtype=np.float64)
    if centers.size == 0 or x.shape[0] == 0:
        return 0
    centers = centers.reshape(-1, x.shape[1])
    sq = squared_distance_matrix(centers, x)
    return int(np.count_nonzero(np.any(sq <= radius * radius, axis=1)))
