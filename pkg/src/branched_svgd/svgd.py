"""Euler-discretized Stein variational gradient descent.

All directions of one iteration are computed from that iteration's
positions (synchronous update). The run stops after ``max_iterations``
steps or once the mean particle displacement drops to the threshold.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import ParticleCloud, TraceEntry
from .kernels import GaussianKernel

SVGD_ITER = "svgd-iter"
POST_SVGD = "post-svgd"


class DivergenceError(RuntimeError):
    """Raised when positions or directions become non-finite."""

    def __init__(self, message: str = "divergent dynamics", *, iteration: int | None = None,
                 level: int | None = None):
        super().__init__(message)
        self.message = message
        self.iteration = iteration
        self.level = level

    def __str__(self) -> str:
        context = []
        if self.level is not None:
            context.append(f"level {self.level}")
        if self.iteration is not None:
            context.append(f"iteration {self.iteration}")
        return self.message + (f" ({', '.join(context)})" if context else "")


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes for the Euler scheme.

    ``constant`` uses ``e_start`` at every iteration. ``sigmoid`` decays
    from ``e_start`` towards ``e_end`` with midpoint at ``horizon / 2``::

        eps_d = e_start - (e_start - e_end) / (1 + exp(-0.01 * (d - horizon / 2)))
    """

    kind: str
    e_start: float
    e_end: float | None = None
    horizon: int | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if not self.e_start > 0:
                raise ValueError(f"constant step must be positive, got {self.e_start}")
        elif self.kind == "sigmoid":
            if self.e_end is None or self.horizon is None:
                raise ValueError("sigmoid schedule needs e_end and horizon")
            if not (self.e_start >= self.e_end > 0):
                raise ValueError(f"need e_start >= e_end > 0, got {self.e_start}, {self.e_end}")
            if self.horizon < 1:
                raise ValueError("sigmoid horizon must be >= 1")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected constant or sigmoid")

    @classmethod
    def constant(cls, eps: float) -> "StepSchedule":
        return cls("constant", eps)

    @classmethod
    def sigmoid(cls, e_start: float, e_end: float, horizon: int) -> "StepSchedule":
        return cls("sigmoid", e_start, e_end, horizon)


def _expit(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def step_size(schedule: StepSchedule, d: int) -> float:
    if d < 0 or (schedule.horizon is not None and d > schedule.horizon):
        raise ValueError(f"iteration {d} outside schedule range [0, {schedule.horizon}]")
    if schedule.kind == "constant":
        return schedule.e_start
    e_start, e_end = schedule.e_start, schedule.e_end
    return e_start - (e_start - e_end) * _expit(0.01 * (d - schedule.horizon / 2.0))


@dataclass(frozen=True)
class SvgdConfig:
    schedule: StepSchedule
    max_iterations: int = 2000
    threshold: float = 1e-3
    kernel: GaussianKernel = field(default_factory=GaussianKernel)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")

    def with_threshold(self, threshold: float) -> "SvgdConfig":
        return SvgdConfig(self.schedule, self.max_iterations, threshold, self.kernel)


@dataclass
class SvgdRunReport:
    final_positions: np.ndarray
    iterations_used: int
    final_displacement: float
    per_iteration_wall_time: list[float]
    # (iteration, cumulative algorithm seconds, positions) every `snapshot_every` steps
    snapshots: list[tuple[int, float, np.ndarray]] = field(default_factory=list)

    @property
    def wall_time(self) -> float:
        return math.fsum(self.per_iteration_wall_time)


def _as_positions(positions) -> np.ndarray:
    x = np.array(positions, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a nonempty (n, d) array of positions")
    if not np.all(np.isfinite(x)):
        raise DivergenceError("divergent dynamics: non-finite initial positions")
    return x


def svgd_directions(positions, model, kernel: GaussianKernel) -> np.ndarray:
    """Update directions for every particle, shape ``(n, d)``.

    ``phi(x_i) = 1/n * sum_j [K(x_j, x_i) * score(x_j) + grad_{x_j} K(x_j, x_i)]``
    with the Gaussian kernel gradient ``-(2/r) (x_j - x_i) K(x_j, x_i)``.
    """
    x = np.asarray(positions, dtype=np.float64)
    # overflow is reported as a DivergenceError below, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.asarray(model.score(x), dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise DivergenceError("divergent dynamics: non-finite score")
    phi = kernel.stein_directions(x, s)
    if not np.all(np.isfinite(phi)):
        raise DivergenceError()
    return phi


def svgd_direction(positions, i: int, model, kernel: GaussianKernel) -> np.ndarray:
    x = np.asarray(positions, dtype=np.float64)
    n = x.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"particle index {i} out of range for {n} particles")
    diff = x - x[i]
    k = kernel.prefactor * np.exp(-np.einsum("jd,jd->j", diff, diff) / kernel.bandwidth)
    s = np.asarray(model.score(x), dtype=np.float64)
    phi = np.einsum("j,jd->d", k, s - (2.0 / kernel.bandwidth) * diff) / n
    if not np.all(np.isfinite(phi)):
        raise DivergenceError()
    return phi


def svgd_iterate(positions, model, config: SvgdConfig, *, snapshot_every: int = 0) -> SvgdRunReport:
    """Run SVGD until ``max_iterations`` or mean displacement ``<= threshold``.

    Args:
        positions: Initial particles, shape ``(n, d)``; not modified.
        model: Object with a vectorized ``score``.
        config: Schedule, iteration cap, threshold and kernel.
        snapshot_every: If positive, keep a copy of the positions after
            every ``snapshot_every``-th iteration in ``report.snapshots``.
    """
    x = _as_positions(positions)
    if x.shape[1] != config.kernel.dimension:
        raise ValueError(f"kernel dimension {config.kernel.dimension} != particle dimension {x.shape[1]}")
    d = 0
    h = 2.0 * config.threshold
    times: list[float] = []
    snapshots = []
    elapsed = 0.0
    while d < config.max_iterations and h > config.threshold:
        t0 = time.perf_counter()
        try:
            phi = svgd_directions(x, model, config.kernel)
        except DivergenceError as exc:
            exc.iteration = d
            raise
        x_new = x + step_size(config.schedule, d) * phi
        if not np.all(np.isfinite(x_new)):
            raise DivergenceError(iteration=d)
        h = float(np.mean(np.sqrt(np.einsum("id,id->i", x_new - x, x_new - x))))
        x = x_new
        d += 1
        dt = time.perf_counter() - t0
        times.append(dt)
        elapsed += dt
        if snapshot_every > 0 and d % snapshot_every == 0:
            snapshots.append((d, elapsed, x.copy()))
    return SvgdRunReport(x, d, h, times, snapshots)


def svgd_trace(cloud: ParticleCloud, model, config: SvgdConfig, *, snapshot_every: int = 0
               ) -> tuple[list[TraceEntry], SvgdRunReport]:
    """Plain SVGD run packaged as trace entries.

    Intermediate snapshots are labelled ``svgd-iter``; the final positions
    are always the last entry, labelled ``post-svgd``.
    """
    report = svgd_iterate(cloud.positions, model, config, snapshot_every=snapshot_every)
    n = len(cloud)
    entries = []
    for it, elapsed, positions in report.snapshots:
        if it != report.iterations_used:
            entries.append(TraceEntry(len(entries), n, SVGD_ITER, elapsed, it, cloud.with_positions(positions)))
    entries.append(TraceEntry(len(entries), n, POST_SVGD, report.wall_time, report.iterations_used,
                              cloud.with_positions(report.final_positions)))
    return entries, report
