"""Branched SVGD: alternate SVGD refinement with the branching kernel.

Each pass refines the current cloud with SVGD at precision ``eta(n)``
(``n`` the population) and then applies one branching step. The loop runs
while the population is at most ``max_population``, so the final population
can overshoot it by up to the largest possible offspring count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .branching import OffspringLaws, branch_step
from .core import Color, ParticleCloud, SeededRng, TraceEntry
from .svgd import POST_SVGD, SVGD_ITER, DivergenceError, SvgdConfig, svgd_iterate

POST_BRANCH = "post-branch"


def precision_default(ell: int) -> float:
    """``eta(n) = 1/n``: the stopping threshold tightens as the population grows."""
    if ell < 1:
        raise ValueError(f"population must be >= 1, got {ell}")
    return 1.0 / ell


def initial_cloud(count: int, std: float, dimension: int, rng: SeededRng) -> ParticleCloud:
    """Gaussian initial cloud: first particle is the spine, the rest explorers."""
    if count < 1:
        raise ValueError("initial count must be >= 1")
    if not std > 0:
        raise ValueError("initial std must be positive")
    positions = std * rng.normal((count, dimension))
    colors = [Color.SPINE] + [Color.EXPLORER] * (count - 1)
    return ParticleCloud(positions, colors)


@dataclass(frozen=True)
class BsvgdConfig:
    svgd: SvgdConfig
    laws: OffspringLaws
    max_population: int
    initial_cloud: ParticleCloud
    seed: int
    precision: Callable[[int], float] = precision_default
    # Refine the last branched cloud so the output is an SVGD fixed point.
    final_refine: bool = True

    def __post_init__(self):
        if not self.initial_cloud.is_bsvgd_state():
            raise ValueError("initial cloud must contain exactly one spine")
        if self.max_population < len(self.initial_cloud):
            raise ValueError(
                f"max_population {self.max_population} is below the initial population "
                f"{len(self.initial_cloud)}"
            )


@dataclass
class BsvgdTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    # SVGD iterations used by each refinement phase, in order
    svgd_iterations: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def final(self) -> TraceEntry:
        return self.entries[-1]

    def population(self) -> np.ndarray:
        return np.array([e.sample_size for e in self.entries])


def run_bsvgd(model, config: BsvgdConfig, *, snapshot_every: int = 0) -> BsvgdTrace:
    """Run branched SVGD and record a snapshot after every phase.

    Args:
        model: Target with a vectorized ``score``.
        config: Run configuration; ``config.seed`` drives the branching stream.
        snapshot_every: If positive, also record the cloud every
            ``snapshot_every`` SVGD iterations inside each refinement phase
            (phase label ``svgd-iter``).
    """
    rng = SeededRng(config.seed)
    trace = BsvgdTrace()
    cloud = config.initial_cloud
    wall = 0.0
    work = 0

    def refine(cloud: ParticleCloud) -> ParticleCloud:
        nonlocal wall, work
        ell = len(cloud)
        svgd_config = config.svgd.with_threshold(config.precision(ell))
        try:
            report = svgd_iterate(cloud.positions, model, svgd_config, snapshot_every=snapshot_every)
        except DivergenceError as exc:
            exc.level = ell
            raise
        for it, elapsed, positions in report.snapshots:
            if it == report.iterations_used:
                continue
            trace.entries.append(TraceEntry(len(trace.entries), ell, SVGD_ITER, wall + elapsed,
                                            work + it, cloud.with_positions(positions)))
        wall += report.wall_time
        work += report.iterations_used
        trace.svgd_iterations.append(report.iterations_used)
        cloud = cloud.with_positions(report.final_positions)
        trace.entries.append(TraceEntry(len(trace.entries), ell, POST_SVGD, wall, work, cloud))
        return cloud

    while len(cloud) <= config.max_population:
        ell = len(cloud)
        cloud = refine(cloud)
        t0 = time.perf_counter()
        cloud = branch_step(cloud, config.laws, rng)
        wall += time.perf_counter() - t0
        work += 1
        trace.entries.append(TraceEntry(len(trace.entries), ell, POST_BRANCH, wall, work, cloud))
    if config.final_refine:
        refine(cloud)
    return trace
