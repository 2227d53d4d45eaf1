"""Particle data model, seeded randomness and snapshot I/O.

A cloud is stored as a dense ``(n, d)`` float64 array of positions plus a
parallel array of color codes. Both arrays are marked read-only; every
operation that "modifies" a cloud returns a new one.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class Color(enum.Enum):
    """Role of a particle in the branching mechanism."""

    EXPLORER = "E"
    OPTIMIZER = "O"
    SPINE = "S"

    @classmethod
    def from_char(cls, char: str) -> "Color":
        try:
            return cls(char.strip().upper())
        except ValueError:
            raise ValueError(f"unknown color {char!r}; expected one of E, O, S") from None


_CODE = {Color.EXPLORER: 0, Color.OPTIMIZER: 1, Color.SPINE: 2}
_FROM_CODE = {v: k for k, v in _CODE.items()}


class EmptyCloudError(ValueError):
    pass


def as_position(coords) -> np.ndarray:
    """Validate and freeze a single position vector."""
    x = np.array(coords, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("position must have dimension d >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"position has non-finite coordinates: {x}")
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class Particle:
    position: np.ndarray
    color: Color

    def __post_init__(self):
        object.__setattr__(self, "position", as_position(self.position))


class ParticleCloud:
    """Ordered population of colored particles sharing one dimension.

    Args:
        positions: Array-like of shape ``(n, d)``.
        colors: Sequence of :class:`Color` of length ``n``. Defaults to all
            explorers, which is what a plain SVGD run uses (colors ignored).
    """

    __slots__ = ("_positions", "_codes")

    def __init__(self, positions, colors: Sequence[Color] | None = None):
        x = np.array(positions, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1) if x.size else x.reshape(0, 0)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise EmptyCloudError("empty cloud")
        if not np.all(np.isfinite(x)):
            raise ValueError("cloud has non-finite coordinates")
        if colors is None:
            codes = np.zeros(x.shape[0], dtype=np.int8)
        else:
            colors = list(colors)
            if len(colors) != x.shape[0]:
                raise ValueError(f"got {len(colors)} colors for {x.shape[0]} particles")
            codes = np.array([_CODE[Color(c)] for c in colors], dtype=np.int8)
        x.setflags(write=False)
        codes.setflags(write=False)
        self._positions = x
        self._codes = codes

    @classmethod
    def _from_arrays(cls, positions: np.ndarray, codes: np.ndarray) -> "ParticleCloud":
        # Trusted constructor: caller guarantees shapes and finiteness.
        obj = cls.__new__(cls)
        positions = np.array(positions, dtype=np.float64)
        codes = np.array(codes, dtype=np.int8)
        positions.setflags(write=False)
        codes.setflags(write=False)
        obj._positions = positions
        obj._codes = codes
        return obj

    @classmethod
    def from_particles(cls, particles: Iterable[Particle]) -> "ParticleCloud":
        particles = list(particles)
        if not particles:
            raise EmptyCloudError("empty cloud")
        dims = {p.position.size for p in particles}
        if len(dims) != 1:
            raise ValueError(f"particles have mixed dimensions {sorted(dims)}")
        return cls([p.position for p in particles], [p.color for p in particles])

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def color_codes(self) -> np.ndarray:
        return self._codes

    @property
    def colors(self) -> list[Color]:
        return [_FROM_CODE[int(c)] for c in self._codes]

    @property
    def dimension(self) -> int:
        return self._positions.shape[1]

    def __len__(self) -> int:
        return self._positions.shape[0]

    def __getitem__(self, index: int) -> Particle:
        return Particle(self._positions[index], _FROM_CODE[int(self._codes[index])])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParticleCloud):
            return NotImplemented
        return (
            self._positions.shape == other._positions.shape
            and np.array_equal(self._positions, other._positions)
            and np.array_equal(self._codes, other._codes)
        )

    def __repr__(self) -> str:
        return f"ParticleCloud(n={len(self)}, d={self.dimension}, spines={self.count(Color.SPINE)})"

    def count(self, color: Color) -> int:
        return int(np.count_nonzero(self._codes == _CODE[color]))

    def with_positions(self, positions) -> "ParticleCloud":
        """Same colors, new positions (same shape)."""
        positions = np.asarray(positions, dtype=np.float64)
        if positions.shape != self._positions.shape:
            raise ValueError(f"shape {positions.shape} does not match cloud {self._positions.shape}")
        if not np.all(np.isfinite(positions)):
            raise ValueError("cloud has non-finite coordinates")
        return ParticleCloud._from_arrays(positions, self._codes)

    def is_bsvgd_state(self) -> bool:
        return self.count(Color.SPINE) == 1


def color_code(color: Color) -> int:
    return _CODE[color]


def empirical_mean(cloud: ParticleCloud) -> np.ndarray:
    if len(cloud) == 0:
        raise EmptyCloudError("empty cloud")
    return as_position(cloud.positions.mean(axis=0))


def clone_with_color(cloud: ParticleCloud, index: int, new_color: Color) -> ParticleCloud:
    n = len(cloud)
    if not 0 <= index < n:
        raise IndexError(f"particle index {index} out of range for cloud of size {n}")
    codes = cloud.color_codes.copy()
    codes[index] = _CODE[new_color]
    return ParticleCloud._from_arrays(cloud.positions, codes)


class SeededRng:
    """Reproducible random stream.

    Backed by numpy's PCG64 bit generator (128-bit state). The seed is an
    unsigned 64-bit integer; identical seeds and identical call sequences
    give identical draws. Child streams from :meth:`spawn` are derived
    through ``SeedSequence`` and are independent of how much the parent
    has been consumed.
    """

    def __init__(self, seed: int | np.random.SeedSequence):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
            self.seed = None
        else:
            seed = int(seed)
            if not 0 <= seed < 2**64:
                raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
            self.seed = seed
            self._seq = np.random.SeedSequence(seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int) -> list["SeededRng"]:
        return [SeededRng(s) for s in self._seq.spawn(n)]

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def random(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def choice(self, values, p, size=None):
        return self.generator.choice(values, p=p, size=size)

    def chisquare(self, df, size=None):
        return self.generator.chisquare(df, size)


@dataclass(frozen=True)
class TraceEntry:
    """One time-stamped snapshot of a run.

    ``wall_time`` is cumulative algorithm seconds on a monotonic clock.
    ``work`` counts SVGD iterations plus branch steps so far; it is a
    deterministic stand-in for elapsed time.
    """

    phase_index: int
    level: int
    phase: str
    wall_time: float
    work: int
    cloud: ParticleCloud

    @property
    def sample_size(self) -> int:
        return len(self.cloud)


# --- snapshot CSV ---------------------------------------------------------


def write_snapshot(path: str | Path, cloud: ParticleCloud) -> None:
    """Write ``x0,...,x{d-1},color`` rows using shortest round-trip floats."""
    d = cloud.dimension
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{k}" for k in range(d)] + ["color"])
        chars = [_FROM_CODE[int(c)].value for c in cloud.color_codes]
        for row, ch in zip(cloud.positions.tolist(), chars):
            writer.writerow([repr(v) for v in row] + [ch])


def read_snapshot(path: str | Path) -> ParticleCloud:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty snapshot file") from None
        header = [h.strip() for h in header]
        has_color = bool(header) and header[-1] == "color"
        coord_cols = header[:-1] if has_color else header
        expected = [f"x{k}" for k in range(len(coord_cols))]
        if not coord_cols or coord_cols != expected:
            raise ValueError(f"{path}: bad snapshot header {header}")
        rows, colors = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[: len(coord_cols)]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            colors.append(Color.from_char(row[-1]) if has_color else Color.EXPLORER)
    if not rows:
        raise EmptyCloudError(f"{path}: empty cloud")
    return ParticleCloud(rows, colors)
