"""Colored branching kernel.

One step: every explorer and the spine spawn a random number of offspring
placed around them, every pre-existing particle becomes an optimizer, all
offspring are explorers, and finally one particle (uniform over the whole
new population) is recolored as the spine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .core import Color, ParticleCloud, SeededRng, color_code

PROB_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class IntegerLaw:
    """Distribution on a finite set of non-negative integers."""

    support: tuple[int, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        support = tuple(int(v) for v in self.support)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if not support or len(support) != probs.size:
            raise ValueError("support and probabilities must be nonempty and equally long")
        if len(set(support)) != len(support):
            raise ValueError(f"duplicate values in support {support}")
        if any(v < 0 for v in support):
            raise ValueError("offspring counts must be non-negative")
        if np.any(~np.isfinite(probs)) or np.any(probs <= 0):
            raise ValueError("probabilities must be positive")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        probs = probs / total
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probabilities", tuple(probs.tolist()))
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    @classmethod
    def point_mass(cls, value: int) -> "IntegerLaw":
        return cls((value,), (1.0,))

    @classmethod
    def uniform(cls, values: Sequence[int]) -> "IntegerLaw":
        values = tuple(values)
        return cls(values, (1.0 / len(values),) * len(values))

    @classmethod
    def from_pairs(cls, pairs) -> "IntegerLaw":
        """Build from ``[(value, probability), ...]``."""
        pairs = [tuple(p) for p in pairs]
        if any(len(p) != 2 for p in pairs):
            raise ValueError("expected (value, probability) pairs")
        if any(float(v) != int(v) for v, _ in pairs):
            raise ValueError("offspring counts must be integers")
        return cls(tuple(int(v) for v, _ in pairs), tuple(float(p) for _, p in pairs))

    def to_pairs(self) -> list[list]:
        return [[v, p] for v, p in zip(self.support, self.probabilities)]

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))

    @property
    def max_value(self) -> int:
        return max(self.support)

    def is_point_mass_at(self, value: int) -> bool:
        return self.support == (value,)

    def sample(self, rng: SeededRng) -> int:
        if len(self.support) == 1:
            return self.support[0]
        u = rng.random()
        return self.support[int(np.searchsorted(self._cdf, u, side="right"))]


def sample_offspring_count(law: IntegerLaw, rng: SeededRng) -> int:
    return law.sample(rng)


class Proposal(Protocol):
    def sample(self, parent: np.ndarray, count: int, rng: SeededRng) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianProposal:
    """Isotropic Gaussian around the parent with per-coordinate std ``std``."""

    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"proposal std must be positive, got {self.std}")

    def sample(self, parent: np.ndarray, count: int, rng: SeededRng) -> np.ndarray:
        parent = np.asarray(parent, dtype=np.float64)
        return parent + self.std * rng.normal((count, parent.size))


def sample_proposal(parent, std: float, rng: SeededRng) -> np.ndarray:
    parent = np.asarray(parent, dtype=np.float64)
    return parent + std * rng.normal(parent.size)


@dataclass(frozen=True)
class OffspringLaws:
    q_E: IntegerLaw
    q_S: IntegerLaw
    proposal_std: float
    q_O: IntegerLaw = IntegerLaw.point_mass(0)

    def __post_init__(self):
        if not self.q_O.is_point_mass_at(0):
            raise ValueError("optimizers never reproduce: q_O must be the point mass at 0")
        if 0 in self.q_S.support:
            raise ValueError("the spine always reproduces: q_S must give zero probability to 0")
        if not self.proposal_std > 0:
            raise ValueError(f"proposal std must be positive, got {self.proposal_std}")

    @property
    def proposal(self) -> GaussianProposal:
        return GaussianProposal(self.proposal_std)

    def law_for(self, color: Color) -> IntegerLaw:
        return {Color.EXPLORER: self.q_E, Color.OPTIMIZER: self.q_O, Color.SPINE: self.q_S}[color]


def paper_laws(proposal_std: float) -> OffspringLaws:
    """Subcritical explorer law {0: .5, 1: .2, 2: .3} and spine law uniform on {1, 2, 3}."""
    return OffspringLaws(
        q_E=IntegerLaw((0, 1, 2), (0.5, 0.2, 0.3)),
        q_S=IntegerLaw.uniform((1, 2, 3)),
        proposal_std=proposal_std,
    )


_E, _O, _S = color_code(Color.EXPLORER), color_code(Color.OPTIMIZER), color_code(Color.SPINE)


def branch_with_parents(
    cloud: ParticleCloud, laws: OffspringLaws, rng: SeededRng, proposal: Proposal | None = None
) -> tuple[ParticleCloud, np.ndarray]:
    """Like :func:`branch_step` but also returns the parent index of every offspring.

    RNG consumption order: for each parent in index order, its offspring
    count (explorers and spine only; optimizers have none), then that
    parent's offspring positions; finally the spine index.
    """
    if cloud.count(Color.SPINE) != 1:
        raise ValueError(f"branching needs exactly one spine, cloud has {cloud.count(Color.SPINE)}")
    proposal = proposal or laws.proposal
    n = len(cloud)
    codes = cloud.color_codes
    new_positions = []
    parents = []
    for i in range(n):
        code = codes[i]
        if code == _O:
            continue
        gamma = (laws.q_S if code == _S else laws.q_E).sample(rng)
        if gamma > 0:
            new_positions.append(proposal.sample(cloud.positions[i], gamma, rng))
            parents.extend([i] * gamma)
    if new_positions:
        offspring = np.concatenate(new_positions, axis=0)
        positions = np.concatenate([cloud.positions, offspring], axis=0)
    else:
        positions = cloud.positions
    total = positions.shape[0]
    out_codes = np.full(total, _E, dtype=np.int8)
    out_codes[:n] = _O
    out_codes[int(rng.integers(0, total))] = _S
    return ParticleCloud._from_arrays(positions, out_codes), np.asarray(parents, dtype=np.intp)


def branch_step(cloud: ParticleCloud, laws: OffspringLaws, rng: SeededRng) -> ParticleCloud:
    return branch_with_parents(cloud, laws, rng)[0]
