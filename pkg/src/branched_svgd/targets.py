"""Benchmark target distributions exposed through log-density and score.

Both families are vectorized: ``log_density`` and ``score`` accept a single
point of shape ``(d,)`` or a batch of shape ``(n, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

WEIGHT_SUM_TOL = 1e-9


@runtime_checkable
class ScoreModel(Protocol):
    dimension: int

    def log_density(self, x: np.ndarray) -> np.ndarray | float: ...

    def score(self, x: np.ndarray) -> np.ndarray: ...


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    e = np.exp(a - m)
    return e / e.sum(axis=axis, keepdims=True)


def normalize_weights(weights: Sequence[float], n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != n:
        raise ValueError(f"got {w.size} weights for {n} components")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("mixture weights must be positive and finite")
    total = float(w.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"mixture weights sum to {total!r}, not 1")
    return w / total


def _batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ValueError(f"expected shape (d,) or (n, d), got {x.shape}")
    return x, False


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of isotropic Gaussians ``sum_i w_i N(mu_i, variance * I)``.

    Args:
        means: Component means, shape ``(K, d)``.
        variance: Shared scalar variance of every component.
        weights: Mixing weights; uniform when omitted.
    """

    means: np.ndarray
    variance: float
    weights: np.ndarray | None = None
    dimension: int = field(init=False)

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        if means.ndim == 1:
            means = means[None, :]
        if means.ndim != 2 or means.shape[0] < 1 or means.shape[1] < 1:
            raise ValueError("need at least one mean of dimension >= 1")
        if not np.all(np.isfinite(means)):
            raise ValueError("means must be finite")
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        k = means.shape[0]
        w = np.full(k, 1.0 / k) if self.weights is None else normalize_weights(self.weights, k)
        means.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variance", float(self.variance))
        object.__setattr__(self, "dimension", means.shape[1])

    def _component_logs(self, x: np.ndarray) -> np.ndarray:
        d = self.dimension
        diff = x[:, None, :] - self.means[None, :, :]
        sq = np.einsum("nkd,nkd->nk", diff, diff)
        log_norm = -0.5 * d * math.log(2.0 * math.pi * self.variance)
        return np.log(self.weights)[None, :] + log_norm - sq / (2.0 * self.variance)

    def log_density(self, x):
        xb, single = _batch(x)
        out = _logsumexp(self._component_logs(xb), axis=1)
        return float(out[0]) if single else out

    def score(self, x):
        xb, single = _batch(x)
        resp = _softmax(self._component_logs(xb), axis=1)
        out = (resp @ self.means - xb) / self.variance
        return out[0] if single else out

    def sample(self, n: int, rng) -> np.ndarray:
        gen = getattr(rng, "generator", rng)
        comp = gen.choice(len(self.weights), size=n, p=self.weights)
        noise = gen.standard_normal((n, self.dimension))
        return self.means[comp] + math.sqrt(self.variance) * noise

    def mode_centers(self) -> np.ndarray:
        return self.means


def banana_forward(x, b: float) -> np.ndarray:
    """Shear map ``(x1, x2 + b*x1**2 - 100*b, x3, ...)``, row-wise for batches."""
    x = np.array(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError("banana map requires d ≥ 2")
    x[..., 1] = x[..., 1] + b * x[..., 0] ** 2 - 100.0 * b
    return x


def banana_inverse(x, b: float) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError("banana map requires d ≥ 2")
    x[..., 1] = x[..., 1] - b * x[..., 0] ** 2 + 100.0 * b
    return x


@dataclass(frozen=True, eq=False)
class BananaComponent:
    """Multivariate t with scale ``diag(100, 1, ..., 1)`` pushed through the shear."""

    location: np.ndarray
    dof: float
    b: float

    def __post_init__(self):
        loc = np.array(self.location, dtype=np.float64).reshape(-1)
        if loc.size < 2:
            raise ValueError("banana map requires d ≥ 2")
        if not np.all(np.isfinite(loc)):
            raise ValueError("location must be finite")
        if not self.dof > 0:
            raise ValueError(f"degrees of freedom must be positive, got {self.dof}")
        if not self.b > 0:
            raise ValueError(f"nonlinearity b must be positive, got {self.b}")
        loc.setflags(write=False)
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "b", float(self.b))

    @property
    def scale_diag(self) -> np.ndarray:
        s = np.ones(self.location.size)
        s[0] = 100.0
        return s

    def log_normalizer(self) -> float:
        p = self.location.size
        r = self.dof
        log_det = math.log(100.0)
        return (
            math.lgamma((r + p) / 2.0)
            - math.lgamma(r / 2.0)
            - 0.5 * p * math.log(r * math.pi)
            - 0.5 * log_det
        )

    def log_density(self, x: np.ndarray) -> np.ndarray:
        z = banana_inverse(x, self.b) - self.location
        q = np.sum(z * z / self.scale_diag, axis=-1)
        p = self.location.size
        return self.log_normalizer() - 0.5 * (self.dof + p) * np.log1p(q / self.dof)

    def score(self, x: np.ndarray) -> np.ndarray:
        z = banana_inverse(x, self.b) - self.location
        inv_scale = 1.0 / self.scale_diag
        q = np.sum(z * z * inv_scale, axis=-1)
        p = self.location.size
        g = -((self.dof + p) / (self.dof + q))[..., None] * z * inv_scale
        # chain rule through the inverse shear: d z2 / d x1 = -2 b x1
        g[..., 0] = g[..., 0] - 2.0 * self.b * x[..., 0] * g[..., 1]
        return g

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        p = self.location.size
        g = gen.standard_normal((n, p)) * np.sqrt(self.scale_diag)
        w = gen.chisquare(self.dof, size=n) / self.dof
        z = self.location + g / np.sqrt(w)[:, None]
        return banana_forward(z, self.b)


@dataclass(frozen=True, eq=False)
class BananaTMixture:
    components: tuple[BananaComponent, ...]
    weights: np.ndarray | None = None
    dimension: int = field(init=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("need at least one component")
        dims = {c.location.size for c in comps}
        if len(dims) != 1:
            raise ValueError(f"components have mixed dimensions {sorted(dims)}")
        k = len(comps)
        w = np.full(k, 1.0 / k) if self.weights is None else normalize_weights(self.weights, k)
        w.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dimension", dims.pop())

    def _component_logs(self, x: np.ndarray) -> np.ndarray:
        return np.stack(
            [math.log(w) + c.log_density(x) for w, c in zip(self.weights, self.components)],
            axis=1,
        )

    def log_density(self, x):
        xb, single = _batch(x)
        out = _logsumexp(self._component_logs(xb), axis=1)
        return float(out[0]) if single else out

    def score(self, x):
        xb, single = _batch(x)
        resp = _softmax(self._component_logs(xb), axis=1)
        grads = np.stack([c.score(xb) for c in self.components], axis=1)
        out = np.einsum("nk,nkd->nd", resp, grads)
        return out[0] if single else out

    def sample(self, n: int, rng) -> np.ndarray:
        gen = getattr(rng, "generator", rng)
        comp = gen.choice(len(self.weights), size=n, p=self.weights)
        out = np.empty((n, self.dimension))
        for k, c in enumerate(self.components):
            idx = np.flatnonzero(comp == k)
            if idx.size:
                out[idx] = c.sample(idx.size, gen)
        return out

    def mode_centers(self) -> np.ndarray:
        return np.array([banana_forward(c.location, c.b) for c in self.components])


def finite_difference_score_oracle(model: ScoreModel, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``model.log_density`` at a single point."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    grad = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        grad[i] = (model.log_density(x + e) - model.log_density(x - e)) / (2.0 * h)
    return grad


# --- presets --------------------------------------------------------------

PAPER_BANANA_DOF = 7.0


def paper_gauss25(variance: float = 5.0) -> GaussianMixture:
    """25 components on the grid {0,2,4,6,8}^2, weights k/325 in lexicographic order."""
    grid = [0.0, 2.0, 4.0, 6.0, 8.0]
    means = [(a, b) for a in grid for b in grid]
    weights = np.arange(1, 26) / 325.0
    return GaussianMixture(np.array(means), variance, weights)


def paper_banana3(dof: float = PAPER_BANANA_DOF) -> BananaTMixture:
    comps = (
        BananaComponent((0.0, 0.0), dof, 0.03),
        BananaComponent((0.0, 5.0), dof, 0.05),
        BananaComponent((15.0, 15.0), dof, 0.03),
    )
    return BananaTMixture(comps, (0.4, 0.4, 0.2))


PRESETS = {
    "paper-gauss25": paper_gauss25,
    "paper-banana3": paper_banana3,
}


def target_from_config(spec: dict) -> GaussianMixture | BananaTMixture:
    """Build a target from a ``[target]`` config block.

    Either ``preset = "paper-gauss25" | "paper-banana3"`` (optionally with
    ``variance`` / ``dof`` overrides) or an inline ``type`` with components.
    """
    spec = dict(spec)
    if "preset" in spec:
        name = spec.pop("preset")
        if name not in PRESETS:
            raise ValueError(f"unknown target preset {name!r}; known: {sorted(PRESETS)}")
        if name == "paper-gauss25":
            return paper_gauss25(float(spec.pop("variance", 5.0)))
        return paper_banana3(float(spec.pop("dof", PAPER_BANANA_DOF)))
    kind = spec.get("type")
    if kind == "gaussian_mixture":
        return GaussianMixture(
            np.asarray(spec["means"], dtype=float), float(spec["variance"]), spec.get("weights")
        )
    if kind == "banana_t_mixture":
        locations = spec["locations"]
        k = len(locations)
        bs = spec["b"] if isinstance(spec["b"], list) else [spec["b"]] * k
        dofs = spec.get("dof", PAPER_BANANA_DOF)
        dofs = dofs if isinstance(dofs, list) else [dofs] * k
        if len(bs) != k or len(dofs) != k:
            raise ValueError("b and dof lists must match the number of locations")
        comps = tuple(BananaComponent(loc, float(r), float(b)) for loc, r, b in zip(locations, dofs, bs))
        return BananaTMixture(comps, spec.get("weights"))
    raise ValueError(f"unknown target type {kind!r}; expected gaussian_mixture or banana_t_mixture")
