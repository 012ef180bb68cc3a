"""Covariate laws, reproducible sampling and quadrature over X.

Random streams use numpy's Philox4x64 counter-based generator keyed by a
64-bit seed.  Per-population seeds are derived with one splitmix64 step,
``derive_seed(base, i) = splitmix64(base + (i + 1) * 0x9E3779B97F4A7C15)``,
so stream ``i`` depends only on ``(base, i)`` and never on evaluation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DEFAULT_NODES = 64


def _langevin(k: float) -> float:
    """Mean of exp(k x)-weighted uniform on [-1, 1]: coth(k) - 1/k."""
    if abs(k) < 1e-3:
        return k / 3 - k ** 3 / 45 + 2 * k ** 5 / 945
    return 1.0 / math.tanh(k) - 1.0 / k


def splitmix64(z: int) -> int:
    """Finalizer of the splitmix64 generator (Steele, Lea & Flood 2014)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *path: int) -> int:
    """Child seed for stream ``path`` under ``base_seed``; nested paths mix repeatedly."""
    z = base_seed & MASK64
    for i in path:
        z = splitmix64((z + (int(i) + 1) * GOLDEN_GAMMA) & MASK64)
    return z


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & MASK64))


@dataclass(frozen=True)
class PopulationSpec:
    """Law of the scalar covariate X in one population.

    ``kind`` is ``"uniform"`` (``mean``, ``range``), ``"discrete"``
    (``points`` as ``((x, prob), ...)``) or ``"tilted"``: density
    proportional to ``exp(tilt * x)`` on ``[mean - range/2, mean + range/2]``
    (here ``mean`` is the centre of the support, not E[X]).
    """

    label: str
    kind: str = "uniform"
    mean: float = 0.0
    range: float = 2.0
    points: tuple = field(default=())
    tilt: float = 0.0

    def __post_init__(self):
        if self.kind in ("uniform", "tilted"):
            if not self.range > 0:
                raise ValueError(f"uniform range must be > 0, got {self.range}")
        elif self.kind == "discrete":
            pts = tuple((float(x), float(p)) for x, p in self.points)
            if not pts:
                raise ValueError("discrete population needs at least one point")
            probs = np.array([p for _, p in pts])
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError("discrete probabilities must be >= 0 and sum to 1")
            object.__setattr__(self, "points", pts)
        else:
            raise ValueError(f"unknown population kind {self.kind!r}")

    @classmethod
    def uniform(cls, mean: float, range: float = 2.0, label: str | None = None):
        return cls(label=label or f"mu={mean:+.2f}", kind="uniform", mean=float(mean), range=float(range))

    @classmethod
    def discrete(cls, points, label: str = "discrete"):
        return cls(label=label, kind="discrete", points=tuple(points))

    @classmethod
    def tilted(cls, center: float = 0.0, range: float = 2.0, *, tilt: float | None = None,
               target_mean: float | None = None, label: str = "tilted"):
        """Exponentially tilted uniform, given either ``tilt`` or the mean it should have."""
        if (tilt is None) == (target_mean is None):
            raise ValueError("give exactly one of tilt / target_mean")
        if tilt is None:
            half = range / 2
            u = (target_mean - center) / half
            if not -1 < u < 1:
                raise ValueError("target_mean must lie inside the support")
            tilt = 0.0 if u == 0 else brentq(lambda k: _langevin(k) - u, -1e3, 1e3, xtol=1e-15) / half
        return cls(label=label, kind="tilted", mean=float(center), range=float(range), tilt=float(tilt))

    @property
    def support(self) -> tuple[float, float]:
        if self.kind != "discrete":
            return self.mean - self.range / 2, self.mean + self.range / 2
        xs = [x for x, _ in self.points]
        return min(xs), max(xs)

    @property
    def mu_x(self) -> float:
        if self.kind == "uniform":
            return self.mean
        if self.kind == "tilted":
            half = self.range / 2
            return self.mean + half * _langevin(self.tilt * half)
        return math.fsum(x * p for x, p in self.points)

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"label": self.label, "kind": "uniform", "mean": self.mean, "range": self.range}
        if self.kind == "tilted":
            return {"label": self.label, "kind": "tilted", "center": self.mean, "range": self.range,
                    "tilt": self.tilt}
        return {"label": self.label, "kind": "discrete", "points": [list(p) for p in self.points]}

    @classmethod
    def from_dict(cls, d) -> "PopulationSpec":
        kind = d.get("kind", "uniform")
        if kind == "uniform":
            return cls.uniform(d["mean"], d.get("range", 2.0), d.get("label"))
        if kind == "tilted":
            return cls.tilted(d.get("center", 0.0), d.get("range", 2.0), tilt=d.get("tilt"),
                              target_mean=d.get("mean"), label=d.get("label", "tilted"))
        return cls.discrete(d["points"], d.get("label", "discrete"))


@dataclass(frozen=True)
class PopulationGrid:
    populations: tuple
    comparator_index: int

    def __post_init__(self):
        object.__setattr__(self, "populations", tuple(self.populations))
        if not self.populations:
            raise ValueError("population grid is empty")
        if not 0 <= self.comparator_index < len(self.populations):
            raise ValueError("comparator_index out of range")

    @property
    def comparator(self) -> PopulationSpec:
        return self.populations[self.comparator_index]

    def __len__(self):
        return len(self.populations)

    def __iter__(self):
        return iter(self.populations)

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mu_x for p in self.populations])


def default_grid(start: float = -0.5, stop: float = 0.5, step: float = 0.05,
                 range: float = 2.0) -> PopulationGrid:
    """21 uniform populations with means -0.5..0.5; comparator at mean 0."""
    n = int(round((stop - start) / step)) + 1
    # integer-indexed means avoid accumulated float drift (0.1 + 0.05 ...)
    means = [round(start + i * step, 12) for i in np.arange(n)]
    pops = [PopulationSpec.uniform(m, range, label=f"P{i:02d}") for i, m in enumerate(means)]
    comp = int(np.argmin(np.abs(means)))
    return PopulationGrid(pops, comp)


def sample_covariates(pop: PopulationSpec, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_for(seed)
    if pop.kind == "uniform":
        lo, hi = pop.support
        return lo + (hi - lo) * rng.random(n)
    if pop.kind == "tilted":
        lo, hi = pop.support
        u = rng.random(n)
        k = pop.tilt
        if k == 0:
            return lo + (hi - lo) * u
        # inverse CDF of exp(k x) on [lo, hi], written to avoid overflow
        return lo + np.log1p(u * np.expm1(k * (hi - lo))) / k
    xs = np.array([x for x, _ in pop.points])
    ps = np.array([p for _, p in pop.points])
    return xs[rng.choice(len(xs), size=n, p=ps / ps.sum())]


@lru_cache(maxsize=8)
def gauss_legendre(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def quadrature_rule(pop: PopulationSpec, n_nodes: int = DEFAULT_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights (summing to 1) representing the law of X."""
    if pop.kind == "discrete":
        return (np.array([x for x, _ in pop.points]), np.array([p for _, p in pop.points]))
    lo, hi = pop.support
    t, w = gauss_legendre(n_nodes)
    nodes = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    if pop.kind == "tilted":
        dens = np.exp(pop.tilt * (nodes - (hi if pop.tilt > 0 else lo)))
        w = w * dens
        return nodes, w / w.sum()
    return nodes, 0.5 * w


def expectation_over_x(pop: PopulationSpec, f: Callable, n_nodes: int = DEFAULT_NODES) -> float:
    """E[f(X)] under ``pop``; ``f`` must accept an array of nodes."""
    nodes, weights = quadrature_rule(pop, n_nodes)
    vals = np.asarray(f(nodes), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise FloatingPointError(f"integrand is {vals[i]} at node x={nodes[i]!r} ({pop.label})")
    return math.fsum(weights * vals)


def grid_from_means(means: Sequence[float], range: float = 2.0, comparator_index: int | None = None):
    pops = [PopulationSpec.uniform(m, range, label=f"P{i:02d}") for i, m in enumerate(means)]
    if comparator_index is None:
        comparator_index = int(np.argmin(np.abs(np.asarray(means))))
    return PopulationGrid(pops, comparator_index)
