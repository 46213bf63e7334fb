"""Merge-and-reduce coresets for (k, z)-clustering.

Leaves of ``leaf_size`` points are reduced by sensitivity sampling and
combined like a binary counter: two buffers on the same level are merged and
reduced into the next level.  Each reduction draws from a generator keyed by
``(seed, reduction index)`` so every reduce step sees fresh randomness.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as crng
from .errors import InputError


@dataclass
class WeightedPoints:
    coords: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.coords) != len(self.weights):
            raise InputError("coords and weights differ in length")

    @classmethod
    def unit(cls, coords) -> "WeightedPoints":
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        return cls(coords, np.ones(len(coords)))

    @classmethod
    def empty(cls, dim: int) -> "WeightedPoints":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def concat(cls, parts) -> "WeightedPoints":
        parts = list(parts)
        return cls(np.vstack([p.coords for p in parts]), np.concatenate([p.weights for p in parts]))

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class ClusteringConfig:
    k: int
    z: int = 2
    eps: float = 0.3
    delta: float = 0.1
    leaf_size: int = 256
    n_bound: int = 1 << 16
    d_prime: float | None = None
    seed: int = 0
    c0: float = 10.0
    c1: float = 8.0

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be at least 1")
        if self.z not in (1, 2):
            raise InputError(f"z must be 1 or 2, got {self.z}")
        if not 0 < self.eps < 1:
            raise InputError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.delta < 1:
            raise InputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.leaf_size < 1 or self.n_bound < 1:
            raise InputError("leaf_size and n_bound must be positive")

    @property
    def max_levels(self) -> int:
        return max(1, math.ceil(math.log2(max(self.n_bound / self.leaf_size, 1.0))))

    @property
    def eps_level(self) -> float:
        return self.eps / (2 * self.max_levels)

    def pseudo_dim(self, d: int) -> float:
        if self.d_prime is not None:
            return self.d_prime
        return d * self.k * (self.z + 1) * math.log(self.k + 1)

    def sample_size(self, total_sensitivity: float, eps_level: float, d: int) -> int:
        return math.ceil(
            self.c0 * total_sensitivity**2 / eps_level**2 * (self.pseudo_dim(d) + math.log(1 / self.delta))
        )


def sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = (X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def nearest(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of and Euclidean distance to the nearest center (ties -> lowest index)."""
    D = sq_dists(X, C)
    idx = np.argmin(D, axis=1)
    return idx, np.sqrt(D[np.arange(len(X)), idx])


def kz_cost(points: WeightedPoints, centers, z: int) -> float:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(centers) == 0:
        raise InputError("need at least one center")
    if len(points) == 0:
        return 0.0
    _, dist = nearest(points.coords, centers)
    return float(points.weights @ dist**z)


def seed_centers(points: WeightedPoints, k: int, z: int, gen: np.random.Generator) -> np.ndarray:
    """Weighted D^z seeding; returns indices into ``points``."""
    w = points.weights
    chosen = [int(gen.choice(len(points), p=w / w.sum()))]
    best = np.full(len(points), np.inf)
    for _ in range(1, k):
        _, dist = nearest(points.coords, points.coords[chosen[-1:]])
        best = np.minimum(best, dist**z)
        score = w * best
        total = score.sum()
        probs = score / total if total > 0 else w / w.sum()
        chosen.append(int(gen.choice(len(points), p=probs)))
    return np.array(chosen)


def sensitivity_bounds(points: WeightedPoints, cfg: ClusteringConfig, gen: np.random.Generator) -> np.ndarray:
    """Bicriteria sensitivity upper bounds.

    s(p) = c1 * (dist(p,B)^z / cost(B) + 1 / mass(cluster of p)) with B a
    seeded set of 2k centers polished by a few weighted mean updates.
    """
    if len(points) == 0:
        raise InputError("no points")
    B = points.coords[seed_centers(points, 2 * cfg.k, cfg.z, gen)].copy()
    w = points.weights
    for _ in range(3):
        idx, _ = nearest(points.coords, B)
        for j in range(len(B)):
            mask = idx == j
            if mask.any():
                B[j] = w[mask] @ points.coords[mask] / w[mask].sum()
    idx, dist = nearest(points.coords, B)
    cost_p = dist**cfg.z
    total = float(points.weights @ cost_p)
    mass = np.bincount(idx, weights=points.weights, minlength=len(B))
    first = cost_p / total if total > 0 else np.zeros(len(points))
    return cfg.c1 * (first + 1.0 / mass[idx])


def offline_coreset(
    points: WeightedPoints,
    cfg: ClusteringConfig,
    eps_level: float,
    gen: np.random.Generator,
    max_size: int | None = None,
) -> WeightedPoints:
    """Sensitivity sampling with replacement.

    Point p is drawn with q(p) = mu(p) s(p) / S and weighted mu(p) / (m q(p)).
    When the sample size is at least |P| the input is returned unchanged.
    """
    s = sensitivity_bounds(points, cfg, gen)
    mu = points.weights
    S = float(mu @ s)
    m = cfg.sample_size(S, eps_level, points.dim)
    if max_size is not None:
        m = min(m, max_size)
    if m >= len(points):
        return WeightedPoints(points.coords.copy(), points.weights.copy())
    q = mu * s / S
    idx = gen.choice(len(points), size=m, replace=True, p=q)
    return WeightedPoints(points.coords[idx], mu[idx] / (m * q[idx]))


Reducer = Callable[[WeightedPoints, float, np.random.Generator], WeightedPoints]


def passthrough(points: WeightedPoints, eps_level: float, gen: np.random.Generator) -> WeightedPoints:
    return points


@dataclass
class CoresetTree:
    config: ClusteringConfig
    reducer: Reducer | None = None
    levels: dict = field(init=False, default_factory=dict)
    points_seen: int = field(init=False, default=0)
    reductions: int = field(init=False, default=0)
    peak_stored: int = field(init=False, default=0)

    def __post_init__(self):
        self._pending: list[np.ndarray] = []
        self._pending_w: list[float] = []
        self.dim: int | None = None

    def _reduce(self, pts: WeightedPoints) -> WeightedPoints:
        gen = crng.generator(self.config.seed, self.reductions)
        self.reductions += 1
        if self.reducer is not None:
            return self.reducer(pts, self.config.eps_level, gen)
        return offline_coreset(pts, self.config, self.config.eps_level, gen, max_size=self.config.leaf_size)

    def insert(self, coords, weight: float = 1.0) -> None:
        x = np.asarray(coords, dtype=float).reshape(-1)
        if self.dim is None:
            self.dim = x.size
        if x.size != self.dim or not np.all(np.isfinite(x)):
            raise InputError("point has wrong dimension or non-finite coordinates")
        if not weight > 0:
            raise InputError("weights must be positive")
        self._pending.append(x)
        self._pending_w.append(float(weight))
        self.points_seen += 1
        if len(self._pending) == self.config.leaf_size:
            buf = self._reduce(WeightedPoints(np.array(self._pending), np.array(self._pending_w)))
            self._pending, self._pending_w = [], []
            level = 1
            while level in self.levels:
                buf = self._reduce(WeightedPoints.concat([self.levels.pop(level), buf]))
                level += 1
            self.levels[level] = buf
        self.peak_stored = max(self.peak_stored, self.stored_points)

    @property
    def pending(self) -> WeightedPoints:
        if not self._pending:
            return WeightedPoints.empty(self.dim or 0)
        return WeightedPoints(np.array(self._pending), np.array(self._pending_w))

    @property
    def stored_points(self) -> int:
        return len(self._pending) + sum(len(b) for b in self.levels.values())

    def occupied_levels(self) -> list[int]:
        return sorted(self.levels)

    def query(self) -> WeightedPoints:
        """Union of every live level buffer and the pending leaf."""
        if self.points_seen == 0:
            return WeightedPoints.empty(0)
        parts = [self.levels[i] for i in sorted(self.levels)]
        if self._pending:
            parts.append(self.pending)
        return WeightedPoints.concat(parts)


def _weiszfeld(X: np.ndarray, w: np.ndarray, start: np.ndarray, iters: int = 100) -> np.ndarray:
    c = start.copy()
    for _ in range(iters):
        d = np.maximum(np.linalg.norm(X - c, axis=1), 1e-12)
        coef = w / d
        new = coef @ X / coef.sum()
        if np.linalg.norm(new - c) <= 1e-12 * (1 + np.linalg.norm(c)):
            return new
        c = new
    return c


def lloyd_refine(points: WeightedPoints, k: int, z: int, seed: int = 0,
                 max_iter: int = 100, tol: float = 1e-6) -> np.ndarray:
    """Weighted D^z seeding followed by Lloyd (z=2) or Weiszfeld (z=1) steps."""
    if len(points) == 0:
        raise InputError("empty point set")
    gen = crng.generator(seed, 0xC1)
    if len(np.unique(points.coords, axis=0)) < k:
        warnings.warn("fewer distinct points than k; duplicate centers returned", RuntimeWarning)
    centers = points.coords[seed_centers(points, k, z, gen)].copy()
    X, w = points.coords, points.weights
    cost = kz_cost(points, centers, z)
    for _ in range(max_iter):
        idx, _ = nearest(X, centers)
        for j in range(k):
            mask = idx == j
            if not mask.any():
                continue
            if z == 2:
                centers[j] = w[mask] @ X[mask] / w[mask].sum()
            else:
                centers[j] = _medianish(X[mask], w[mask], centers[j])
        new = kz_cost(points, centers, z)
        if cost == 0 or abs(cost - new) <= tol * cost:
            cost = new
            break
        cost = new
    return centers


def _medianish(X: np.ndarray, w: np.ndarray, start: np.ndarray) -> np.ndarray:
    c = _weiszfeld(X, w, start)
    if len(X) <= 2000:
        # Weiszfeld can stall next to a data point; the best medoid is a safe floor
        costs = w @ np.sqrt(sq_dists(X, X))
        j = int(np.argmin(costs))
        if costs[j] < w @ np.linalg.norm(X - c, axis=1):
            return X[j].copy()
    return c
