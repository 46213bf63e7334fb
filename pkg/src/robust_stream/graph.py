"""Streaming cut sparsification by strong-connectivity sampling.

Each arriving edge is kept with probability ``min(rho / c_e, 1)`` where
``c_e`` is its strong connectivity in the current sparsifier H, and kept edges
are reweighted by ``1 / p_e``.  Exact cut oracles (Stoer-Wagner, exhaustive
enumeration for n <= 20) are included for verification.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import rng
from .errors import InputError

EXHAUSTIVE_MAX_N = 20


class Edge(NamedTuple):
    u: int
    v: int
    w: float = 1.0


def _check_edge(e, n: int | None = None) -> Edge:
    e = Edge(int(e[0]), int(e[1]), float(e[2]) if len(e) > 2 else 1.0)
    if e.u == e.v:
        raise InputError(f"self-loop at vertex {e.u}")
    if not (e.w > 0 and math.isfinite(e.w)):
        raise InputError(f"edge weight must be positive and finite, got {e.w}")
    if n is not None and not (0 <= e.u < n and 0 <= e.v < n):
        raise InputError(f"edge ({e.u}, {e.v}) has a vertex outside [0, {n})")
    return e


def adjacency(edges: Iterable) -> dict:
    """Merged weighted adjacency ``{u: {v: w}}``; parallel edges add up."""
    adj: dict = defaultdict(dict)
    for e in edges:
        u, v, w = e[0], e[1], (e[2] if len(e) > 2 else 1.0)
        adj[u][v] = adj[u].get(v, 0.0) + w
        adj[v][u] = adj[v].get(u, 0.0) + w
    return adj


def weight_matrix(n: int, edges: Iterable) -> np.ndarray:
    W = np.zeros((n, n))
    for e in edges:
        u, v, w = e[0], e[1], (e[2] if len(e) > 2 else 1.0)
        W[u, v] += w
        W[v, u] += w
    return W


def cut_value(edges: Iterable, side, n: int | None = None) -> float:
    side = set(side)
    if not side:
        raise InputError("cut side must be nonempty")
    if n is not None:
        if not side < set(range(n)):
            raise InputError("cut side must be a proper subset of the vertices")
    total = 0.0
    for e in edges:
        if (e[0] in side) != (e[1] in side):
            total += e[2] if len(e) > 2 else 1.0
    return total


def all_cut_values(n: int, edges: Iterable) -> np.ndarray:
    """Value of every cut, indexed by the bitmask of its side within 0..n-2.

    Vertex n-1 is always on the far side, so index 0 is the empty side and
    each of the 2^(n-1) - 1 cuts appears exactly once.  Built incrementally:
    cut(S + v) = cut(S) + deg(v) - 2 w(v, S).
    """
    if n < 2:
        return np.zeros(1)
    W = weight_matrix(n, edges)
    deg = W.sum(axis=1)
    cut = np.zeros(1)
    for v in range(n - 1):
        s = np.zeros(1)
        for u in range(v):
            s = np.concatenate([s, s + W[v, u]])
        cut = np.concatenate([cut, cut + deg[v] - 2 * s])
    return cut


def _components(adj: dict, verts: set) -> list[set]:
    seen: set = set()
    comps = []
    for s in sorted(verts):
        if s in seen:
            continue
        comp = {s}
        stack = [s]
        while stack:
            x = stack.pop()
            for y in adj.get(x, ()):
                if y in verts and y not in comp:
                    comp.add(y)
                    stack.append(y)
        seen |= comp
        comps.append(comp)
    return comps


def _canonical(side: set, verts: set) -> frozenset:
    other = verts - side
    return frozenset(min(sorted(side), sorted(other)))


def _stoer_wagner(adj: dict, verts: set) -> tuple[float, frozenset]:
    order = sorted(verts)
    pos = {x: i for i, x in enumerate(order)}
    k = len(order)
    W = np.zeros((k, k))
    for x in order:
        for y, w in adj.get(x, {}).items():
            if y in pos:
                W[pos[x], pos[y]] = w
    groups = [[x] for x in order]
    active = np.ones(k, dtype=bool)
    best, best_key = math.inf, None
    for remaining in range(k, 1, -1):
        start = int(np.argmax(active))
        in_a = np.zeros(k, dtype=bool)
        in_a[start] = True
        conn = W[start].copy()
        prev, last = start, start
        for _ in range(remaining - 1):
            cand = np.where(active & ~in_a, conn, -np.inf)
            nxt = int(np.argmax(cand))
            phase_cut = conn[nxt]
            prev, last = last, nxt
            in_a[nxt] = True
            conn += W[nxt]
        side = tuple(sorted(_canonical(set(groups[last]), verts)))
        tie = abs(phase_cut - best) <= 1e-12
        if phase_cut < best and not tie or tie and side < best_key:
            best, best_key = phase_cut, side
        W[prev] += W[last]
        W[:, prev] += W[:, last]
        W[prev, prev] = 0.0
        W[last] = 0.0
        W[:, last] = 0.0
        groups[prev].extend(groups[last])
        active[last] = False
    return float(best), frozenset(best_key)


def global_min_cut(edges, vertices: Iterable | None = None) -> tuple[float, frozenset]:
    """Exact weighted global minimum cut (Stoer-Wagner).

    A disconnected graph has min cut 0, witnessed by the component holding
    the smallest vertex.
    """
    adj = edges if isinstance(edges, dict) else adjacency(edges)
    verts = set(adj) if vertices is None else set(vertices)
    if len(verts) < 2:
        raise InputError("min cut needs at least two vertices")
    return _min_cut_on(adj, verts)


def _min_cut_on(adj: dict, verts: set) -> tuple[float, frozenset]:
    comps = _components(adj, verts)
    if len(comps) > 1:
        return 0.0, frozenset(comps[0])
    return _stoer_wagner(adj, verts)


def strong_connectivity(edges, u: int, v: int) -> float:
    """Largest k such that some k-strong vertex set contains both u and v.

    A set with min cut above the current min cut lambda cannot cross that cut,
    so the answer is max(lambda, answer inside the side holding u and v),
    recursing until the min cut separates u from v.
    """
    adj = edges if isinstance(edges, dict) else adjacency(edges)
    if u == v:
        raise InputError("strong connectivity needs two distinct endpoints")
    comp = next((c for c in _components(adj, set(adj) | {u, v}) if u in c), {u})
    if v not in comp:
        return 0.0
    best = 0.0
    X = comp
    while True:
        if len(X) == 2:
            return max(best, adj[u].get(v, 0.0))
        lam, side = _min_cut_on(adj, X)
        best = max(best, lam)
        if (u in side) != (v in side):
            return best
        X = set(side) if u in side else X - side


@dataclass
class SparsifierConfig:
    n: int
    m_bound: int
    eps: float = 0.5
    C: float = 4.0
    seed: int = 0
    rho: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise InputError("need at least two vertices")
        if self.m_bound < 1:
            raise InputError("m_bound must be positive")
        if not 0 < self.eps < 1:
            raise InputError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.C > 0:
            raise InputError("C must be positive")
        if self.rho is None:
            self.rho = self.C * (math.log(self.n) + math.log(self.m_bound)) / self.eps**2
        elif not self.rho > 0:
            raise InputError("rho must be positive")


@dataclass
class StreamingSparsifier:
    config: SparsifierConfig
    kept: list = field(init=False, default_factory=list)
    edges_seen: int = field(init=False, default=0)
    rng_cursor: int = field(init=False, default=0)
    exact_connectivity_calls: int = field(init=False, default=0)
    last_probability: float | None = field(init=False, default=None)

    def __post_init__(self):
        self._adj: dict = defaultdict(dict)
        self._deg: dict = defaultdict(float)

    @property
    def rho(self) -> float:
        return self.config.rho

    def connectivity(self, e: Edge) -> float:
        """c_e in H with e itself added at its original weight."""
        adj = self._adj
        old = adj[e.u].get(e.v)
        adj[e.u][e.v] = adj[e.v][e.u] = (old or 0.0) + e.w
        try:
            self.exact_connectivity_calls += 1
            return strong_connectivity(adj, e.u, e.v)
        finally:
            if old is None:
                del adj[e.u][e.v], adj[e.v][e.u]
            else:
                adj[e.u][e.v] = adj[e.v][e.u] = old

    def sample_probability(self, e: Edge) -> float:
        # c_e never exceeds the smaller weighted degree, so a saturated
        # probability can be certified without the exact decomposition
        bound = min(self._deg[e.u], self._deg[e.v]) + e.w
        if self.rho >= bound:
            return 1.0
        return min(self.rho / self.connectivity(e), 1.0)

    def process_edge(self, e) -> bool:
        e = _check_edge(e, self.config.n)
        if self.edges_seen >= self.config.m_bound:
            raise InputError(f"stream longer than m_bound={self.config.m_bound}")
        t = self.edges_seen
        p = self.sample_probability(e)
        self.last_probability = p
        if p >= 1.0:
            keep = True
        else:
            keep = rng.uniform(self.config.seed, t) < p
            self.rng_cursor += 1
        if keep:
            w = e.w / p
            self.kept.append((Edge(e.u, e.v, w), p))
            self._adj[e.u][e.v] = self._adj[e.u].get(e.v, 0.0) + w
            self._adj[e.v][e.u] = self._adj[e.v].get(e.u, 0.0) + w
            self._deg[e.u] += w
            self._deg[e.v] += w
        self.edges_seen += 1
        return keep

    def graph(self) -> list[Edge]:
        return [e for e, _ in self.kept]


@dataclass
class CutCheck:
    ok: bool
    min_ratio: float
    max_ratio: float
    worst_ratio: float
    cuts_checked: int
    exhaustive: bool
    violation_count: int
    violations: list


def _ratios(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    r = np.ones_like(g)
    nz = g > 0
    r[nz] = h[nz] / g[nz]
    r[~nz & (h > 0)] = np.inf
    return r


def sparsifier_check(G, H, eps: float, n: int, trials: int = 2000, seed: int = 0,
                     max_listed: int = 100) -> CutCheck:
    """Compare every cut (n <= 20) or sampled cuts plus G's min cut."""
    G, H = list(G), list(H)
    if n <= EXHAUSTIVE_MAX_N:
        g = all_cut_values(n, G)[1:]
        h = all_cut_values(n, H)[1:]
        masks = np.arange(1, len(g) + 1)
        r = _ratios(g, h)
        bad = np.flatnonzero(np.abs(r - 1) > eps + 1e-12)
        sides = [frozenset(i for i in range(n - 1) if int(masks[j]) >> i & 1) for j in bad[:max_listed]]
        exhaustive = True
    else:
        gen = rng.generator(seed, 0x5C)
        S = gen.random((trials, n)) < 0.5
        S = S[(S.any(1)) & (~S.all(1))]
        _, mside = global_min_cut(G, range(n))
        mc = np.zeros((1, n), dtype=bool)
        mc[0, list(mside)] = True
        S = np.vstack([S, mc])
        r = _ratios(_side_values(S, G), _side_values(S, H))
        bad = np.flatnonzero(np.abs(r - 1) > eps + 1e-12)
        sides = [frozenset(np.flatnonzero(S[j]).tolist()) for j in bad[:max_listed]]
        exhaustive = False
    finite = r[np.isfinite(r)]
    worst = r[np.argmax(np.abs(r - 1))] if r.size else 1.0
    return CutCheck(
        ok=bad.size == 0,
        min_ratio=float(finite.min()) if finite.size else math.inf,
        max_ratio=float(r.max()) if r.size else 1.0,
        worst_ratio=float(worst),
        cuts_checked=int(r.size),
        exhaustive=exhaustive,
        violation_count=int(bad.size),
        violations=sides,
    )


def _side_values(S: np.ndarray, edges: list) -> np.ndarray:
    if not edges:
        return np.zeros(len(S))
    E = np.array([(e[0], e[1]) for e in edges], dtype=int)
    w = np.array([e[2] if len(e) > 2 else 1.0 for e in edges])
    return (S[:, E[:, 0]] != S[:, E[:, 1]]) @ w


def cut_extremes(n: int, edges) -> tuple[float, float]:
    """Smallest and largest nonzero cut (exhaustive; n <= 20)."""
    vals = all_cut_values(n, edges)[1:]
    nz = vals[vals > 0]
    if nz.size == 0:
        return 0.0, 0.0
    return float(nz.min()), float(nz.max())


def _local_max_cut(n: int, W: np.ndarray) -> float:
    # single-flip local optimum, started from every vertex alone
    best = 0.0
    deg = W.sum(1)
    for start in range(n):
        side = np.zeros(n, dtype=bool)
        side[start] = True
        while True:
            same = np.where(side[None, :] == side[:, None], W, 0.0).sum(1)
            gain = 2 * same - deg
            v = int(np.argmax(gain))
            if gain[v] <= 1e-12:
                break
            side[v] = ~side[v]
        best = max(best, float(W[side][:, ~side].sum()))
    return best


def cut_condition(n: int, edges) -> float:
    """Largest over smallest cut value of G.

    Exact for n <= 20; above that the largest cut is a local-search lower
    bound, so the returned ratio never overstates kappa.
    """
    edges = list(edges)
    if n <= EXHAUSTIVE_MAX_N:
        _, hi = cut_extremes(n, edges)
        mc = float(all_cut_values(n, edges)[1:].min())
    else:
        mc, _ = global_min_cut(edges, range(n))
        hi = _local_max_cut(n, weight_matrix(n, edges))
    if mc <= 0:
        raise InputError("graph is disconnected; cut condition is unbounded")
    return hi / mc
