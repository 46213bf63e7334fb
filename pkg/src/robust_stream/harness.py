"""Two-player streaming game, attack streams and non-robust baselines.

The adversary only ever sees the algorithm's responses; the game loop hashes
every update and response into a transcript so replays can be compared
exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from . import rng
from .coreset import ClusteringConfig, CoresetTree, WeightedPoints, kz_cost, lloyd_refine, nearest, seed_centers
from .errors import ConstructionError, InputError
from .graph import Edge, SparsifierConfig, StreamingSparsifier, global_min_cut
from .linalg import WeightedRowBuffer
from .sampler import RegressionFit, RowSampler, SamplerConfig, solve_normal


class StreamingAlgorithm(Protocol):
    def update(self, payload) -> Any: ...


class AdversaryStrategy(Protocol):
    def next(self, history: Sequence) -> Any: ...


def _feed(h, obj) -> None:
    if isinstance(obj, np.ndarray):
        h.update(f"nd{obj.dtype.str}{obj.shape}".encode())
        h.update(np.ascontiguousarray(obj).tobytes())
    elif isinstance(obj, WeightedRowBuffer):
        for part in (obj.rows, obj.weights, obj.indices):
            _feed(h, part)
    elif isinstance(obj, WeightedPoints):
        _feed(h, obj.coords)
        _feed(h, obj.weights)
    elif isinstance(obj, (list, tuple)):
        h.update(f"seq{len(obj)}(".encode())
        for x in obj:
            _feed(h, x)
        h.update(b")")
    elif isinstance(obj, dict):
        _feed(h, sorted(obj.items()))
    else:
        h.update(repr(obj).encode())


def digest(obj) -> str:
    h = hashlib.sha256()
    _feed(h, obj)
    return h.hexdigest()


@dataclass
class RoundRecord:
    round: int
    update: str
    response: str
    metrics: dict


@dataclass
class GameTranscript:
    seed_algorithm: int
    seed_adversary: int
    horizon: int
    rounds: list = field(default_factory=list)
    aborted: bool = False
    error: str | None = None

    def to_jsonl(self) -> str:
        head = {k: v for k, v in asdict(self).items() if k != "rounds"}
        lines = [json.dumps(head, sort_keys=True)]
        lines += [json.dumps(asdict(r), sort_keys=True) for r in self.rounds]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "GameTranscript":
        lines = [json.loads(x) for x in text.splitlines() if x.strip()]
        out = cls(**lines[0])
        out.rounds = [RoundRecord(**r) for r in lines[1:]]
        return out


Evaluator = Callable[[int, Any, Any], dict]


def run_game(alg: StreamingAlgorithm, adv: AdversaryStrategy, horizon: int,
             evaluator: Evaluator | None = None, seed_algorithm: int = 0,
             seed_adversary: int = 0) -> GameTranscript:
    """Alternate adversary and algorithm for ``horizon`` rounds.

    At round t the adversary sees responses 0..t-1 only.  An exception from
    either side stops the game and returns the partial transcript flagged.
    """
    if horizon < 1:
        raise InputError("horizon must be at least 1")
    tr = GameTranscript(seed_algorithm, seed_adversary, horizon)
    history: list = []
    for t in range(horizon):
        try:
            u = adv.next(tuple(history))
            resp = alg.update(u)
            metrics = evaluator(t, u, resp) if evaluator else {}
        except Exception as exc:
            tr.aborted = True
            tr.error = f"round {t}: {type(exc).__name__}: {exc}"
            break
        tr.rounds.append(RoundRecord(t, digest(u), digest(resp), dict(metrics)))
        history.append(resp)
    return tr


# adapters and strategies

class SamplerAlgorithm:
    """Row sampler whose response is the current weighted embedding."""

    def __init__(self, sampler: RowSampler):
        self.sampler = sampler
        self.last_decision = None

    def update(self, row) -> WeightedRowBuffer:
        self.last_decision = self.sampler.process_row(row)
        return self.sampler.current_embedding()


class SparsifierAlgorithm:
    """Sparsifier whose response is the current reweighted edge list."""

    def __init__(self, sparsifier: StreamingSparsifier):
        self.sparsifier = sparsifier

    def update(self, edge) -> tuple:
        self.sparsifier.process_edge(edge)
        return tuple(self.sparsifier.graph())


class ObliviousAdversary:
    def __init__(self, payloads):
        self.payloads = list(payloads)

    def next(self, history):
        return self.payloads[len(history)]


class OrthogonalProbeAdversary:
    """Submits a unit row orthogonal to the span of the last embedding.

    Once the span is full the probe is an arbitrary unit row.
    """

    def __init__(self, d: int, seed: int = 0):
        if d < 1:
            raise InputError("d must be at least 1")
        self.d = d
        self.seed = seed

    def next(self, history):
        g = rng.generator(self.seed, len(history)).standard_normal(self.d)
        if history and len(history[-1]):
            rows = np.asarray(history[-1].rows)
            _, s, vt = np.linalg.svd(rows, full_matrices=False)
            basis = vt[s > 1e-10 * s[0]]
            resid = g - basis.T @ (basis @ g)
            if np.linalg.norm(resid) > 1e-8 * np.linalg.norm(g):
                g = resid
        return g / np.linalg.norm(g)


class LightestCutAdversary:
    """Feeds edges from ``pool`` that cross the current lightest cut of H."""

    def __init__(self, n: int, pool, seed: int = 0):
        self.n = n
        self.remaining = [Edge(*e) for e in pool]
        self.seed = seed

    def next(self, history):
        gen = rng.generator(self.seed, len(history))
        side = frozenset({0})
        if history and history[-1]:
            _, side = global_min_cut(list(history[-1]), range(self.n))
        crossing = [i for i, e in enumerate(self.remaining) if (e.u in side) != (e.v in side)]
        choices = crossing or list(range(len(self.remaining)))
        return self.remaining.pop(choices[int(gen.integers(len(choices)))])


# sketch baseline and attack streams

class SignSketch:
    """Dense +-1 sketch S (m x n_bound) accumulating S @ A row by row."""

    def __init__(self, m: int, n_bound: int, cols: int, seed: int = 0):
        if m < 1 or n_bound < 1 or cols < 1:
            raise InputError("m, n_bound and cols must be positive")
        self.m, self.n_bound, self.cols = m, n_bound, cols
        self.entries = rng.generator(seed, 0x5161).choice(np.array([-1.0, 1.0]), size=(m, n_bound))
        self.accumulated = np.zeros((m, cols))
        self.rows_seen = 0
        self.row_scale = 0.0

    def update(self, row) -> None:
        row = np.asarray(row, dtype=float).reshape(-1)
        if row.size != self.cols:
            raise InputError(f"row has {row.size} entries, expected {self.cols}")
        if self.rows_seen >= self.n_bound:
            raise InputError(f"stream longer than n_bound={self.n_bound}")
        self.accumulated += np.outer(self.entries[:, self.rows_seen], row)
        self.rows_seen += 1
        self.row_scale = max(self.row_scale, float(np.abs(row).max()))


def sketch_regress(sk: SignSketch) -> RegressionFit:
    """Least squares on the sketched system (S A) x ~ S b.

    A sketch annihilated to rounding level is treated as exactly zero and
    gives the zero vector, flagged.
    """
    acc = sk.accumulated
    if np.abs(acc).max(initial=0.0) <= 1e-9 * max(sk.row_scale, 1e-300) * math.sqrt(max(sk.rows_seen, 1)):
        return RegressionFit(np.zeros(sk.cols - 1), True)
    X, y = acc[:, :-1], acc[:, -1]
    return solve_normal(X.T @ X, X.T @ y)


def gaussian_regression_rows(n: int, d: int, noise: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows [x, y] with y = x . beta + noise; returns (rows, beta)."""
    gen = rng.generator(seed, 0xB0)
    X = gen.standard_normal((n, d))
    beta = gen.standard_normal(d)
    y = X @ beta + noise * gen.standard_normal(n)
    return np.column_stack([X, y]), beta


def kernel_attack_stream(S: SignSketch, batches: int, batch_size: int, seed: int = 0,
                         noise: float = 0.1) -> np.ndarray:
    """Regression rows whose columns lie in the null space of S.

    The zero-padded columns satisfy S A = 0 up to 1e-9 * max|A|.
    """
    n = batches * batch_size
    if n > S.n_bound:
        raise InputError("batches * batch_size exceeds the sketch's n_bound")
    Sn = S.entries[:, :n]
    _, sv, vt = np.linalg.svd(Sn, full_matrices=False)
    Q = vt[sv > 1e-10 * sv[0]].T
    if Q.shape[1] >= n:
        raise ConstructionError("sketch has a trivial null space on this stream length")
    A, _ = gaussian_regression_rows(n, S.cols - 1, noise, seed)
    for _ in range(2):
        A = A - Q @ (Q.T @ A)
    if np.abs(Sn @ A).max() > 1e-9 * np.abs(A).max():
        raise ConstructionError("null-space projection did not reach 1e-9 residual")
    return A


def distant_cluster_stream(batches: int, batch_size: int, L: float, seed: int = 0,
                           final_batch_size: int | None = None) -> list[np.ndarray]:
    """Standard normal 2-d batches; the last one is centred at (L, L)."""
    if batches < 2:
        raise InputError("need at least two batches")
    gen = rng.generator(seed, 0xD1)
    out = [gen.standard_normal((batch_size, 2)) for _ in range(batches - 1)]
    out.append(gen.standard_normal((final_batch_size or batch_size, 2)) + L)
    return out


CONSTELLATION = np.array([[1.0, -1.0], [-1.0, 1.0], [2.0, -2.0], [-2.0, 2.0]])


def regression_flip_stream(batches: int, batch_size: int, L: float, seed: int = 0,
                           noise: float = 0.05) -> list[np.ndarray]:
    """Points (x, y) around a slope -1 constellation, last batch near (L, L)."""
    if batches < 2:
        raise InputError("need at least two batches")
    gen = rng.generator(seed, 0xF1)
    out = []
    for _ in range(batches - 1):
        pts = CONSTELLATION[gen.integers(4, size=batch_size)].copy()
        pts[:, 1] += noise * gen.standard_normal(batch_size)
        out.append(pts)
    out.append(L + noise * gen.standard_normal((batch_size, 2)))
    return out


# baselines

@dataclass
class DecayKMeans:
    """Discounted mini-batch k-means (the classic streaming k-means update)."""

    k: int
    decay: float = 1.0
    seed: int = 0
    centers: np.ndarray | None = None
    counts: np.ndarray | None = None

    def update(self, batch) -> None:
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        if len(batch) == 0:
            return
        if self.centers is None:
            idx = seed_centers(WeightedPoints.unit(batch), self.k, 2, rng.generator(self.seed, 0xDC))
            self.centers = batch[idx].copy()
            self.counts = np.zeros(self.k)
        self.centers, self.counts = decay_kmeans_update(self.centers, self.counts, batch, self.decay)


def decay_kmeans_update(centers, counts, batch, decay: float):
    if not 0 <= decay <= 1:
        raise InputError("decay must lie in [0, 1]")
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    centers = np.array(centers, dtype=float)
    counts = np.array(counts, dtype=float)
    if len(batch) == 0:
        return centers, counts
    idx, _ = nearest(batch, centers)
    for j in range(len(centers)):
        mask = idx == j
        m = int(mask.sum())
        old = counts[j] * decay
        if m:
            centers[j] = (centers[j] * old + batch[mask].sum(0)) / (old + m)
        counts[j] = old + m
    return centers, counts


@dataclass
class SgdState:
    coef: np.ndarray
    diverged: bool = False


def sgd_regress_update(state: SgdState, X, y, step: float) -> SgdState:
    """Per-sample least-mean-squares steps on the squared loss."""
    if step < 0:
        raise InputError("step must be nonnegative")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    w = state.coef.copy()
    if state.diverged or step == 0:
        return SgdState(w, state.diverged)
    for x, t in zip(X, y):
        nxt = w - step * 2 * (w @ x - t) * x
        if not np.all(np.isfinite(nxt)) or np.linalg.norm(nxt) > 1e12:
            return SgdState(w, True)
        w = nxt
    return SgdState(w, False)


# experiments

def prefix_loss(rows: np.ndarray, coef: np.ndarray) -> float:
    """Mean squared residual of y ~ X coef over augmented rows [X, y]."""
    r = rows[:, :-1] @ coef - rows[:, -1]
    return float(np.mean(r * r))


def ls_coef(rows: np.ndarray) -> np.ndarray:
    X, y = rows[:, :-1], rows[:, -1]
    return solve_normal(X.T @ X, X.T @ y).coef


@dataclass
class ExperimentResult:
    series: dict
    summary: dict


@dataclass(frozen=True)
class FlipConfig:
    batches: int = 20
    batch_size: int = 50
    L: float | None = None
    noise: float = 0.05
    sgd_step: float = 0.01
    C: float = 40.0
    eps: float = 0.5
    seed_algorithm: int = 0
    seed_adversary: int = 0

    @property
    def L_value(self) -> float:
        return 10 * math.sqrt(self.batches) if self.L is None else self.L


def run_regression_flip(cfg: FlipConfig) -> ExperimentResult:
    stream = regression_flip_stream(cfg.batches, cfg.batch_size, cfg.L_value, cfg.seed_adversary, cfg.noise)
    n = cfg.batches * cfg.batch_size
    sampler = RowSampler(SamplerConfig(dim=2, n_bound=n, p=2, eps=cfg.eps, C=cfg.C, seed=cfg.seed_algorithm))
    sgd = SgdState(np.zeros(1))
    names = ("robust_slope", "baseline_slope", "optimal_slope", "robust_loss", "baseline_loss")
    series = {k: [] for k in names}
    seen = []
    for batch in stream:
        for row in batch:
            sampler.process_row(row)
        sgd = sgd_regress_update(sgd, batch[:, :1], batch[:, 1], cfg.sgd_step)
        seen.append(batch)
        rows = np.vstack(seen)
        t = len(rows)
        robust = sampler.regress().coef
        series["robust_slope"].append((t, float(robust[0])))
        series["baseline_slope"].append((t, float(sgd.coef[0])))
        series["optimal_slope"].append((t, float(ls_coef(rows)[0])))
        series["robust_loss"].append((t, prefix_loss(rows, robust)))
        series["baseline_loss"].append((t, prefix_loss(rows, sgd.coef)))
    opt = np.array([v for _, v in series["optimal_slope"]])
    rob = np.array([v for _, v in series["robust_slope"]])
    summary = {
        "L": cfg.L_value,
        "final_robust_slope": float(rob[-1]),
        "final_baseline_slope": series["baseline_slope"][-1][1],
        "final_optimal_slope": float(opt[-1]),
        "max_robust_rel_error": float(np.max(np.abs(rob - opt) / np.abs(opt))),
        "baseline_post_batch_error": abs(series["baseline_slope"][-1][1] - float(opt[-1])),
        "baseline_diverged": sgd.diverged,
        "sampled_rows": len(sampler.buffer),
        "warnings": sampler.warnings,
    }
    return ExperimentResult(series, summary)


@dataclass(frozen=True)
class ClusterAttackConfig:
    batches: int = 50
    batch_size: int = 40
    final_batch_size: int = 10
    L: float = 100.0
    k: int = 2
    z: int = 2
    eps: float = 0.3
    leaf_size: int = 200
    decay: float = 1.0
    seed_algorithm: int = 0
    seed_adversary: int = 0


def run_distant_cluster(cfg: ClusterAttackConfig) -> ExperimentResult:
    stream = distant_cluster_stream(cfg.batches, cfg.batch_size, cfg.L, cfg.seed_adversary, cfg.final_batch_size)
    n = sum(len(b) for b in stream)
    tree = CoresetTree(ClusteringConfig(k=cfg.k, z=cfg.z, eps=cfg.eps, leaf_size=cfg.leaf_size,
                                        n_bound=n, seed=cfg.seed_algorithm))
    base = DecayKMeans(cfg.k, cfg.decay, cfg.seed_algorithm)
    series = {"robust_loss": [], "baseline_loss": []}
    seen = []
    robust = None
    for batch in stream:
        for x in batch:
            tree.insert(x)
        base.update(batch)
        seen.append(batch)
        full = WeightedPoints.unit(np.vstack(seen))
        robust = lloyd_refine(tree.query(), cfg.k, cfg.z, seed=cfg.seed_algorithm)
        t = len(full)
        series["robust_loss"].append((t, kz_cost(full, robust, cfg.z) / t))
        series["baseline_loss"].append((t, kz_cost(full, base.centers, cfg.z) / t))
    far = np.array([cfg.L, cfg.L])
    summary = {
        "robust_centers": robust.tolist(),
        "baseline_centers": base.centers.tolist(),
        "robust_far_distance": float(np.min(np.linalg.norm(robust - far, axis=1))),
        "baseline_max_origin_distance": float(np.max(np.linalg.norm(base.centers, axis=1))),
        "coreset_size": len(tree.query()),
        "peak_stored": tree.peak_stored,
    }
    return ExperimentResult(series, summary)


@dataclass(frozen=True)
class SketchAttackConfig:
    n: int = 2000
    d: int = 10
    m: int = 60
    batches: int = 20
    noise: float = 0.1
    attack: bool = True
    C: float = 40.0
    eps: float = 0.5
    seed_algorithm: int = 0
    seed_adversary: int = 0


def run_sketch_attack(cfg: SketchAttackConfig) -> ExperimentResult:
    if cfg.n % cfg.batches:
        raise InputError("n must be a multiple of batches")
    sk = SignSketch(cfg.m, cfg.n, cfg.d + 1, cfg.seed_algorithm)
    if cfg.attack:
        # the adversary knows S; this is exactly the non-robust setting
        A = kernel_attack_stream(sk, cfg.batches, cfg.n // cfg.batches, cfg.seed_adversary, cfg.noise)
    else:
        A, _ = gaussian_regression_rows(cfg.n, cfg.d, cfg.noise, cfg.seed_adversary)
    sampler = RowSampler(SamplerConfig(dim=cfg.d + 1, n_bound=cfg.n, p=2, eps=cfg.eps, C=cfg.C,
                                       seed=cfg.seed_algorithm))
    series = {"robust_loss": [], "baseline_loss": []}
    step = cfg.n // cfg.batches
    for start in range(0, cfg.n, step):
        for row in A[start:start + step]:
            sk.update(row)
            sampler.process_row(row)
        rows = A[: start + step]
        t = len(rows)
        series["robust_loss"].append((t, prefix_loss(rows, sampler.regress().coef)))
        series["baseline_loss"].append((t, prefix_loss(rows, sketch_regress(sk).coef)))
    rl, bl = series["robust_loss"][-1][1], series["baseline_loss"][-1][1]
    summary = {
        "sketch_residual": float(np.abs(sk.entries[:, : cfg.n] @ A).max()),
        "max_abs_A": float(np.abs(A).max()),
        "final_robust_loss": rl,
        "final_baseline_loss": bl,
        "loss_ratio": bl / rl if rl > 0 else math.inf,
        "sampled_rows": len(sampler.buffer),
    }
    return ExperimentResult(series, summary)
