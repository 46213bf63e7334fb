"""Online sensitivity row sampling.

Each arriving row gets an importance tau from the rows kept so far, is kept
with probability ``min(1, alpha * tau)`` and, when kept, is rescaled by
``prob ** (-1/p)``.  The coin for round ``t`` is drawn from a counter-based
generator keyed by ``(seed, t)``, so it is fresh at every round regardless of
how the rows were chosen.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import rng
from .errors import InputError
from .linalg import (
    SpectralSummary,
    WeightedRowBuffer,
    as_row,
    clamp_unit,
    l1_sensitivity,
    leverage_score,
    ridge_quadratic,
)

CHECKPOINT_VERSION = 1
DEFAULT_C = {1: 80.0, 2: 40.0}


@dataclass(frozen=True)
class SamplerConfig:
    dim: int
    n_bound: int
    p: int = 2
    eps: float = 0.5
    C: float | None = None
    mode: str = "embedding"
    k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.p not in (1, 2):
            raise InputError(f"p must be 1 or 2, got {self.p}")
        if not 0 < self.eps < 1:
            raise InputError(f"eps must lie in (0, 1), got {self.eps}")
        if self.n_bound < 1:
            raise InputError("n_bound must be at least 1")
        if self.dim < 1:
            raise InputError("dim must be at least 1")
        if self.mode not in ("embedding", "ridge"):
            raise InputError(f"unknown mode {self.mode!r}")
        if self.mode == "ridge":
            if self.k is None or self.k < 1:
                raise InputError("ridge mode needs k >= 1")
            if self.p != 2:
                raise InputError("ridge mode is defined for p = 2 only")
        if self.C is None:
            object.__setattr__(self, "C", DEFAULT_C[self.p])
        if not self.C > 0:
            raise InputError("C must be positive")

    @property
    def alpha(self) -> float:
        # log n with n = 1 would zero alpha; the bound is at least 2 in practice
        return self.C * self.dim * math.log(max(self.n_bound, 2)) / self.eps**2


class SampleDecision(NamedTuple):
    tau: float
    prob: float
    sampled: bool
    weight_applied: float | None


class RegressionFit(NamedTuple):
    coef: np.ndarray
    regularized: bool


class LowRank(NamedTuple):
    projection: np.ndarray
    rank: int
    deficient: bool


@dataclass
class _PrefixStats:
    """Exact spectral statistics of the presented prefix A_t (not of M)."""

    gram: np.ndarray
    kappa_running: float = 1.0
    sigma_max: float = 0.0
    sigma_min_floor: float = math.inf
    l1_first: float = 0.0
    l1_total: float = 0.0

    def observe(self, a: np.ndarray) -> None:
        self.gram += np.outer(a, a)
        self.l1_total += float(np.abs(a).sum())
        if self.l1_first == 0.0:
            self.l1_first = self.l1_total
        vals = np.linalg.eigvalsh(self.gram)
        top = vals[-1]
        if top <= 0:
            return
        nz = vals[vals >= 1e-10 * top]
        self.sigma_max = math.sqrt(top)
        self.sigma_min_floor = min(self.sigma_min_floor, math.sqrt(nz[0]))
        self.kappa_running = max(self.kappa_running, math.sqrt(top / nz[0]))

    @property
    def kappa_online(self) -> float:
        if self.sigma_max == 0:
            return 1.0
        return self.sigma_max / self.sigma_min_floor

    @property
    def l1_mass_ratio(self) -> float:
        return self.l1_total / self.l1_first if self.l1_first else 1.0


@dataclass
class RowSampler:
    """Adversarially robust online L_p row sampler.

    >>> s = RowSampler(SamplerConfig(dim=3, n_bound=10))
    >>> s.process_row([1.0, 0.0, 0.0]).sampled
    True
    """

    config: SamplerConfig
    buffer: WeightedRowBuffer = field(init=False)
    summary: SpectralSummary = field(init=False)
    rounds_seen: int = field(init=False, default=0)
    rng_cursor: int = field(init=False, default=0)
    tau_sum: float = field(init=False, default=0.0)
    prob_sum: float = field(init=False, default=0.0)
    warnings: list = field(init=False, default_factory=list)

    def __post_init__(self):
        d = self.config.dim
        self.buffer = WeightedRowBuffer(d)
        self.summary = SpectralSummary(d)
        self.prefix = _PrefixStats(np.zeros((d, d)))

    @property
    def alpha(self) -> float:
        return self.config.alpha

    @property
    def kappa_running(self) -> float:
        return self.prefix.kappa_running

    @property
    def kappa_online(self) -> float:
        return self.prefix.kappa_online

    def ridge_lambda(self) -> float:
        """Buffer proxy for ||A - A_(k)||_F^2 / k."""
        k = self.config.k
        vals, _ = self.summary.eig()
        return float(np.clip(vals[k:], 0, None).sum()) / k

    def sensitivity(self, a: np.ndarray) -> float:
        cfg = self.config
        if cfg.mode == "ridge":
            lam = self.ridge_lambda()
            if lam > 1e-12 * max(1.0, np.trace(self.summary.gram)):
                r = ridge_quadratic(self.summary, a, lam)
                return min(1.0, 2 * clamp_unit(r / (1 + r), "online ridge score"))
        span, lev = leverage_score(self.summary, a, clamp=False)
        if not span:
            return 1.0
        if cfg.p == 2:
            # adding a to the denominator turns a^T G^+ a into lev / (1 + lev)
            return min(1.0, 2 * clamp_unit(lev / (1 + lev), "online leverage score"))
        return min(1.0, 2 * l1_sensitivity(self.buffer, a))

    def process_row(self, a) -> SampleDecision:
        cfg = self.config
        a = as_row(a, cfg.dim)
        if self.rounds_seen >= cfg.n_bound:
            raise InputError(f"stream longer than n_bound={cfg.n_bound}")
        t = self.rounds_seen
        self.prefix.observe(a)
        tau = self.sensitivity(a)
        prob = min(1.0, self.alpha * tau)
        if prob >= 1.0:
            sampled = True
        elif prob <= 0.0:
            sampled = False
        else:
            sampled = rng.uniform(cfg.seed, t) < prob
            self.rng_cursor += 1
        weight = None
        if sampled:
            weight = prob ** (-1.0 / cfg.p)
            self.buffer.append(a, weight, t)
            self.summary.add(a, weight)
        self.tau_sum += tau
        self.prob_sum += prob
        self.rounds_seen += 1
        self._check_kappa(t)
        return SampleDecision(tau, prob, sampled, weight)

    def _check_kappa(self, t: int) -> None:
        need = self.prefix.kappa_running ** self.config.p
        if self.config.C < need and not self.warnings:
            self.warnings.append({"round": t, "kind": "C_below_kappa_p", "C": self.config.C, "kappa_p": need})

    def current_embedding(self) -> WeightedRowBuffer:
        return self.buffer.snapshot()

    def regress(self) -> RegressionFit:
        """Least squares on the sampled augmented rows ``(a_i, b_i)``.

        Minimises ||M [y; -1]||_2, i.e. solves the weighted normal equations
        for the leading ``d - 1`` columns against the last one.
        """
        d = self.config.dim
        if d < 2:
            raise InputError("regression needs augmented rows of dimension >= 2")
        G = self.summary.gram
        return solve_normal(G[:-1, :-1], G[:-1, -1])

    def low_rank(self) -> LowRank:
        k = self.config.k
        if k is None:
            raise InputError("low_rank needs a sampler in ridge mode")
        vals, vecs = self.summary.range_basis()
        r = min(k, vals.size)
        V = vecs[:, :r]
        return LowRank(V @ V.T, r, r < k)

    def sample_budget(self) -> dict:
        cfg = self.config
        kappa = max(self.kappa_online, math.e)
        return {
            "alpha": self.alpha,
            "tau_sum": self.tau_sum,
            "expected_samples": self.prob_sum,
            "sampled": len(self.buffer),
            "worst_case_budget": cfg.C * cfg.dim**2 * kappa**2 / cfg.eps**2
            * math.log(max(cfg.n_bound, 2)) * math.log(kappa),
        }

    def diagnostics(self) -> dict:
        return {
            "rounds_seen": self.rounds_seen,
            "sampled": len(self.buffer),
            "alpha": self.alpha,
            "tau_sum": self.tau_sum,
            "expected_samples": self.prob_sum,
            "kappa_running": self.kappa_running,
            "kappa_online": self.kappa_online,
            "l1_mass_ratio": self.prefix.l1_mass_ratio,
            "rng_cursor": self.rng_cursor,
            "warnings": list(self.warnings),
        }

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "rounds_seen": self.rounds_seen,
            "rng_cursor": self.rng_cursor,
            "tau_sum": self.tau_sum,
            "prob_sum": self.prob_sum,
            "warnings": self.warnings,
            "buffer": {
                "rows": self.buffer.rows.tolist(),
                "weights": self.buffer.weights.tolist(),
                "indices": self.buffer.indices.tolist(),
            },
            "prefix": {
                "gram": self.prefix.gram.tolist(),
                "kappa_running": self.prefix.kappa_running,
                "sigma_max": self.prefix.sigma_max,
                "sigma_min_floor": None if math.isinf(self.prefix.sigma_min_floor) else self.prefix.sigma_min_floor,
                "l1_first": self.prefix.l1_first,
                "l1_total": self.prefix.l1_total,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RowSampler":
        if doc.get("version") != CHECKPOINT_VERSION:
            raise InputError(f"unsupported checkpoint version {doc.get('version')!r}")
        s = cls(SamplerConfig(**doc["config"]))
        b = doc["buffer"]
        for row, w, i in zip(b["rows"], b["weights"], b["indices"]):
            s.buffer.append(row, w, i)
            s.summary.add(row, w)
        pre = doc["prefix"]
        s.prefix = _PrefixStats(
            np.array(pre["gram"], dtype=float),
            pre["kappa_running"],
            pre["sigma_max"],
            math.inf if pre["sigma_min_floor"] is None else pre["sigma_min_floor"],
            pre["l1_first"],
            pre["l1_total"],
        )
        s.rounds_seen = doc["rounds_seen"]
        s.rng_cursor = doc["rng_cursor"]
        s.tau_sum = doc["tau_sum"]
        s.prob_sum = doc["prob_sum"]
        s.warnings = list(doc["warnings"])
        return s


def solve_normal(XtX: np.ndarray, Xty: np.ndarray) -> RegressionFit:
    """Normal-equation solve with a 1e-10 * trace ridge on degeneracy."""
    XtX = np.atleast_2d(XtX)
    tr = float(np.trace(XtX))
    if tr <= 0:
        return RegressionFit(np.zeros(XtX.shape[0]), True)
    vals = np.linalg.eigvalsh(XtX)
    if vals[0] <= 1e-10 * vals[-1]:
        coef = np.linalg.solve(XtX + 1e-10 * tr * np.eye(len(XtX)), Xty)
        return RegressionFit(coef, True)
    return RegressionFit(np.linalg.solve(XtX, Xty), False)
