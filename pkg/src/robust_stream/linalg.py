"""Dense kernels shared by the samplers.

Gram maintenance, leverage / ridge leverage / L1 sensitivities, condition
numbers and the spectral sandwich oracle.  Everything here is sized for
desk-scale dimensions (d <= 64), so symmetric eigendecompositions are simply
recomputed when the Gram matrix changes.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from .errors import InputError, InvariantError, UndefinedConditionError

RANK_TOL = 1e-10
SPAN_TOL = 1e-8
CLAMP_SLACK = 1e-6


def as_row(a, dim: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    if dim is not None and a.shape[0] != dim:
        raise InputError(f"row has dimension {a.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(a)):
        raise InputError("row contains non-finite entries")
    return a


def clamp_unit(value: float, what: str = "score") -> float:
    if value > 1.0 + CLAMP_SLACK:
        raise InvariantError(f"{what} = {value!r} exceeds 1")
    return min(1.0, max(0.0, float(value)))


class WeightedRowBuffer:
    """Append-only list of sampled rows with importance weights.

    The stored matrix is ``diag(weights) @ rows``.  Snapshots are read-only
    views; appending never touches rows already stored, so an old snapshot
    stays a prefix of every later one.
    """

    def __init__(self, dim: int, capacity: int = 16):
        self.dim = int(dim)
        self._rows = np.zeros((max(capacity, 1), self.dim))
        self._weights = np.zeros(max(capacity, 1))
        self._index = np.zeros(max(capacity, 1), dtype=np.int64)
        self._size = 0

    @classmethod
    def from_rows(cls, rows, weights=None, indices=None) -> "WeightedRowBuffer":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        n, d = rows.shape
        weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        indices = np.arange(n) if indices is None else np.asarray(indices)
        buf = cls(d, capacity=n)
        for row, w, i in zip(rows, weights, indices):
            buf.append(row, w, int(i))
        return buf

    def append(self, row, weight: float, index: int) -> None:
        row = as_row(row, self.dim)
        if not weight > 0:
            raise InputError("weights must be positive")
        if self._size and index <= self._index[self._size - 1]:
            raise InputError("arrival indices must be strictly increasing")
        if self._size == self._rows.shape[0]:
            cap = 2 * self._size
            # fresh arrays so outstanding snapshots keep their data
            self._rows = np.concatenate([self._rows, np.zeros((cap - self._size, self.dim))])
            self._weights = np.concatenate([self._weights, np.zeros(cap - self._size)])
            self._index = np.concatenate([self._index, np.zeros(cap - self._size, dtype=np.int64)])
        self._rows[self._size] = row
        self._weights[self._size] = weight
        self._index[self._size] = index
        self._size += 1

    def __len__(self) -> int:
        return self._size

    @property
    def rows(self) -> np.ndarray:
        return _readonly(self._rows[: self._size])

    @property
    def weights(self) -> np.ndarray:
        return _readonly(self._weights[: self._size])

    @property
    def indices(self) -> np.ndarray:
        return _readonly(self._index[: self._size])

    def matrix(self) -> np.ndarray:
        """The weighted matrix M whose rows are ``weight * row``."""
        return self.weights[:, None] * self.rows

    def snapshot(self) -> "WeightedRowBuffer":
        snap = WeightedRowBuffer.__new__(WeightedRowBuffer)
        snap.dim = self.dim
        snap._rows = self.rows
        snap._weights = self.weights
        snap._index = self.indices
        snap._size = self._size
        return snap

    def is_prefix_of(self, other: "WeightedRowBuffer") -> bool:
        m = len(self)
        return (
            m <= len(other)
            and np.array_equal(self.rows, other.rows[:m])
            and np.array_equal(self.weights, other.weights[:m])
            and np.array_equal(self.indices, other.indices[:m])
        )


def _readonly(x: np.ndarray) -> np.ndarray:
    v = x.view()
    v.flags.writeable = False
    return v


class SpectralSummary:
    """Gram matrix ``M^T M`` of a weighted buffer with a lazy eigencache."""

    def __init__(self, dim: int, gram: np.ndarray | None = None):
        self.dim = int(dim)
        self.gram = np.zeros((dim, dim)) if gram is None else np.array(gram, dtype=float)
        self._eig = None

    @classmethod
    def from_matrix(cls, M) -> "SpectralSummary":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M.shape[1], M.T @ M)

    @classmethod
    def from_buffer(cls, buf: WeightedRowBuffer) -> "SpectralSummary":
        M = buf.matrix()
        return cls(buf.dim, M.T @ M)

    @property
    def dirty(self) -> bool:
        return self._eig is None

    def copy(self) -> "SpectralSummary":
        out = SpectralSummary(self.dim, self.gram)
        out._eig = self._eig
        return out

    def add(self, a, w: float = 1.0) -> None:
        """In-place ``gram += w^2 a a^T``."""
        a = as_row(a, self.dim)
        self.gram += (w * w) * np.outer(a, a)
        self._eig = None

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenpairs in descending order of eigenvalue."""
        if self._eig is None:
            vals, vecs = np.linalg.eigh(0.5 * (self.gram + self.gram.T))
            self._eig = (vals[::-1].copy(), vecs[:, ::-1].copy())
        return self._eig

    def rank_threshold(self) -> float:
        vals, _ = self.eig()
        top = vals[0] if vals.size and vals[0] > 0 else 1.0
        return RANK_TOL * top

    def range_basis(self) -> tuple[np.ndarray, np.ndarray]:
        vals, vecs = self.eig()
        keep = vals >= self.rank_threshold()
        return vals[keep], vecs[:, keep]

    @property
    def rank(self) -> int:
        return int(self.range_basis()[0].size)


def gram_update(summary: SpectralSummary, a, w: float = 1.0) -> SpectralSummary:
    out = summary.copy()
    out.add(a, w)
    return out


def in_span(summary: SpectralSummary, a) -> bool:
    a = as_row(a, summary.dim)
    _, basis = summary.range_basis()
    resid = a - basis @ (basis.T @ a)
    return bool(np.linalg.norm(resid) <= SPAN_TOL * np.linalg.norm(a))


def leverage_score(summary: SpectralSummary, a, clamp: bool = True) -> tuple[bool, float]:
    """Span test and ``a^T G^+ a``.

    With ``clamp=False`` the raw quadratic form is returned; it exceeds 1
    whenever ``a`` is not dominated by the summarised rows, which is the
    normal case for a fresh stream row.
    """
    a = as_row(a, summary.dim)
    vals, basis = summary.range_basis()
    coef = basis.T @ a
    resid = a - basis @ coef
    norm = np.linalg.norm(a)
    if norm == 0:
        return True, 0.0
    if np.linalg.norm(resid) > SPAN_TOL * norm:
        return False, 1.0
    tau = float(np.sum(coef * coef / vals))
    return True, min(1.0, tau) if clamp else tau


def ridge_leverage_score(summary: SpectralSummary, a, lam: float) -> float:
    """``a^T (G + lam I)^{-1} a`` clamped to [0, 1]."""
    if lam < 0:
        raise InputError(f"ridge parameter must be nonnegative, got {lam}")
    return min(1.0, ridge_quadratic(summary, a, lam))


def ridge_quadratic(summary: SpectralSummary, a, lam: float) -> float:
    a = as_row(a, summary.dim)
    if lam == 0:
        return leverage_score(summary, a, clamp=False)[1]
    vals, vecs = summary.eig()
    coef = vecs.T @ a
    return float(np.sum(coef * coef / (np.maximum(vals, 0.0) + lam)))


def l1_sensitivity(M: WeightedRowBuffer, a) -> float:
    """max over x of |<a,x>| / (||Mx||_1 + |<a,x>|).

    Homogeneity lets us fix <a,x> = 1, so the value is 1/(1 + s) with
    s = min{||Mx||_1 : <a,x> = 1}.  We solve the LP dual of that problem,
    max{s : M^T y = s a, ||y||_inf <= 1}, which has only d equality rows.
    """
    a = as_row(a, M.dim)
    if not np.any(a):
        return 0.0
    if len(M) == 0:
        return 1.0
    Mw = M.matrix()
    m, d = Mw.shape
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_eq = np.hstack([Mw.T, -a[:, None]])
    bounds = [(-1.0, 1.0)] * m + [(None, None)]
    res = linprog(c, A_eq=A_eq, b_eq=np.zeros(d), bounds=bounds, method="highs")
    if res.status != 0:
        raise InvariantError(f"L1 sensitivity LP failed: {res.message}")
    s = max(0.0, -float(res.fun))
    return clamp_unit(1.0 / (1.0 + s), "L1 sensitivity")


def condition_number(summary: SpectralSummary) -> float:
    vals, _ = summary.range_basis()
    if vals.size == 0 or vals[0] <= 0:
        raise UndefinedConditionError("condition number of an all-zero matrix")
    return float(np.sqrt(vals[0] / vals[-1]))


def spectral_sandwich_check(A, M: WeightedRowBuffer, eps: float, tol: float = 1e-9) -> bool:
    """(1-eps) A^T A <= M^T M <= (1+eps) A^T A, checked on A's row space.

    Any energy of M outside A's row space also fails the upper bound.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[1]
    if M.dim != d:
        raise InputError("dimension mismatch between A and M")
    GA = SpectralSummary.from_matrix(A)
    GM = M.matrix().T @ M.matrix() if len(M) else np.zeros((d, d))
    vals, basis = GA.range_basis()
    if vals.size == 0:
        return bool(np.all(np.abs(GM) <= tol))
    whiten = basis / np.sqrt(vals)
    gen = np.linalg.eigvalsh(whiten.T @ GM @ whiten)
    ok = gen.min() >= 1 - eps - tol and gen.max() <= 1 + eps + tol
    if vals.size < d:
        null = np.eye(d) - basis @ basis.T
        leak = np.linalg.norm(null @ GM @ null, 2)
        ok = ok and leak <= tol * max(1.0, vals[0])
    return bool(ok)
