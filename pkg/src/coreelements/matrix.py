"""Dense and column-compressed matrix storage plus the small linear-algebra kernels."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import DimensionMismatch, NonConvergence, RankDeficient, SingularSystem

SINGULAR_RTOL = 1e-12
SOLVE_RESIDUAL_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """An n x p predictor matrix held column-major.

    The array is copied on construction and marked read-only.
    """

    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        v = np.asfortranarray(np.array(self.values, dtype=np.float64, copy=True))
        if v.ndim != 2:
            raise DimensionMismatch(f"design matrix must be 2-D, got shape {v.shape}")
        n, p = v.shape
        if p < 1 or n < p:
            raise DimensionMismatch(f"need n >= p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(v)):
            raise ValueError("design matrix contains non-finite values")
        if self.centered:
            tol = 1e-10 * np.maximum(np.max(np.abs(v), axis=0), 1.0)
            if np.any(np.abs(v.mean(axis=0)) > tol):
                raise ValueError("centered=True but column means are not zero")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_array(cls, a, center=False):
        a = np.asarray(a, dtype=np.float64)
        if center:
            a = a - a.mean(axis=0)
        return cls(a, centered=center)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def _trusted(cls, values):
        # values already validated, freshly allocated and column-major
        values.flags.writeable = False
        out = object.__new__(cls)
        object.__setattr__(out, "values", values)
        object.__setattr__(out, "centered", False)
        return out

    def rows(self, idx):
        """Rows ``idx`` (repeats allowed) as a new, uncentered matrix."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.ndim != 1:
            raise DimensionMismatch("row index must be 1-D")
        if idx.size and (idx.min() < -self.n or idx.max() >= self.n):
            raise IndexError("row index out of range")
        idx = np.where(idx < 0, idx + self.n, idx)
        if idx.size < self.p:
            raise DimensionMismatch(f"need n >= p >= 1, got n={idx.size}, p={self.p}")
        return DesignMatrix._trusted(_kernels.gather_rows(self.values, idx))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True, eq=False)
class SparseColumnMatrix:
    """Compressed sparse column storage (indptr / indices / data).

    Row indices are strictly increasing within each column and every stored
    value is nonzero.
    """

    n: int
    p: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if indptr.shape != (self.p + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise DimensionMismatch("malformed indptr")
        if len(indices) != len(data):
            raise DimensionMismatch("indices and data lengths differ")
        for arr in (indptr, indices, data):
            arr.flags.writeable = False
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)

    def validate(self):
        """Check the storage invariants; raises ``ValueError`` on violation."""
        if np.any(self.data == 0):
            raise ValueError("explicit zero stored")
        if np.any((self.indices < 0) | (self.indices >= self.n)):
            raise ValueError("row index out of range")
        for j in range(self.p):
            rows = self.column_rows(j)
            if np.any(np.diff(rows) <= 0):
                raise ValueError(f"row indices not strictly increasing in column {j}")

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        n, p = a.shape
        indptr = [0]
        indices = []
        data = []
        for j in range(p):
            nz = np.flatnonzero(a[:, j])
            indices.append(nz)
            data.append(a[nz, j])
            indptr.append(indptr[-1] + len(nz))
        return cls(
            n, p, np.array(indptr),
            np.concatenate(indices) if indices else np.empty(0, np.int64),
            np.concatenate(data) if data else np.empty(0),
        )

    @property
    def shape(self):
        return (self.n, self.p)

    @property
    def nnz(self):
        return len(self.data)

    def column_rows(self, j):
        return self.indices[self.indptr[j]:self.indptr[j + 1]]

    def column_values(self, j):
        return self.data[self.indptr[j]:self.indptr[j + 1]]

    def to_dense(self):
        out = np.zeros((self.n, self.p), order="F")
        for j in range(self.p):
            out[self.column_rows(j), j] = self.column_values(j)
        return out

    def matvec(self, v):
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros(self.n)
        for j in range(self.p):
            out[self.column_rows(j)] += self.column_values(j) * v[j]
        return out

    def rmatvec(self, y):
        """Return ``A^T y``."""
        y = np.ascontiguousarray(y, dtype=np.float64)
        if y.shape != (self.n,):
            raise DimensionMismatch(f"expected vector of length {self.n}, got {y.shape}")
        return _kernels.sparse_rmatvec(self.indptr, self.indices, self.data, y)


def _dense(m):
    if isinstance(m, SparseColumnMatrix):
        return m.to_dense()
    if isinstance(m, DesignMatrix):
        return m.values
    return np.asarray(m, dtype=np.float64)


def frobenius_norm(m):
    """Square root of the sum of squared entries, scaled to avoid under/overflow."""
    a = m.data if isinstance(m, SparseColumnMatrix) else _dense(m).ravel(order="K")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0:
        return 0.0
    b = a / scale
    return scale * float(np.sqrt(np.dot(b, b)))


def _operators(m):
    """(matvec, rmatvec, shape, scale) for ``m / scale`` with scale = max |entry|."""
    if isinstance(m, SparseColumnMatrix):
        scale = float(np.max(np.abs(m.data))) if m.nnz else 0.0
        if scale == 0.0:
            return m.matvec, m.rmatvec, m.shape, 0.0
        return (lambda v: m.matvec(v) / scale), (lambda u: m.rmatvec(u) / scale), m.shape, scale
    a = _dense(m)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale > 0.0:
        a = a / scale
    return (lambda v: a @ v), (lambda u: a.T @ u), a.shape, scale


def spectral_norm(m, tol=1e-9, max_iter=None):
    """Largest singular value by power iteration on ``m^T m``.

    Starts from the normalized all-ones vector so results are reproducible.
    Raises :class:`NonConvergence` if successive estimates still differ by
    more than ``tol`` (relative) after ``max_iter`` steps; default ``10 * n``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mv, rmv, (n, p), scale = _operators(m)
    if scale == 0.0:
        raise ValueError("spectral_norm of the zero matrix")
    if max_iter is None:
        max_iter = 10 * n
    v = np.ones(p) / np.sqrt(p)
    u = mv(v)
    est = float(np.linalg.norm(u))
    if est == 0.0:
        # all-ones lies in the null space; restart on the heaviest column
        col_norms = np.array([np.linalg.norm(mv(np.eye(p)[j])) for j in range(p)])
        if not np.any(col_norms > 0):
            raise ValueError("spectral_norm of the zero matrix")
        v = np.zeros(p)
        v[int(np.argmax(col_norms))] = 1.0
        u = mv(v)
        est = float(np.linalg.norm(u))
    for it in range(1, max_iter + 1):
        w = rmv(u)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return est * scale
        v = w / wn
        u = mv(v)
        new = float(np.linalg.norm(u))
        if abs(new - est) < tol * new:
            return new * scale
        est = new
    raise NonConvergence(est * scale, max_iter)


def singular_values(m):
    """All singular values of ``m`` (descending) from the eigenvalues of the p x p Gram matrix."""
    a = _dense(m)
    ev = np.linalg.eigvalsh(a.T @ a)
    return np.sqrt(np.clip(ev, 0.0, None))[::-1]


def condition_number(m):
    s = singular_values(m)
    if s[-1] < SINGULAR_RTOL * s[0] or s[0] == 0:
        raise RankDeficient(f"smallest singular value {s[-1]:.3e} vs largest {s[0]:.3e}")
    return float(s[0] / s[-1])


def gram_solve(a, b):
    """Solve ``a z = b`` for a small square ``a`` with partial-pivoting LU.

    ``b`` may be a vector or a matrix of right-hand sides. Raises
    :class:`SingularSystem` on a tiny pivot or if the residual contract
    ``||a z - b|| <= 1e-8 ||b||`` cannot be met after one refinement step.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has {a.shape[0]}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        raise SingularSystem("matrix is zero or non-finite")
    with warnings.catch_warnings():
        # exact singularity is reported through SingularSystem below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < SINGULAR_RTOL * scale:
        raise SingularSystem("pivot below 1e-12 * max|a|")
    z = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    bnorm = np.linalg.norm(b)
    res = a @ z - b
    if np.linalg.norm(res) > SOLVE_RESIDUAL_RTOL * bnorm:
        z = z - scipy.linalg.lu_solve((lu, piv), res, check_finite=False)
        res = a @ z - b
        if np.linalg.norm(res) > SOLVE_RESIDUAL_RTOL * bnorm:
            raise SingularSystem(
                f"residual {np.linalg.norm(res):.3e} exceeds 1e-8 * ||b|| = {SOLVE_RESIDUAL_RTOL * bnorm:.3e}"
            )
    return z


def sparse_gram(xstar, x):
    """``xstar^T x`` touching only the stored entries of ``xstar``."""
    xv = x.values if isinstance(x, DesignMatrix) else np.asfortranarray(x, dtype=np.float64)
    if xstar.n != xv.shape[0]:
        raise DimensionMismatch(f"row counts differ: {xstar.n} vs {xv.shape[0]}")
    return _kernels.sparse_gram(xstar.n, xstar.indptr, xstar.indices, xstar.data, xv)
