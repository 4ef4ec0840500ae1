"""Core-elements sketch construction: keep the r largest-magnitude entries of every column."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .matrix import DesignMatrix, SparseColumnMatrix


@dataclass(frozen=True, eq=False)
class SelectionMask:
    """Selected row indices per column, as a p x r array with ascending rows.

    Selected exact zeros appear here even though the sketch does not store them.
    """

    rows: np.ndarray
    n: int

    @property
    def p(self):
        return self.rows.shape[0]

    @property
    def r(self):
        return self.rows.shape[1]

    def column(self, j):
        return self.rows[j]

    def to_dense(self):
        """The 0/1 selection matrix S."""
        s = np.zeros((self.n, self.p), dtype=bool, order="F")
        for j in range(self.p):
            s[self.rows[j], j] = True
        return s


def _as_design(x):
    return x if isinstance(x, DesignMatrix) else DesignMatrix(x)


def clamp_budget(r, n):
    r = int(r)
    if r < 1:
        raise ValueError(f"budget r must be at least 1, got {r}")
    if r > n:
        warnings.warn(f"r={r} exceeds n={n}; clamping to n", RuntimeWarning, stacklevel=3)
        r = n
    return r


def select_core_elements(x, r):
    """Build the core-elements mask and sketch X* for budget ``r`` per column.

    Each column keeps the ``r`` entries with largest absolute value. Ties at
    the cut-off favour the smaller row index. Runs in O(n p) via a
    partition-based selection; no column is ever fully sorted.

    Returns
    -------
    (SelectionMask, SparseColumnMatrix)
    """
    x = _as_design(x)
    n, p = x.shape
    r = clamp_budget(r, n)
    if r < p:
        warnings.warn(
            f"r={r} < p={p}: the sketch Gram matrix may be singular", RuntimeWarning, stacklevel=2
        )
    rows = np.empty((p, r), dtype=np.int64)
    _kernels.select_top_abs(x.values, r, rows)
    mask = SelectionMask(rows, n)
    return mask, sketch_from_mask(x, mask)


def sketch_from_mask(x, mask):
    """X* = S (Hadamard) X stored column-compressed, exact zeros dropped."""
    x = _as_design(x)
    vals = x.values
    p, r = mask.rows.shape
    data = np.empty(p * r)
    for j in range(p):
        data[j * r:(j + 1) * r] = vals[mask.rows[j], j]
    flat_rows = mask.rows.reshape(-1)
    keep = data != 0.0
    if keep.all():
        indptr = np.arange(0, p * r + 1, r, dtype=np.int64)
        return SparseColumnMatrix(x.n, p, indptr, flat_rows, data)
    counts = keep.reshape(p, r).sum(axis=1)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return SparseColumnMatrix(x.n, p, indptr, flat_rows[keep], data[keep])


def residual_matrix(x, sketch):
    """L = X - X*, dense. Diagnostic use only."""
    x = _as_design(x)
    if sketch.shape != x.shape:
        raise ValueError(f"shape mismatch: {sketch.shape} vs {x.shape}")
    return DesignMatrix(x.values - sketch.to_dense())
