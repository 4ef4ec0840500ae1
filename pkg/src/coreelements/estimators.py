"""Least squares estimators: full OLS, core-elements, row-subsample OLS, and leverage scores."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    RankDeficientDesign,
    RankDeficientSubsample,
    SingularSketchGram,
    SingularSystem,
)
from .matrix import DesignMatrix, gram_solve, sparse_gram
from .selection import select_core_elements


@dataclass
class CoefficientVector:
    """A p-vector estimate tagged with the method that produced it."""

    beta: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if not np.all(np.isfinite(self.beta)):
            raise ValueError(f"{self.method} produced non-finite coefficients")

    @property
    def p(self):
        return self.beta.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.beta if dtype is None else self.beta.astype(dtype)


def _as_design(x):
    return x if isinstance(x, DesignMatrix) else DesignMatrix(x)


def _check_response(x, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (x.n,):
        raise DimensionMismatch(f"response has shape {y.shape}, expected ({x.n},)")
    return y


def ols_full(x, y):
    x = _as_design(x)
    y = _check_response(x, y)
    xv = x.values
    try:
        beta = gram_solve(xv.T @ xv, xv.T @ y)
    except SingularSystem as exc:
        raise RankDeficientDesign(str(exc)) from exc
    return CoefficientVector(beta, "FullOLS")


def core_estimate(x, y, r, *, return_sketch=False):
    """Core-elements estimate (X*^T X)^{-1} X*^T y with ``r`` entries kept per column.

    With ``return_sketch=True`` also returns ``(mask, sketch)`` so callers can
    compute diagnostics without repeating the selection.
    """
    x = _as_design(x)
    y = _check_response(x, y)
    mask, sketch = select_core_elements(x, r)
    gram = sparse_gram(sketch, x)
    rhs = sketch.rmatvec(y)
    try:
        beta = gram_solve(gram, rhs)
    except SingularSystem as exc:
        raise SingularSketchGram(mask.r, f"sketch Gram singular at r={mask.r}: {exc}") from exc
    est = CoefficientVector(beta, "Core")
    if return_sketch:
        return est, mask, sketch
    return est


def row_subsample_ols(x, y, rows, weights=None, method="RowSubsample"):
    """OLS on the rows ``rows`` (duplicates allowed).

    ``weights`` (one per entry of ``rows``) rescales each selected row of the
    design and response by ``sqrt(weight)``.
    """
    x = _as_design(x)
    y = _check_response(x, y)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim != 1 or len(rows) < x.p:
        raise RankDeficientSubsample(f"need at least p={x.p} rows, got {rows.size}")
    xs = x.values[rows]
    ys = y[rows]
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=np.float64))
        xs = xs * w[:, None]
        ys = ys * w
    try:
        beta = gram_solve(xs.T @ xs, xs.T @ ys)
    except SingularSystem as exc:
        raise RankDeficientSubsample(str(exc)) from exc
    return CoefficientVector(beta, method)


def leverage_scores(x):
    """Diagonal of the hat matrix, from a thin QR of X."""
    x = _as_design(x)
    q, rfac = np.linalg.qr(x.values, mode="reduced")
    d = np.abs(np.diag(rfac))
    if d.min() < 1e-12 * d.max():
        raise RankDeficientDesign("design matrix is numerically rank deficient")
    return np.einsum("ij,ij->i", q, q)


def core_operator_frobenius_sq(x, sketch):
    """||(X*^T X)^{-1} X*^T||_F^2, the noise-variance multiplier of the core estimator.

    Evaluated as tr(G^{-1} C G^{-T}) with G = X*^T X and C = X*^T X*, using
    two p-column solves instead of an explicit inverse.
    """
    x = _as_design(x)
    gram = sparse_gram(sketch, x)
    cross = sparse_gram(sketch, sketch.to_dense())
    try:
        left = gram_solve(gram, cross)
        full = gram_solve(gram, left.T)
    except SingularSystem as exc:
        raise SingularSketchGram(None, str(exc)) from exc
    return float(np.trace(full))


__all__ = [
    "CoefficientVector",
    "core_estimate",
    "core_operator_frobenius_sq",
    "leverage_scores",
    "ols_full",
    "row_subsample_ols",
]
