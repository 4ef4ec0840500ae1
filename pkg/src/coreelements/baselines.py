"""Row-subsampling baselines: UNIF, BLEV, SLEV and IBOSS."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientRows
from .estimators import leverage_scores, row_subsample_ols
from .matrix import DesignMatrix


@dataclass(frozen=True, eq=False)
class RowSample:
    rows: np.ndarray
    method: str
    probabilities: Optional[np.ndarray] = None

    @property
    def r(self):
        return len(self.rows)

    def weights(self):
        """Inverse-probability weights 1/(r * pi_i) for the sampled rows, or None."""
        if self.probabilities is None:
            return None
        return 1.0 / (self.r * self.probabilities[self.rows])

    def fit(self, x, y):
        """Row-subsample OLS on this sample (reweighted when randomized)."""
        return row_subsample_ols(x, y, self.rows, weights=self.weights(), method=self.method)


def _as_design(x):
    return x if isinstance(x, DesignMatrix) else DesignMatrix(x)


def _draw(probs, r, rng):
    return rng.choice(len(probs), size=r, replace=True, p=probs)


def unif(n, r, rng):
    if r < 1:
        raise ValueError("r must be positive")
    probs = np.full(n, 1.0 / n)
    return RowSample(rng.integers(0, n, size=r), "Unif", probs)


def blev(x, r, rng):
    x = _as_design(x)
    h = leverage_scores(x)
    probs = h / x.p
    probs = probs / probs.sum()
    return RowSample(_draw(probs, r, rng), "Blev", probs)


def slev(x, r, rng, lam=0.9):
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"shrinkage must lie in (0, 1], got {lam}")
    x = _as_design(x)
    h = leverage_scores(x)
    probs = lam * h / x.p + (1.0 - lam) / x.n
    probs = probs / probs.sum()
    return RowSample(_draw(probs, r, rng), "Slev", probs)


def _extreme_rows(values, available, k, largest):
    """Indices (into ``values``) of the k largest/smallest available entries.

    Ties go to the smaller row index.
    """
    idx = np.flatnonzero(available)
    if k <= 0 or idx.size == 0:
        return idx[:0]
    if k >= idx.size:
        return idx
    v = values[idx] if largest else -values[idx]
    cut = np.partition(v, idx.size - k)[idx.size - k]
    above = idx[v > cut]
    at = idx[v == cut][: k - above.size]
    return np.concatenate([above, at])


def iboss(x, r):
    """Deterministic IBOSS (D-optimality) subset of ``r`` distinct rows.

    Each column j in turn contributes its floor(r / 2p) largest and floor(r / 2p)
    smallest not-yet-taken rows. When 2p does not divide r, the leftover slots
    go one at a time to the earliest column sides (largest of column 0, smallest
    of column 0, largest of column 1, ...).
    """
    x = _as_design(x)
    n, p = x.shape
    if r > n:
        raise InsufficientRows(f"r={r} exceeds n={n}")
    base, rem = divmod(int(r), 2 * p)
    available = np.ones(n, dtype=bool)
    picked = []
    slot = 0
    for j in range(p):
        col = x.values[:, j]
        for largest in (True, False):
            k = base + (1 if slot < rem else 0)
            slot += 1
            rows = _extreme_rows(col, available, k, largest)
            available[rows] = False
            picked.append(rows)
    rows = np.sort(np.concatenate(picked))
    return RowSample(rows, "Iboss", None)


def prereduce(n, r, factor, rng):
    """Uniform reduction to min(n, factor * r) rows without replacement, sorted."""
    m = min(n, int(factor * r))
    return np.sort(rng.choice(n, size=m, replace=False))
