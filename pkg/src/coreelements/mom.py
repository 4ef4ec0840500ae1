"""Median-of-means core-elements: random even blocks, per-block estimates, coordinate-wise median."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AllBlocksSingular, DimensionMismatch, EmptyInput, RankDeficient, SingularSystem
from . import _kernels
from .estimators import CoefficientVector, core_estimate, ols_full
from .matrix import DesignMatrix, frobenius_norm
from .selection import residual_matrix, select_core_elements
from .theory import lambda0


@dataclass(frozen=True, eq=False)
class BlockPartition:
    k: int
    assignment: np.ndarray
    blocks: tuple

    @property
    def sizes(self):
        return np.array([len(b) for b in self.blocks])

    @classmethod
    def from_blocks(cls, blocks, n):
        blocks = tuple(np.sort(np.asarray(b, dtype=np.int64)) for b in blocks)
        assignment = np.full(n, -1, dtype=np.int64)
        for l, b in enumerate(blocks):
            if np.any(assignment[b] != -1):
                raise ValueError("an index appears in more than one block")
            assignment[b] = l
        if np.any(assignment < 0):
            raise ValueError("some indices are not assigned to a block")
        return cls(len(blocks), assignment, blocks)


@dataclass
class MomDiagnostics:
    fisher_min: np.ndarray
    fisher_max: np.ndarray
    residual_ratio: np.ndarray
    lambda0: np.ndarray
    flags: dict = field(default_factory=dict)
    excluded_blocks: list = field(default_factory=list)


def partition(n, k, rng):
    """Random permutation of range(n) cut into k blocks whose sizes differ by at most one.

    k = 1 returns the identity ordering without consuming the generator.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if k == 1:
        return BlockPartition.from_blocks([np.arange(n)], n)
    perm = rng.permutation(n)
    return BlockPartition.from_blocks(np.array_split(perm, k), n)


def coordinate_median(estimates):
    """Coordinate-wise median; an even count averages the two central values."""
    if len(estimates) == 0:
        raise EmptyInput("no estimates to aggregate")
    arr = np.vstack([np.asarray(e, dtype=np.float64) for e in estimates])
    return np.median(arr, axis=0)


def breakdown_budget(k):
    """Number of corrupted blocks at which the median may break down: floor(k / 2)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return k // 2


def outlier_tolerance(k):
    """Largest outlier count that always leaves a clean majority of blocks."""
    return max(breakdown_budget(k) - 1, 0)


def _block_budget(r, k, p):
    r_l, rem = divmod(int(r), k)
    if rem:
        warnings.warn(f"r={r} not divisible by k={k}; {rem} slots discarded", RuntimeWarning, stacklevel=3)
    if r_l < p:
        warnings.warn(
            f"per-block budget r/k={r_l} is below p={p}; block estimates may be singular",
            RuntimeWarning,
            stacklevel=3,
        )
    return max(r_l, 1)


def _block_views(x, part):
    """Per-block designs, from one pass that lays the blocks out contiguously."""
    order = np.concatenate(part.blocks)
    pos = np.empty(x.n, dtype=np.int64)
    pos[order] = np.arange(x.n)
    xp = _kernels.scatter_rows(x.values, pos)
    bounds = np.concatenate([[0], np.cumsum(part.sizes)])
    return [DesignMatrix._trusted(xp[bounds[l]:bounds[l + 1]]) for l in range(part.k)]


def _median_of_blocks(x, y, part, fit_block, method):
    estimates = []
    excluded = []
    for l, (idx, xb) in enumerate(zip(part.blocks, _block_views(x, part))):
        try:
            estimates.append(fit_block(xb, y[idx]).beta)
        except (SingularSystem, RankDeficient, DimensionMismatch) as exc:
            excluded.append(l)
            warnings.warn(f"block {l} dropped from the median: {exc}", RuntimeWarning, stacklevel=3)
    if not estimates:
        raise AllBlocksSingular(f"all {part.k} blocks failed")
    beta = coordinate_median(estimates)
    return CoefficientVector(
        beta, method, {"excluded_blocks": excluded, "k": part.k, "used_blocks": len(estimates)}
    ), estimates


def mom_core_estimate(x, y, r, k, rng=None, *, part=None, diagnostics=True):
    """MOM core-elements estimate.

    Each of the k blocks runs core-elements with budget floor(r / k); blocks
    whose sketch Gram is singular are left out of the median (and counted as
    corrupted). Pass ``part`` to use a fixed partition instead of drawing one.

    Returns ``(CoefficientVector, MomDiagnostics | None)``.
    """
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)
    y = np.asarray(y, dtype=np.float64)
    if part is None:
        if k > 1 and rng is None:
            raise ValueError("rng is required when k > 1")
        part = partition(x.n, k, rng)
    r_l = _block_budget(r, part.k, x.p)
    est, _ = _median_of_blocks(x, y, part, lambda xb, yb: core_estimate(xb, yb, r_l), "MomCore")
    diag = None
    if diagnostics:
        diag = check_mom_conditions(x, part, r_l)
        diag.excluded_blocks = list(est.diagnostics["excluded_blocks"])
    return est, diag


def mom_ols_estimate(x, y, k, rng=None, *, part=None):
    """Median of per-block full OLS estimates."""
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)
    y = np.asarray(y, dtype=np.float64)
    if part is None:
        if k > 1 and rng is None:
            raise ValueError("rng is required when k > 1")
        part = partition(x.n, k, rng)
    est, _ = _median_of_blocks(x, y, part, ols_full, "MomOls")
    return est


def check_mom_conditions(x, part, sketches, *, fisher_floor=1e-8, residual_tol=0.05, outlier_blocks=None):
    """Per-block regularity quantities behind the MOM consistency argument.

    ``sketches`` is either a list of per-block sketches aligned with
    ``part.blocks`` or an integer budget, in which case the sketches are
    rebuilt with core-elements selection.

    * H.1: eigenvalue range of n_l^{-1} X_l^T X_l, flagged when the minimum is
      above ``fisher_floor``.
    * H.2: ||L_l||_F^2 / n_l^2, flagged when every block is under ``residual_tol``.
    * H.3: lambda0_l = ||(X_l^T X_l)^{-1} L_l^T X_l||_2 < 1 on every block.
    * H.4: k > 2 |corrupted blocks| + 1, only when ``outlier_blocks`` is given.
    """
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)
    k = part.k
    fmin = np.empty(k)
    fmax = np.empty(k)
    ratio = np.empty(k)
    lam = np.empty(k)
    for l, xb in enumerate(_block_views(x, part)):
        n_l = xb.n
        if isinstance(sketches, (int, np.integer)):
            _, sk = select_core_elements(xb, int(sketches))
        else:
            sk = sketches[l]
        ev = np.linalg.eigvalsh(xb.values.T @ xb.values / n_l)
        fmin[l], fmax[l] = ev[0], ev[-1]
        ratio[l] = frobenius_norm(residual_matrix(xb, sk)) ** 2 / n_l**2
        try:
            lam[l] = lambda0(xb, sk)
        except (SingularSystem, RankDeficient):
            lam[l] = np.inf
    flags = {
        "H1": bool(np.all(fmin > fisher_floor)),
        "H2": bool(np.all(ratio < residual_tol)),
        "H3": bool(np.all(lam < 1.0)),
    }
    if outlier_blocks is not None:
        flags["H4"] = bool(k > 2 * int(outlier_blocks) + 1)
    return MomDiagnostics(fmin, fmax, ratio, lam, flags)
