"""Synthetic regression data: correlated designs, numerical sparsity, SNR-calibrated
responses, outlier contamination and misspecified mean functions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateMisspec, DegenerateSignal, DimensionTooSmall
from .matrix import DesignMatrix

DISTRIBUTIONS = ("D1", "D2", "D3")
SPARSITY_LEVELS = {"R1": 1.0, "R2": 0.8, "R3": 0.6, "R4": 0.4, "R5": 0.2}
MISSPEC_TERMS = ("H1", "H2", "H3")
AR_RHO = 0.6


@dataclass
class ExperimentConfig:
    n: int
    p: int
    distribution: str = "D1"
    alpha: float = 1.0
    snr: float = 4.0
    beta_true: Optional[list] = None
    r: Optional[int] = None
    k: Optional[int] = None
    n_outliers: int = 0
    misspec: Optional[str] = None
    misspec_amplitude: float = 10.0
    perturb_scale: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.snr <= 0:
            raise ValueError("snr must be positive")
        if self.n <= self.p:
            raise ValueError("need n > p")
        if self.misspec is not None and self.misspec not in MISSPEC_TERMS:
            raise ValueError(f"misspec must be one of {MISSPEC_TERMS}")
        if not 0 <= self.n_outliers < self.n:
            raise ValueError("need 0 <= n_outliers < n")

    @property
    def beta(self):
        if self.beta_true is None:
            return np.ones(self.p)
        b = np.asarray(self.beta_true, dtype=np.float64)
        if b.shape != (self.p,):
            raise ValueError(f"beta_true must have length {self.p}")
        return b

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(eq=False)
class GeneratedDataset:
    x: DesignMatrix
    y: np.ndarray
    beta_true: np.ndarray
    sigma2: float
    outlier_index_set: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    informative_index_set: Optional[np.ndarray] = None
    rows: Optional[np.ndarray] = None
    outlier_groups: tuple = ()

    def __post_init__(self):
        if self.informative_index_set is None:
            mask = np.ones(self.x.n, dtype=bool)
            mask[self.outlier_index_set] = False
            self.informative_index_set = np.flatnonzero(mask)

    @property
    def n(self):
        return self.x.n

    def subset(self, idx):
        """Dataset restricted to rows ``idx`` (index sets are remapped)."""
        idx = np.asarray(idx, dtype=np.int64)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[idx] = np.arange(len(idx))
        out = pos[self.outlier_index_set]
        out = np.sort(out[out >= 0])
        parent = idx if self.rows is None else self.rows[idx]
        return GeneratedDataset(
            self.x.rows(idx), self.y[idx], self.beta_true, self.sigma2, out, None, parent
        )


def replication_rng(seed, replication):
    """Independent generator for one replication, derived from (seed, replication)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication),)))


def ar_covariance(p, rho=AR_RHO):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def gen_design(config, rng):
    """Rows drawn from D1 (normal), D2 (log-normal) or D3 (t with 3 df), AR(0.6) covariance, then centered."""
    n, p = config.n, config.p
    chol = np.linalg.cholesky(ar_covariance(p))
    z = rng.standard_normal((n, p)) @ chol.T
    if config.distribution == "D2":
        z = np.exp(z)
    elif config.distribution == "D3":
        z = z * np.sqrt(3.0 / rng.chisquare(3, size=n))[:, None]
    return DesignMatrix.from_array(z, center=True)


def sparsify(x, alpha, perturb_scale, rng, *, return_mask=False):
    """Replace floor((1 - alpha) n p) uniformly chosen entries by N(0, perturb_scale^2) noise.

    The result is not re-centered. ``alpha == 1`` returns the input unchanged.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)
    n, p = x.shape
    count = math.floor((1.0 - alpha) * n * p + 1e-9)
    mask = np.zeros((n, p), dtype=bool, order="F")
    if count == 0:
        return (x, mask) if return_mask else x
    flat = rng.choice(n * p, size=count, replace=False)
    vals = np.array(x.values, order="F")
    noise = rng.normal(0.0, perturb_scale, size=count)
    rows, cols = np.unravel_index(flat, (n, p))
    vals[rows, cols] = noise
    mask[rows, cols] = True
    out = DesignMatrix(vals, centered=False)
    return (out, mask) if return_mask else out


def _noise_for_snr(signal, snr, rng):
    var = float(np.var(signal, ddof=1))
    if var == 0.0:
        raise DegenerateSignal("Var(X beta) is zero")
    sigma2 = 0.0 if math.isinf(snr) else var / snr
    noise = rng.normal(0.0, math.sqrt(sigma2), size=len(signal)) if sigma2 > 0 else np.zeros(len(signal))
    return noise, sigma2


def gen_response(x, beta_true, snr, rng):
    """y = X beta + eps with sigma^2 = sample Var(X beta) / snr; returns (y, sigma2)."""
    xv = x.values if isinstance(x, DesignMatrix) else np.asarray(x, dtype=np.float64)
    signal = xv @ np.asarray(beta_true, dtype=np.float64)
    noise, sigma2 = _noise_for_snr(signal, snr, rng)
    return signal + noise, sigma2


def misspec_term(x, h, amplitude=10.0):
    """Calibrated misspecification h(x_i), scaled so max_i |h(x_i)| == amplitude.

    H1: x3 * x8, H2: x3 * sin(x8), H3: x3^2 (1-based column numbers).
    """
    xv = x.values if isinstance(x, DesignMatrix) else np.asarray(x, dtype=np.float64)
    p = xv.shape[1]
    if h in ("H1", "H2") and p < 8:
        raise DimensionTooSmall(f"{h} needs p >= 8, got {p}")
    if h == "H3" and p < 3:
        raise DimensionTooSmall(f"H3 needs p >= 3, got {p}")
    x3 = xv[:, 2]
    if h == "H1":
        raw = x3 * xv[:, 7]
    elif h == "H2":
        raw = x3 * np.sin(xv[:, 7])
    elif h == "H3":
        raw = x3**2
    else:
        raise ValueError(f"unknown misspecification term {h!r}")
    peak = float(np.max(np.abs(raw)))
    if peak == 0.0:
        raise DegenerateMisspec(f"{h} is identically zero; cannot calibrate")
    return raw * (amplitude / peak)


def gen_misspecified(x, beta_true, snr, h, rng, amplitude=10.0):
    """y = X beta + h(X) + eps; sigma^2 still calibrated from Var(X beta)."""
    xv = x.values if isinstance(x, DesignMatrix) else np.asarray(x, dtype=np.float64)
    hx = misspec_term(xv, h, amplitude)
    signal = xv @ np.asarray(beta_true, dtype=np.float64)
    noise, sigma2 = _noise_for_snr(signal, snr, rng)
    return signal + hx + noise, sigma2


def outlier_counts(n_o):
    """Sizes of the four outlier groups: ceil(n_o/4) each for the first three, the rest last."""
    c = math.ceil(n_o / 4)
    counts = []
    left = n_o
    for _ in range(3):
        take = min(c, left)
        counts.append(take)
        left -= take
    counts.append(left)
    return counts


def inject_outliers(x, y, n_o, rng, beta_true=None, sigma2=float("nan")):
    """Overwrite ``n_o`` uniformly chosen rows with the four outlier types.

    O1: x = -10*1 + z, y = 1000 + 10 z;  O2: x = 10*1 + z, y = -500 + 10 z;
    O3: x ~ U[0, 1]^p, y ~ Bernoulli(1/2);  O4: x ~ N(0, I), y = x^T beta + t_2 noise.
    """
    x = x if isinstance(x, DesignMatrix) else DesignMatrix(x)
    n, p = x.shape
    beta = np.ones(p) if beta_true is None else np.asarray(beta_true, dtype=np.float64)
    y = np.array(y, dtype=np.float64)
    if not 0 <= n_o < n:
        raise ValueError("need 0 <= n_o < n")
    if n_o == 0:
        return GeneratedDataset(x, y, beta, sigma2)
    vals = np.array(x.values, order="F")
    pos = rng.choice(n, size=n_o, replace=False)
    c1, c2, c3, c4 = outlier_counts(n_o)
    groups = np.split(pos, np.cumsum([c1, c2, c3]))
    g = groups[0]
    vals[g] = -10.0 + rng.standard_normal((len(g), p))
    y[g] = 1000.0 + 10.0 * rng.standard_normal(len(g))
    g = groups[1]
    vals[g] = 10.0 + rng.standard_normal((len(g), p))
    y[g] = -500.0 + 10.0 * rng.standard_normal(len(g))
    g = groups[2]
    vals[g] = rng.uniform(0.0, 1.0, size=(len(g), p))
    y[g] = rng.binomial(1, 0.5, size=len(g)).astype(np.float64)
    g = groups[3]
    xo = rng.standard_normal((len(g), p))
    vals[g] = xo
    y[g] = xo @ beta + rng.standard_t(2, size=len(g))
    return GeneratedDataset(
        DesignMatrix(vals), y, beta, sigma2, np.sort(pos),
        outlier_groups=tuple(np.sort(g) for g in groups),
    )


def train_test_split(dataset, ratio, rng):
    """Random split of the informative rows into floor(ratio m) / ceil((1 - ratio) m); outliers join train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    info = dataset.informative_index_set
    m = len(info)
    n_train = math.floor(ratio * m + 1e-9)
    perm = rng.permutation(info)
    train = np.sort(np.concatenate([perm[:n_train], dataset.outlier_index_set]))
    test = np.sort(perm[n_train:])
    return dataset.subset(train), dataset.subset(test)


def generate_dataset(config, rng):
    """Full pipeline for one replication: design, sparsity, response, outliers."""
    x = gen_design(config, rng)
    if config.alpha < 1.0:
        x = sparsify(x, config.alpha, config.perturb_scale, rng)
    beta = config.beta
    if config.misspec is None:
        y, sigma2 = gen_response(x, beta, config.snr, rng)
    else:
        y, sigma2 = gen_misspecified(x, beta, config.snr, config.misspec, rng, config.misspec_amplitude)
    if config.n_outliers:
        return inject_outliers(x, y, config.n_outliers, rng, beta, sigma2)
    return GeneratedDataset(x, y, beta, sigma2)
