"""Closed-form bound calculators for the core-elements estimator.

Covers the variance upper bound and its expansion radius lambda0, the
(1 + eps) relative-error threshold on ||X - X*||_2 / ||X||_2 together with the
empirical and theoretical eps values, and budget recommendations for uniform
and Gaussian entries.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InvalidEpsPrime, ZeroResidual
from .estimators import core_estimate, core_operator_frobenius_sq, ols_full
from .matrix import DesignMatrix, condition_number, gram_solve, singular_values, spectral_norm
from .selection import residual_matrix

# power iteration on p x p operators needs more steps than the 10 * n default
_SMALL_MAX_ITER = 100_000


class ExpansionInvalid(RuntimeWarning):
    """lambda0 >= 1: the series behind the variance bound does not converge."""


@dataclass
class BoundReport:
    lambda0: float
    frob_L: float
    variance_bound_leading: float
    kappa: float
    eps_prime_threshold: float
    eps_empirical: float
    eps_theoretical: float
    eps_prime_achieved: float = float("nan")

    @property
    def expansion_valid(self):
        return self.lambda0 < 1.0


def _as_design(x):
    return x if isinstance(x, DesignMatrix) else DesignMatrix(x)


def lambda0(x, sketch):
    """||(X^T X)^{-1} L^T X||_2 with L = X - X*.

    Exactly 0 when the sketch keeps every nonzero entry of X.
    """
    x = _as_design(x)
    lmat = residual_matrix(x, sketch).values
    if not np.any(lmat):
        return 0.0
    xtx = x.values.T @ x.values
    m = gram_solve(xtx, lmat.T @ x.values)
    if not np.any(m):
        return 0.0
    return spectral_norm(m, max_iter=_SMALL_MAX_ITER)


def variance_upper_bound(x, sketch, sigma2):
    """Leading term of the variance bound and the expansion radius.

    Returns ``(bound, lambda0)`` with
    ``bound = sigma2 * p * tr((X^T X)^{-1}) * (p + tr((X^T X)^{-1}) * ||L||_F^2)``.
    The (1 + O(lambda0)) remainder is not a computable constant; it is reported
    through lambda0 and an :class:`ExpansionInvalid` warning when lambda0 >= 1.
    """
    x = _as_design(x)
    p = x.p
    xtx = x.values.T @ x.values
    tr_inv = float(np.trace(gram_solve(xtx, np.eye(p))))
    frob_l_sq = float(np.sum(residual_matrix(x, sketch).values ** 2))
    bound = sigma2 * p * tr_inv * (p + tr_inv * frob_l_sq)
    lam = lambda0(x, sketch)
    if lam >= 1.0:
        warnings.warn(f"lambda0={lam:.3g} >= 1; bound expansion invalid", ExpansionInvalid, stacklevel=2)
    return bound, lam


def exact_variance(x, sketch, sigma2):
    """E||beta_tilde - beta||^2 = sigma2 * ||(X*^T X)^{-1} X*^T||_F^2."""
    return sigma2 * core_operator_frobenius_sq(x, sketch)


def _ols_residual_norm(x, y):
    beta = ols_full(x, y).beta
    res = float(np.linalg.norm(y - x.values @ beta))
    if res == 0.0:
        raise ZeroResidual("y lies in the column span of X")
    return res, beta


def eps_prime_from_parts(kappa, y_norm, resid_norm, eps):
    """(1/kappa^2) * (1 + (kappa^2 + 1) ||y|| / (sqrt(eps) ||y - X b_ols||))^{-1}."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if resid_norm <= 0:
        raise ZeroResidual("OLS residual is zero")
    k2 = kappa * kappa
    return (1.0 / k2) / (1.0 + (k2 + 1.0) * y_norm / (math.sqrt(eps) * resid_norm))


def eps_theoretical_from_parts(kappa, y_norm, resid_norm, eps_prime):
    """(eps' k^2 (k^2 + 1) ||y|| / ((1 - eps' k^2) ||y - X b_ols||))^2."""
    k2 = kappa * kappa
    if eps_prime * k2 >= 1.0:
        raise InvalidEpsPrime(f"eps' * kappa^2 = {eps_prime * k2:.4g} >= 1")
    if resid_norm <= 0:
        raise ZeroResidual("OLS residual is zero")
    return (eps_prime * k2 * (k2 + 1.0) * y_norm / ((1.0 - eps_prime * k2) * resid_norm)) ** 2


def eps_prime_threshold(x, y, eps):
    x = _as_design(x)
    y = np.asarray(y, dtype=np.float64)
    res, _ = _ols_residual_norm(x, y)
    return eps_prime_from_parts(condition_number(x), float(np.linalg.norm(y)), res, eps)


def eps_theoretical(x, y, eps_prime):
    x = _as_design(x)
    y = np.asarray(y, dtype=np.float64)
    res, _ = _ols_residual_norm(x, y)
    return eps_theoretical_from_parts(condition_number(x), float(np.linalg.norm(y)), res, eps_prime)


def eps_empirical(x, y, beta_tilde, beta_ols):
    """||y - X beta_tilde||^2 / ||y - X beta_ols||^2 - 1."""
    xv = _as_design(x).values
    y = np.asarray(y, dtype=np.float64)
    den = float(np.sum((y - xv @ np.asarray(beta_ols)) ** 2))
    if den == 0.0:
        raise ZeroResidual("OLS residual is zero")
    num = float(np.sum((y - xv @ np.asarray(beta_tilde)) ** 2))
    return num / den - 1.0


def chi2_1_quantile(phi):
    """Inverse CDF of chi-squared(1) at ``phi``, via (Phi^{-1}((1 + phi) / 2))^2."""
    if not 0.0 < phi < 1.0:
        raise ValueError("phi must lie in (0, 1)")
    return float(ndtri((1.0 + phi) / 2.0) ** 2)


def _smallest_budget(alpha, n, deduction):
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    cap = math.ceil(alpha * n) - 1
    r = max(math.ceil(n * (alpha - deduction)), 1)
    if r > cap:
        warnings.warn(
            f"bound asks for r >= {r}, not below alpha*n; capped at {cap}", RuntimeWarning, stacklevel=3
        )
        return max(cap, 1)
    return r


def recommend_r_uniform(alpha, n, p, eps_prime, spec_norm_x):
    """Smallest r < alpha*n with r/n >= alpha - (alpha eps' ||X||_2)^{2/3} / (2 n p)^{1/3}."""
    term = (alpha * eps_prime * spec_norm_x) ** (2.0 / 3.0) / (2.0 * n * p) ** (1.0 / 3.0)
    return _smallest_budget(alpha, n, term)


def recommend_r_normal(alpha, n, p, eps_prime, spec_norm_x, phi):
    """Smallest r < alpha*n with r/n >= alpha - min(alpha phi, (eps' ||X||_2)^2 / (2 G^{-1}(phi) n p))."""
    g = chi2_1_quantile(phi)
    term = min(alpha * phi, (eps_prime * spec_norm_x) ** 2 / (2.0 * g * n * p))
    return _smallest_budget(alpha, n, term)


def achieved_eps_prime(x, sketch):
    """||X - X*||_2 / ||X||_2 for a given sketch.

    Uses the exact p x p Gram eigenvalues rather than power iteration, which
    stalls when the top two singular values of the residual nearly coincide.
    """
    x = _as_design(x)
    num = residual_matrix(x, sketch)
    if not np.any(num.values):
        return 0.0
    return float(singular_values(num)[0] / singular_values(x)[0])


def bound_report(x, y, r, eps, sigma2=None):
    """Every bound quantity for one design, response and budget.

    ``sigma2`` defaults to the unbiased OLS residual variance.
    """
    x = _as_design(x)
    y = np.asarray(y, dtype=np.float64)
    res, beta_ols = _ols_residual_norm(x, y)
    if sigma2 is None:
        sigma2 = res**2 / (x.n - x.p) if x.n > x.p else float("nan")
    est, _, sketch = core_estimate(x, y, r, return_sketch=True)
    kappa = condition_number(x)
    y_norm = float(np.linalg.norm(y))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExpansionInvalid)
        vb, lam = variance_upper_bound(x, sketch, sigma2)
    eps_ach = achieved_eps_prime(x, sketch)
    try:
        eps_theo = eps_theoretical_from_parts(kappa, y_norm, res, eps_ach)
    except InvalidEpsPrime:
        eps_theo = float("nan")
    return BoundReport(
        lambda0=lam,
        frob_L=float(np.sqrt(np.sum(residual_matrix(x, sketch).values ** 2))),
        variance_bound_leading=vb,
        kappa=kappa,
        eps_prime_threshold=eps_prime_from_parts(kappa, y_norm, res, eps),
        eps_empirical=eps_empirical(x, y, est.beta, beta_ols),
        eps_theoretical=eps_theo,
        eps_prime_achieved=eps_ach,
    )
