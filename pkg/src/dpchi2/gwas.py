"""Case/control (GWAS) tables: Pearson statistic and the output-perturbation baseline.

The baseline adds Gaussian noise to Pearson's statistic itself, using its
global sensitivity on 3 x 2 tables with ``n/2`` cases and ``n/2`` controls.
It compares the result with the ``1 - alpha`` point of ``chi2(2) + N(0, sigma^2)``.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import integrate

from ._validation import (
    DegenerateTableError,
    DomainError,
    ShapeError,
    check_alpha,
    check_positive,
    check_table,
)
from .randnoise import as_stream
from .report import GofStatistic, StatKind, TestReport, decide
from .specfun import chi2_quantile, chi2_sf

GWAS_SHAPE = (3, 2)
QUADRATURE_HALF_WIDTH = 8.0


def pearson_statistic(table):
    """``sum (X_ij - E_ij)^2 / E_ij`` with ``E_ij = X_i. X_.j / n``."""
    table = check_table(table).astype(float)
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    if np.any(rows <= 0) or np.any(cols <= 0):
        raise DegenerateTableError("every row and column margin must be positive")
    expected = np.outer(rows, cols) / table.sum()
    return float(np.sum((table - expected) ** 2 / expected))


def pearson_statistic_batch(tables):
    """Pearson statistics of a stack of tables ``(B, r, c)``; NaN where a margin is zero."""
    tables = np.asarray(tables, dtype=float)
    rows = tables.sum(axis=-1)
    cols = tables.sum(axis=-2)
    n = tables.sum(axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        expected = rows[..., :, None] * cols[..., None, :] / n[..., None, None]
        q = np.sum((tables - expected) ** 2 / expected, axis=(-2, -1))
    degenerate = np.any(rows <= 0, axis=-1) | np.any(cols <= 0, axis=-1)
    return np.where(degenerate, np.nan, q)


def gwas_sensitivity(n):
    """Global l1/l2 sensitivity ``4n / (n + 2)`` of Pearson's statistic on evenly split 3 x 2 tables."""
    if int(n) != n or n < 2 or int(n) % 2:
        raise DomainError(f"n must be a positive even integer, got {n!r}")
    return 4.0 * n / (n + 2.0)


def _normal_sf(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def gauss_mixture_sf(tau, df, sigma):
    """``P[chi2(df) + N(0, sigma^2) > tau]`` by adaptive quadrature over the Gaussian part."""
    if sigma == 0.0:
        return float(chi2_sf(tau, df))
    lo = -QUADRATURE_HALF_WIDTH * sigma
    hi = QUADRATURE_HALF_WIDTH * sigma
    # for z > tau the chi-square tail is 1, which integrates to a normal tail
    upper = min(tau, hi)
    mass = _normal_sf(max(tau, lo) / sigma) if tau < hi else 0.0
    if upper <= lo:
        return _normal_sf(lo / sigma) if tau <= lo else mass
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def integrand(z):
        return norm * math.exp(-0.5 * (z / sigma) ** 2) * chi2_sf(tau - z, df)

    val, _ = integrate.quad(integrand, lo, upper, epsabs=1e-11, epsrel=1e-10, limit=200)
    return mass + val


@lru_cache(maxsize=1024)
def _mixture_quantile(df, sigma, alpha):
    lo, hi = -QUADRATURE_HALF_WIDTH * sigma - 1.0, chi2_quantile(1.0 - alpha, df) + 1.0
    while gauss_mixture_sf(hi, df, sigma) > alpha:
        hi = 2.0 * hi + sigma
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gauss_mixture_sf(mid, df, sigma) > alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def gauss_mixture_critical_value(df, sigma, alpha):
    """Solve ``P[chi2(df) + N(0, sigma^2) > tau] = alpha`` for ``tau``."""
    alpha = check_alpha(alpha)
    sigma = float(sigma)
    if not sigma >= 0:
        raise DomainError("sigma must be nonnegative")
    if sigma == 0.0:
        return chi2_quantile(1.0 - alpha, df)
    return _mixture_quantile(int(df), sigma, alpha)


@dataclass(frozen=True)
class GwasConfig:
    """Noise calibration of the output-perturbation test for a sample size ``n``."""

    n: int
    alpha: float
    rho: float
    sigma2: float

    @classmethod
    def build(cls, n, alpha, rho):
        rho = check_positive(rho, "rho")
        delta = gwas_sensitivity(n)
        return cls(int(n), check_alpha(alpha), rho, delta * delta / (2.0 * rho))

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)

    @property
    def threshold(self):
        return gauss_mixture_critical_value(2, self.sigma, self.alpha)


def check_gwas_table(table):
    table = check_table(table)
    if table.shape != GWAS_SHAPE:
        raise ShapeError(f"GWAS tables are 3 x 2, got {table.shape}")
    n = int(table.sum())
    cols = table.sum(axis=0)
    if n % 2 or cols[0] != cols[1]:
        raise DomainError(f"cases and controls must be evenly split, got column sums {cols}")
    if np.any(table.sum(axis=1) <= 0) or np.any(cols <= 0):
        raise DegenerateTableError("every row and column margin must be positive")
    return table


def output_perturbation_test(table, rho, alpha, rng=None):
    """rho-zCDP independence test that adds ``N(0, sigma^2)`` to Pearson's statistic."""
    table = check_gwas_table(table)
    cfg = GwasConfig.build(int(table.sum()), alpha, rho)
    q = pearson_statistic(table)
    noisy = q + cfg.sigma * float(as_stream(rng).standard_normal())
    threshold = cfg.threshold
    stat = GofStatistic(StatKind.CLASSICAL, noisy, 2)
    return TestReport(stat, threshold, cfg.alpha, decide(noisy, threshold))
