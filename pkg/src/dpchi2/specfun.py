"""Incomplete gamma function and chi-square distribution functions.

Everything here is plain double precision. The lower regularized incomplete
gamma function uses the power series below ``a + 1`` and a modified Lentz
continued fraction above it. Noncentral chi-square CDFs are Poisson mixtures
of central CDFs, summed outward from the Poisson mode.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from ._validation import DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000
_POISSON_TAIL = 1e-12


def _log_prefactor(a, x):
    return -x + a * math.log(x) - math.lgamma(a)


def _gamma_series(a, x):
    ap = a
    term = total = 1.0 / a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _gamma_contfrac(a, x):
    # upper regularized gamma by modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(_log_prefactor(a, x)) * h


def _check_gamma_args(a, x):
    a = float(a)
    x = float(x)
    if not a > 0 or not math.isfinite(a):
        raise DomainError(f"shape a must be positive, got {a!r}")
    if not x >= 0:
        raise DomainError(f"x must be nonnegative, got {x!r}")
    return a, x


def reg_lower_gamma(a, x):
    """Regularized lower incomplete gamma function P(a, x)."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_contfrac(a, x))


def reg_upper_gamma(a, x):
    """Regularized upper incomplete gamma function, one minus the lower one."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_contfrac(a, x))


def _check_df(df):
    if int(df) != df or df < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {df!r}")
    return int(df)


def _check_ncp(ncp):
    ncp = float(ncp)
    if not ncp >= 0 or not math.isfinite(ncp):
        raise DomainError(f"noncentrality must be nonnegative, got {ncp!r}")
    return ncp


def _poisson_weight(j, mean):
    if mean == 0.0:
        return 1.0 if j == 0 else 0.0
    return math.exp(-mean + j * math.log(mean) - math.lgamma(j + 1.0))


def _noncentral(df, ncp, x, central):
    half = 0.5 * ncp
    mode = int(math.floor(half))
    total_w = 0.0
    acc = 0.0
    up = mode
    down = mode - 1
    # Expand upward and downward from the mode until the Poisson mass seen is
    # within the tail tolerance of 1.
    while total_w < 1.0 - _POISSON_TAIL:
        w_up = _poisson_weight(up, half)
        acc += w_up * central(df + 2 * up, x)
        total_w += w_up
        up += 1
        if down >= 0:
            w = _poisson_weight(down, half)
            acc += w * central(df + 2 * down, x)
            total_w += w
            down -= 1
        elif w_up == 0.0:
            break
    return acc


def _central_cdf(df, x):
    return reg_lower_gamma(0.5 * df, 0.5 * x)


def _central_sf(df, x):
    return reg_upper_gamma(0.5 * df, 0.5 * x)


def _cdf_scalar(x, df, ncp):
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x <= 0.0:
        return 0.0
    if ncp == 0.0:
        return _central_cdf(df, x)
    return min(1.0, _noncentral(df, ncp, x, _central_cdf))


def _sf_scalar(x, df, ncp):
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x <= 0.0:
        return 1.0
    if ncp == 0.0:
        return _central_sf(df, x)
    return min(1.0, _noncentral(df, ncp, x, _central_sf))


def _apply(fn, x, df, ncp):
    if np.ndim(x) == 0:
        return fn(x, df, ncp)
    arr = np.asarray(x, dtype=float)
    return np.array([fn(v, df, ncp) for v in arr.ravel()]).reshape(arr.shape)


def chi2_cdf(x, df, ncp=0.0):
    """CDF of the (possibly noncentral) chi-square distribution.

    ``x`` may be a scalar or an array. Negative ``x`` gives 0.
    """
    df = _check_df(df)
    ncp = _check_ncp(ncp)
    return _apply(_cdf_scalar, x, df, ncp)


def chi2_sf(x, df, ncp=0.0):
    """Survival function 1 - CDF, computed without cancellation in the upper tail."""
    df = _check_df(df)
    ncp = _check_ncp(ncp)
    return _apply(_sf_scalar, x, df, ncp)


@lru_cache(maxsize=4096)
def _quantile(p, df):
    # Bracket, then bisect until the bracket collapses to a few ulps.
    hi = max(1.0, float(df))
    while _central_cdf(df, hi) < p:
        hi *= 2.0
    lo = 0.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _central_cdf(df, mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * _EPS * hi:
            break
    return hi


def chi2_quantile(p, df):
    """Inverse CDF of the central chi-square distribution."""
    df = _check_df(df)
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return _quantile(p, df)


@dataclass(frozen=True)
class ChiSquareSpec:
    """A chi-square law with ``df`` degrees of freedom and noncentrality ``ncp``."""

    df: int
    ncp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "df", _check_df(self.df))
        object.__setattr__(self, "ncp", _check_ncp(self.ncp))

    def cdf(self, x):
        return chi2_cdf(x, self.df, self.ncp)

    def sf(self, x):
        return chi2_sf(x, self.df, self.ncp)

    def quantile(self, p):
        if self.ncp != 0.0:
            raise NotImplementedError("quantiles are only available for central laws")
        return chi2_quantile(p, self.df)
