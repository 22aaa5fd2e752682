"""Private chi-square goodness-of-fit statistics and tests.

Two statistics are computed from a noisy histogram. The unprojected one has
middle matrix equal to the inverse of the multinomial covariance plus
``s`` on the diagonal. The projected one first removes the
all-ones direction, which carries only noise. Both are evaluated in O(d)
closed form. The explicit quadratic forms in :mod:`dpchi2.covariance` are
there to check them.
"""

import math

import numpy as np

from ._validation import (
    InsufficientSamplesError,
    ShapeError,
    check_alpha,
    check_histogram,
    check_positive,
    check_probability_vector,
    min_mc_samples,
)
from .randnoise import (
    as_stream,
    gaussian_mechanism,
    laplace_mechanism,
    laplace_noise,
    sample_multinomial,
)
from .report import GofStatistic, StatKind, TestReport, decide
from .specfun import chi2_quantile

# child stream index reserved for Monte Carlo replicates
MC_STREAM = 1


def _null(p0):
    return check_probability_vector(p0, "p0", strict=True)


def gof_statistic_batch(values, n, noise_variance, p0, kind):
    """Closed-form statistic for a stack of noisy histograms.

    ``values`` has shape ``(d,)`` or ``(B, d)``; ``n`` and ``noise_variance``
    broadcast against the leading axis. No validation is done here.
    """
    kind = StatKind.coerce(kind)
    values = np.asarray(values, dtype=float)
    n = np.asarray(n, dtype=float)
    v = np.asarray(noise_variance, dtype=float)
    s = (v / n)[..., None]
    vec = (values - n[..., None] * p0) / np.sqrt(n)[..., None]
    denom = p0 + s
    w = p0 / denom
    q = np.sum(vec * vec / denom, axis=-1)
    q = q + np.sum(w * vec, axis=-1) ** 2 / (s[..., 0] * np.sum(w, axis=-1))
    if kind is StatKind.PROJECTED:
        excess = np.sum(values, axis=-1) - n
        q = q - excess * excess / (v * p0.size)
    elif kind is not StatKind.UNPROJECTED:
        raise ValueError("noisy statistics are either projected or unprojected")
    return q


def _check_noisy(nh, p0):
    p0 = _null(p0)
    if nh.values.size != p0.size:
        raise ShapeError(f"histogram has {nh.values.size} cells but p0 has {p0.size}")
    if nh.n <= 0:
        raise ValueError("n must be positive")
    check_positive(nh.noise_variance, "noise_variance")
    return p0


def centered_vector(nh, p0):
    """``sqrt(n) (values / n - p0)``."""
    p0 = _check_noisy(nh, p0)
    return math.sqrt(nh.n) * (nh.values / nh.n - p0)


def unprojected_statistic(nh, p0):
    p0 = _check_noisy(nh, p0)
    value = float(gof_statistic_batch(nh.values, nh.n, nh.noise_variance, p0,
                                      StatKind.UNPROJECTED))
    return GofStatistic(StatKind.UNPROJECTED, value, p0.size, centered_vector(nh, p0))


def projected_statistic(nh, p0):
    p0 = _check_noisy(nh, p0)
    value = float(gof_statistic_batch(nh.values, nh.n, nh.noise_variance, p0,
                                      StatKind.PROJECTED))
    return GofStatistic(StatKind.PROJECTED, value, p0.size - 1, centered_vector(nh, p0))


def noisy_statistic(nh, p0, kind):
    kind = StatKind.coerce(kind)
    if kind is StatKind.PROJECTED:
        return projected_statistic(nh, p0)
    if kind is StatKind.UNPROJECTED:
        return unprojected_statistic(nh, p0)
    raise ValueError("noisy statistics are either projected or unprojected")


def statistic_df(d, kind, k=0):
    """Degrees of freedom: d - k unprojected, d - k - 1 projected or classical."""
    kind = StatKind.coerce(kind)
    return d - k if kind is StatKind.UNPROJECTED else d - k - 1


def classical_statistic(counts, p0):
    """Pearson's statistic on raw counts."""
    counts = check_histogram(counts)
    p0 = _null(p0)
    if counts.size != p0.size:
        raise ShapeError("histogram and p0 differ in length")
    expected = counts.sum() * p0
    return float(np.sum((counts - expected) ** 2 / expected))


def classical_gof_test(counts, alpha, p0):
    """Non-private Pearson goodness-of-fit test."""
    alpha = check_alpha(alpha)
    value = classical_statistic(counts, p0)
    df = len(p0) - 1
    threshold = chi2_quantile(1.0 - alpha, df)
    stat = GofStatistic(StatKind.CLASSICAL, value, df)
    return TestReport(stat, threshold, alpha, decide(value, threshold))


def zcdp_gof_test(counts, rho, alpha, p0, kind="projected", rng=None):
    """rho-zCDP goodness-of-fit test with an asymptotic chi-square threshold.

    Gaussian noise of variance ``1/rho`` is added to every cell. The threshold
    is the ``1 - alpha`` quantile of chi-square with ``d`` (unprojected) or
    ``d - 1`` (projected) degrees of freedom.
    """
    alpha = check_alpha(alpha)
    p0 = _null(p0)
    nh = gaussian_mechanism(counts, rho, as_stream(rng))
    stat = noisy_statistic(nh, p0, kind)
    threshold = chi2_quantile(1.0 - alpha, stat.df)
    return TestReport(stat, threshold, alpha, decide(stat.value, threshold))


def mc_critical_value(samples, alpha):
    """Order-statistic threshold from ``m`` null samples.

    Returns the ``ceil((m + 1)(1 - alpha))``-th smallest sample (for m = 59 and
    alpha = 0.05 that is the 57th smallest, i.e. the third largest). Rejecting
    when an exchangeable observation strictly exceeds it happens with
    probability ``floor((m + 1) alpha) / (m + 1) <= alpha``.
    """
    alpha = check_alpha(alpha)
    samples = np.sort(np.asarray(samples, dtype=float).ravel())
    m = samples.size
    if m < min_mc_samples(alpha):
        raise InsufficientSamplesError(
            f"need at least {min_mc_samples(alpha)} samples for alpha={alpha}, got {m}")
    k = math.ceil((m + 1) * (1.0 - alpha) - 1e-9)
    return float(samples[k - 1])


def check_mc_samples(m, alpha):
    if int(m) != m or m < min_mc_samples(alpha):
        raise InsufficientSamplesError(
            f"need at least {min_mc_samples(alpha)} Monte Carlo samples for alpha={alpha}, got {m}")
    return int(m)


def _mc_replicates(n, p, epsilon, m, rng):
    """m noisy null histograms: fresh multinomial counts plus fresh Laplace noise."""
    rep = rng.spawn(MC_STREAM)
    counts = sample_multinomial(n, p, rep, size=m)
    return counts + laplace_noise(epsilon, rep, counts.shape)


def dp_mc_gof_test(counts, epsilon, alpha, p0, kind="projected", m=59, rng=None,
                   noise_variance=None):
    """epsilon-DP goodness-of-fit test calibrated by Monte Carlo.

    Laplace(2/epsilon) noise is added per cell. The statistic plugs in
    ``noise_variance`` (default ``8/epsilon^2``). The threshold comes from
    ``m`` statistics simulated under ``p0``.
    """
    alpha = check_alpha(alpha)
    m = check_mc_samples(m, alpha)
    p0 = _null(p0)
    kind = StatKind.coerce(kind)
    rng = as_stream(rng)
    nh = laplace_mechanism(counts, epsilon, rng, noise_variance=noise_variance)
    stat = noisy_statistic(nh, p0, kind)
    v = nh.noise_variance
    reps = _mc_replicates(nh.n, p0, epsilon, m, rng)
    samples = gof_statistic_batch(reps, nh.n, v, p0, kind)
    threshold = mc_critical_value(samples, alpha)
    return TestReport(stat, threshold, alpha, decide(stat.value, threshold),
                      mc_samples_used=m)

