"""Private minimum chi-square tests for composite nulls.

The null is a parametric family of cell probabilities. A cheap plug-in
estimate of the parameters fixes the middle matrix (the inverse private
covariance at that estimate). The quadratic form of the centered noisy vector,
or its projected version, is then minimized over the parameters with
Nelder-Mead.

Everything runs on batches of noisy histograms so a simulation can push
thousands of trials through one minimization. A single test is a batch of
one and goes through the same code.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._optimize import nelder_mead_batch
from ._validation import (
    DegenerateTableError,
    DomainError,
    ShapeError,
    check_alpha,
    check_histogram,
    check_probability_vector,
)
from .covariance import woodbury_inverse
from .gof import (
    _mc_replicates,
    check_mc_samples,
    gof_statistic_batch,
    mc_critical_value,
    statistic_df,
)
from .randnoise import as_stream, gaussian_mechanism, laplace_mechanism
from .report import Decision, GofStatistic, StatKind, TestReport, decide
from .specfun import chi2_quantile

MARGINAL_FLOOR = 1e-6
SMALL_CELL_COUNT = 5.0
SIMPLEX_STEP = 0.05
XATOL = 1e-10
MAXFEV = 10_000


@dataclass(frozen=True)
class ParametricModel:
    """A null family of multinomial probability vectors.

    All callables work on stacked inputs (leading batch axes):

    * ``prob_map(params[..., k]) -> p[..., d]``
    * ``naive_estimator(values[..., d]) -> (params[..., k], clamped[...])``,
      where ``clamped`` flags estimates that had to be pulled back into the
      feasible region
    * ``project(params) -> params`` maps any point onto the feasible region
    * ``small_cell(n, params, clamped) -> bool[...]`` (optional) marks trials
      whose asymptotic approximation is not trusted.

    Regularity of the family (a smooth, full-rank ``p``) is the model
    author's responsibility; it is not checked.
    """

    d: int
    k: int
    prob_map: Callable
    naive_estimator: Callable
    project: Callable
    label: str = "model"
    small_cell: Optional[Callable] = None
    shape: Optional[tuple] = None

    def __post_init__(self):
        if not 0 <= self.k < self.d:
            raise DomainError(f"need 0 <= k < d, got k={self.k}, d={self.d}")


@dataclass(frozen=True)
class MinimizationResult:
    theta_hat: np.ndarray
    value: float
    iterations: int
    converged: bool


def constant_model(p0):
    """The simple null ``p = p0`` (k = 0); min chi-square reduces to goodness of fit."""
    p0 = check_probability_vector(p0, "p0", strict=True)

    def prob_map(theta):
        theta = np.asarray(theta, dtype=float)
        return np.broadcast_to(p0, theta.shape[:-1] + (p0.size,)).copy()

    def naive(values):
        values = np.asarray(values, dtype=float)
        lead = values.shape[:-1]
        return np.zeros(lead + (0,)), np.zeros(lead, dtype=bool)

    return ParametricModel(d=p0.size, k=0, prob_map=prob_map, naive_estimator=naive,
                           project=lambda theta: np.asarray(theta, dtype=float),
                           label="constant")


def project_simplex(v):
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, d + 1)
    cond = u - css / ind > 0
    rho = d - 1 - np.argmax(cond[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - tau, 0.0)


def _complete(partial):
    return np.concatenate([partial, 1.0 - partial.sum(axis=-1, keepdims=True)], axis=-1)


def independence_model(r, c):
    """Independence of rows and columns in an ``r x c`` table.

    ``theta = (pi1[:r-1], pi2[:c-1])``. Cells are flattened row-major, so
    ``p = outer(pi1, pi2).ravel()``. The naive estimator divides the noisy
    row and column sums by the noisy total, clamps them to
    ``[1e-6, 1 - 1e-6]`` and renormalizes.
    """
    if int(r) != r or int(c) != c or r < 2 or c < 2:
        raise DomainError(f"need r, c >= 2, got r={r}, c={c}")
    r, c = int(r), int(c)

    def split(theta):
        theta = np.asarray(theta, dtype=float)
        return _complete(theta[..., : r - 1]), _complete(theta[..., r - 1:])

    def prob_map(theta):
        a, b = split(theta)
        return (a[..., :, None] * b[..., None, :]).reshape(a.shape[:-1] + (r * c,))

    def naive(values):
        table = np.asarray(values, dtype=float).reshape(np.shape(values)[:-1] + (r, c))
        total = table.sum(axis=(-2, -1))
        bad_total = total <= 0
        safe_total = np.where(bad_total, 1.0, total)[..., None]
        rows = table.sum(axis=-1) / safe_total
        cols = table.sum(axis=-2) / safe_total
        clamped = bad_total.copy()
        out = []
        for marg in (rows, cols):
            clamped |= np.any((marg <= 0) | (marg >= 1), axis=-1)
            m = np.clip(marg, MARGINAL_FLOOR, 1.0 - MARGINAL_FLOOR)
            out.append(m / m.sum(axis=-1, keepdims=True))
        theta = np.concatenate([out[0][..., : r - 1], out[1][..., : c - 1]], axis=-1)
        return theta, clamped

    def project(theta):
        a, b = split(theta)
        a = project_simplex(a)
        b = project_simplex(b)
        return np.concatenate([a[..., : r - 1], b[..., : c - 1]], axis=-1)

    def small_cell(n, theta, clamped):
        a, b = split(theta)
        expected = np.asarray(n, dtype=float)[..., None, None] * a[..., :, None] * b[..., None, :]
        return np.asarray(clamped) | np.any(expected <= SMALL_CELL_COUNT, axis=(-2, -1))

    return ParametricModel(d=r * c, k=r + c - 2, prob_map=prob_map, naive_estimator=naive,
                           project=project, label=f"independence {r}x{c}",
                           small_cell=small_cell, shape=(r, c))


def small_cell_check(n, theta_tilde, r, c, clamped=False):
    """True when some expected count ``n * pi1_i * pi2_j`` is at most 5, or the estimate was clamped."""
    model = independence_model(r, c)
    return bool(model.small_cell(n, np.asarray(theta_tilde, dtype=float), clamped))


# -- batch kernels ----------------------------------------------------------

class _Problem:
    """Per-row data for a batch of minimizations: values, n, middle matrix and naive start."""

    def __init__(self, values, n, v, model, kind):
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        B = self.values.shape[0]
        self.n = np.broadcast_to(np.asarray(n, dtype=float), (B,)).copy()
        self.v = np.broadcast_to(np.asarray(v, dtype=float), (B,)).copy()
        self.sqrt_n = np.sqrt(self.n)
        self.model = model
        self.kind = StatKind.coerce(kind)
        self.theta_naive, self.clamped = model.naive_estimator(self.values)
        self.theta0 = model.project(self.theta_naive)
        p_hat = model.prob_map(self.theta0)
        self.middle = woodbury_inverse(p_hat, self.v / self.n)

    def statistic(self, theta, rows):
        p = self.model.prob_map(theta)
        vec = (self.values[rows] - self.n[rows, None] * p) / self.sqrt_n[rows, None]
        if self.kind is StatKind.PROJECTED:
            # projecting the matrix on both sides == using the mean-removed vector
            vec = vec - vec.mean(axis=-1, keepdims=True)
        mv = np.sum(self.middle[rows] * vec[:, None, :], axis=-1)
        return np.sum(vec * mv, axis=-1)

    def objective(self, theta, rows):
        feasible = self.model.project(theta)
        penalty = np.sum(np.abs(theta - feasible), axis=-1)
        return self.statistic(feasible, rows) + penalty


def _minimize(problem):
    """Returns fitted params, value, nfev, converged arrays for every row."""
    model = problem.model
    B = problem.values.shape[0]
    rows = np.arange(B)
    if model.k == 0:
        theta = np.zeros((B, 0))
        value = gof_statistic_batch(problem.values, problem.n, problem.v,
                                    model.prob_map(np.zeros(0)), problem.kind)
        return theta, value, np.zeros(B, dtype=np.int64), np.ones(B, dtype=bool)
    x, _, nfev, converged = nelder_mead_batch(
        problem.objective, problem.theta0, step=SIMPLEX_STEP, xatol=XATOL, maxfev=MAXFEV)
    theta = model.project(x)
    value = problem.statistic(theta, rows)
    # never worse than the naive start
    start = problem.statistic(problem.theta0, rows)
    worse = value > start
    theta[worse] = problem.theta0[worse]
    value[worse] = start[worse]
    return theta, value, nfev, converged


def minimize_batch(values, n, noise_variance, model, kind):
    """Minimize the statistic for each row of ``values``.

    Returns ``(theta_hat, value, nfev, converged, clamped)`` arrays.
    """
    problem = _Problem(values, n, noise_variance, model, kind)
    theta, value, nfev, converged = _minimize(problem)
    return theta, value, nfev, converged, problem.clamped


def min_chi2_decisions(values, n, noise_variance, model, kind, alpha):
    """Asymptotic decisions for a batch of noisy histograms.

    Returns ``(value, threshold, reject, inconclusive, converged, theta_hat)``.
    """
    kind = StatKind.coerce(kind)
    problem = _Problem(values, n, noise_variance, model, kind)
    theta, value, _, converged = _minimize(problem)
    threshold = chi2_quantile(1.0 - alpha, statistic_df(model.d, kind, model.k))
    inconclusive = _inconclusive(problem)
    reject = (value > threshold) & ~inconclusive
    return value, threshold, reject, inconclusive, converged, theta


def _inconclusive(problem):
    model = problem.model
    if model.small_cell is None:
        return np.zeros(problem.n.shape, dtype=bool)
    return np.asarray(model.small_cell(problem.n, problem.theta_naive, problem.clamped),
                      dtype=bool)


# -- single-histogram API ---------------------------------------------------

def _as_vector(counts, model):
    arr = np.asarray(counts)
    if arr.ndim == 2:
        if model.shape is not None and arr.shape != model.shape:
            raise ShapeError(f"table shape {arr.shape} does not match model {model.shape}")
        arr = arr.ravel()
    arr = check_histogram(arr)
    if arr.size != model.d:
        raise ShapeError(f"histogram has {arr.size} cells, model expects {model.d}")
    return arr


def _check_kind(kind):
    kind = StatKind.coerce(kind)
    if kind is StatKind.CLASSICAL:
        raise ValueError("use classical_independence_test for the non-private statistic")
    return kind


def general_statistic(nh, model, theta, kind):
    """Statistic at ``theta`` with the middle matrix fixed at the naive estimate."""
    kind = _check_kind(kind)
    if nh.values.size != model.d:
        raise ShapeError("histogram and model differ in dimension")
    if model.k == 0:
        p0 = model.prob_map(np.zeros(0))
        return float(gof_statistic_batch(nh.values, nh.n, nh.noise_variance, p0, kind))
    problem = _Problem(nh.values, nh.n, nh.noise_variance, model, kind)
    theta = np.asarray(theta, dtype=float).reshape(1, model.k)
    return float(problem.statistic(theta, np.arange(1))[0])


def minimize_statistic(nh, model, kind):
    """Minimize the statistic over the model, starting from the clamped naive estimate."""
    kind = _check_kind(kind)
    if nh.values.size != model.d:
        raise ShapeError("histogram and model differ in dimension")
    theta, value, nfev, converged, _ = minimize_batch(
        nh.values, nh.n, nh.noise_variance, model, kind)
    return MinimizationResult(theta[0], float(value[0]), int(nfev[0]), bool(converged[0]))


def zcdp_min_chi2_test(counts, rho, alpha, model, kind="projected", rng=None):
    """rho-zCDP minimum chi-square test against ``chi2(d - k)`` or ``chi2(d - k - 1)``."""
    alpha = check_alpha(alpha)
    kind = _check_kind(kind)
    counts = _as_vector(counts, model)
    nh = gaussian_mechanism(counts, rho, as_stream(rng))
    value, threshold, reject, inconc, conv, theta = min_chi2_decisions(
        nh.values, nh.n, nh.noise_variance, model, kind, alpha)
    df = statistic_df(model.d, kind, model.k)
    if inconc[0]:
        decision = Decision.INCONCLUSIVE
    else:
        decision = decide(value[0], threshold)
    return TestReport(GofStatistic(kind, float(value[0]), df), threshold, alpha, decision,
                      converged=bool(conv[0]), theta_hat=theta[0])


def dp_mc_min_test(counts, epsilon, alpha, model, kind="projected", m=59, rng=None,
                   noise_variance=None, reestimate=True):
    """epsilon-DP minimum chi-square test calibrated by Monte Carlo.

    Every replicate draws counts from ``p(theta_hat)`` and adds fresh Laplace
    noise. With ``reestimate=True`` (the default) it then reruns the whole
    pipeline: naive estimate, middle matrix and minimization. With
    ``reestimate=False`` the replicate statistic is evaluated at the observed
    ``theta_hat``.
    """
    alpha = check_alpha(alpha)
    m = check_mc_samples(m, alpha)
    kind = _check_kind(kind)
    counts = _as_vector(counts, model)
    rng = as_stream(rng)
    nh = laplace_mechanism(counts, epsilon, rng, noise_variance=noise_variance)
    v = nh.noise_variance
    value, _, _, inconc, conv, theta = min_chi2_decisions(
        nh.values, nh.n, v, model, kind, alpha)
    theta_hat = theta[0]
    p_hat = model.prob_map(theta_hat)
    reps = _mc_replicates(nh.n, p_hat, epsilon, m, rng)
    if reestimate or model.k == 0:
        _, samples, _, rep_conv, _ = minimize_batch(reps, nh.n, v, model, kind)
    else:
        problem = _Problem(reps, nh.n, v, model, kind)
        samples = problem.statistic(np.repeat(theta_hat[None, :], m, axis=0), np.arange(m))
        rep_conv = np.ones(m, dtype=bool)
    threshold = mc_critical_value(samples, alpha)
    df = statistic_df(model.d, kind, model.k)
    decision = Decision.INCONCLUSIVE if inconc[0] else decide(value[0], threshold)
    failed = int(np.sum(~rep_conv))
    return TestReport(GofStatistic(kind, float(value[0]), df), threshold, alpha, decision,
                      mc_samples_used=m, converged=bool(conv[0]) and failed == 0,
                      failed_replicates=failed, theta_hat=theta_hat)


def classical_independence_statistic(table):
    """Pearson's independence statistic on a raw table."""
    table = np.asarray(table, dtype=float)
    n = table.sum()
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    if np.any(rows <= 0) or np.any(cols <= 0):
        raise DegenerateTableError("every row and column margin must be positive")
    expected = np.outer(rows, cols) / n
    return float(np.sum((table - expected) ** 2 / expected))


def classical_independence_test(table, alpha):
    """Non-private Pearson independence test with ``(r-1)(c-1)`` degrees of freedom."""
    alpha = check_alpha(alpha)
    table = np.asarray(table)
    r, c = table.shape
    df = (r - 1) * (c - 1)
    value = classical_independence_statistic(table)
    threshold = chi2_quantile(1.0 - alpha, df)
    return TestReport(GofStatistic(StatKind.CLASSICAL, value, df), threshold, alpha,
                      decide(value, threshold))
