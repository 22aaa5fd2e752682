"""Type I error and power simulations.

Each trial ``t`` at grid index ``i`` owns the stream ``RngStream(seed, i, t)``.
The trial draws its data, then its privacy noise, then (for Monte Carlo
tests) its replicates from child stream ``MC_STREAM``. That is the same
order the single-test functions use. Trials are pushed through the
statistics in chunks. Rows of a chunk never interact, so the counts are the
same for any chunking or number of workers.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import math
from typing import Optional

import numpy as np

from ._validation import ConfigError, DomainError, check_alpha, check_probability_vector
from .covariance import private_covariance_inverse
from .gof import MC_STREAM, check_mc_samples, gof_statistic_batch, statistic_df
from .gwas import GwasConfig, pearson_statistic_batch
from .minchi import _Problem, independence_model, min_chi2_decisions, minimize_batch
from .randnoise import (
    RngStream,
    gaussian_noise,
    laplace_noise,
    laplace_variance,
    sample_multinomial,
)
from .report import StatKind
from .specfun import chi2_quantile, chi2_sf

TEST_IDS = ("zcdp-gof", "mc-gof", "zcdp-indep", "mc-indep", "gwas-output-pert", "gwas-proj")
GOF_TESTS = ("zcdp-gof", "mc-gof")
INDEP_TESTS = ("zcdp-indep", "mc-indep", "gwas-proj", "gwas-output-pert")
MC_TESTS = ("mc-gof", "mc-indep")
GWAS_TESTS = ("gwas-proj", "gwas-output-pert")
CSV_HEADER = ("n", "trials", "rejections", "inconclusive", "rate", "se", "analytic_power")
CHUNK = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation sweep.

    ``null`` is ``p0`` for goodness-of-fit tests and ``(pi1, pi2)`` for
    independence tests. Data are drawn from the null probabilities plus
    ``offset`` (row-major for tables). ``budget`` is ``rho`` for the zCDP
    and GWAS tests and ``epsilon`` for the Monte Carlo tests.

    GWAS tests need ``pi2 = (1/2, 1/2)`` and an offset whose two columns
    each sum to zero. Each column of the table is then drawn separately
    with ``n/2`` records, giving the even case/control split.
    """

    test_id: str
    null: tuple
    n_grid: tuple
    kind: StatKind = StatKind.PROJECTED
    offset: Optional[np.ndarray] = None
    trials: int = 5000
    alpha: float = 0.05
    budget: float = 0.001
    m: int = 59
    master_seed: int = 0
    noise_variance: Optional[float] = None
    reestimate: bool = True
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        try:
            self._validate()
        except (DomainError, ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def _validate(self):
        if self.test_id not in TEST_IDS:
            raise ConfigError(f"unknown test id {self.test_id!r}; choose from {', '.join(TEST_IDS)}")
        kind = StatKind.coerce(self.kind)
        if self.test_id == "gwas-output-pert":
            kind = StatKind.CLASSICAL
        object.__setattr__(self, "kind", kind)
        if self.test_id in GOF_TESTS:
            null = (check_probability_vector(self.null, "null", strict=True),)
        else:
            if len(self.null) != 2:
                raise ConfigError("independence tests need null = (pi1, pi2)")
            null = tuple(check_probability_vector(p, "null marginal", strict=True)
                         for p in self.null)
        object.__setattr__(self, "null", null)
        p_null = self.null_probabilities
        offset = np.zeros(p_null.size) if self.offset is None else np.asarray(
            self.offset, dtype=float).ravel()
        if offset.shape != p_null.shape:
            raise ConfigError(f"offset has {offset.size} entries, expected {p_null.size}")
        if abs(offset.sum()) > 1e-12:
            raise ConfigError("offset entries must sum to zero")
        object.__setattr__(self, "offset", offset)
        shifted = p_null + offset
        if np.any(shifted < -1e-15) or np.any(shifted > 1 + 1e-15):
            raise ConfigError("null + offset leaves [0, 1]")
        check_probability_vector(np.clip(shifted, 0.0, 1.0), "null + offset")
        if self.test_id in GWAS_TESTS:
            pi1, pi2 = self.null
            if pi1.size != 3 or not np.allclose(pi2, [0.5, 0.5], atol=1e-12):
                raise ConfigError("GWAS tests need a 3 x 2 null with pi2 = (1/2, 1/2)")
            if np.any(np.abs(offset.reshape(3, 2).sum(axis=0)) > 1e-12):
                raise ConfigError("GWAS offsets must keep each column's mass at 1/2")
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(n <= 0 for n in grid) or any(
                n != g for n, g in zip(grid, self.n_grid)):
            raise ConfigError("n_grid must be a nonempty list of positive integers")
        if self.test_id in GWAS_TESTS and any(n % 2 for n in grid):
            raise ConfigError("GWAS sample sizes must be even")
        object.__setattr__(self, "n_grid", grid)
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        check_alpha(self.alpha)
        if not self.budget > 0:
            raise ConfigError("privacy budget must be positive")
        if self.test_id in MC_TESTS:
            check_mc_samples(self.m, self.alpha)
        if self.noise_variance is not None and not self.noise_variance > 0:
            raise ConfigError("noise_variance must be positive")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")

    @property
    def null_probabilities(self):
        if self.test_id in GOF_TESTS:
            return self.null[0]
        pi1, pi2 = self.null
        return np.outer(pi1, pi2).ravel()

    @property
    def true_probabilities(self):
        p = self.null_probabilities + self.offset
        return np.clip(p, 0.0, None)

    @property
    def shape(self):
        if self.test_id in GOF_TESTS:
            return None
        return (self.null[0].size, self.null[1].size)


@dataclass(frozen=True)
class ExperimentRow:
    n: int
    trials: int
    rejections: int
    inconclusive: int
    analytic_power: Optional[float] = None

    def __post_init__(self):
        if self.rejections + self.inconclusive > self.trials:
            raise ValueError("rejections + inconclusive exceed trials")

    @property
    def failures(self):
        """Trials that ended in FailToReject."""
        return self.trials - self.rejections - self.inconclusive

    @property
    def rate(self):
        return self.rejections / self.trials

    @property
    def se(self):
        r = self.rate
        return math.sqrt(r * (1.0 - r) / self.trials)


# -- analytic power ------------------------------------------------------------

def analytic_power(p0, p1, n, rho, kind="projected", alpha=0.05):
    """Power predicted by the noncentral chi-square limit of the zCDP GOF statistics.

    The noncentrality is the quadratic form of ``shift = sqrt(n)(p1 - p0)``
    in the inverse private covariance, with scaled noise variance ``1/(n rho)``
    and the covariance taken at ``p0``. That is the local-alternative
    convention, so for a fixed alternative it is an approximation. The
    classical kind uses ``sum(shift**2 / p0)`` with d - 1 degrees of freedom.
    """
    p0 = check_probability_vector(p0, "p0", strict=True)
    p1 = check_probability_vector(p1, "p1")
    if p1.size != p0.size:
        raise DomainError("p0 and p1 differ in length")
    alpha = check_alpha(alpha)
    kind = StatKind.coerce(kind)
    diff = p1 - p0
    if abs(diff.sum()) > 1e-12:
        raise DomainError("p1 - p0 must sum to zero")
    delta = math.sqrt(n) * diff
    if kind is StatKind.CLASSICAL:
        ncp = float(np.sum(delta * delta / p0))
    else:
        if not rho > 0:
            raise DomainError("rho must be positive")
        inv = private_covariance_inverse(p0, 1.0 / (n * rho))
        ncp = float(delta @ inv @ delta)
    df = statistic_df(p0.size, kind)
    return float(chi2_sf(chi2_quantile(1.0 - alpha, df), df, ncp))


def _row_analytic_power(cfg, n):
    if cfg.test_id != "zcdp-gof":
        return None
    return analytic_power(cfg.null[0], cfg.true_probabilities, n, cfg.budget, cfg.kind, cfg.alpha)


# -- trial pipeline --------------------------------------------------------------

def _mc_thresholds(samples, alpha):
    m = samples.shape[-1]
    k = math.ceil((m + 1) * (1.0 - alpha) - 1e-9)
    return np.sort(samples, axis=-1)[..., k - 1]


def _draw_data(cfg, n, streams):
    p = cfg.true_probabilities
    if cfg.test_id in GWAS_TESTS:
        cols = p.reshape(3, 2)
        out = np.empty((len(streams), 6), dtype=np.int64)
        for i, s in enumerate(streams):
            a = sample_multinomial(n // 2, 2.0 * cols[:, 0], s)
            b = sample_multinomial(n // 2, 2.0 * cols[:, 1], s)
            out[i] = np.stack([a, b], axis=1).ravel()
        return out
    return np.stack([sample_multinomial(n, p, s) for s in streams])


def _noise(cfg, streams, d):
    if cfg.test_id in MC_TESTS:
        return np.stack([laplace_noise(cfg.budget, s, d) for s in streams])
    return np.stack([gaussian_noise(cfg.budget, s, d) for s in streams])


def _classical(cfg, counts):
    """Non-private reference arm on raw counts; degenerate tables count as inconclusive."""
    if cfg.test_id in GOF_TESTS:
        p0 = cfg.null[0]
        expected = counts.sum(axis=1, keepdims=True) * p0
        q = np.sum((counts - expected) ** 2 / expected, axis=1)
        df = p0.size - 1
        bad = np.zeros(len(q), dtype=bool)
    else:
        r, c = cfg.shape
        q = pearson_statistic_batch(counts.reshape(-1, r, c))
        df = (r - 1) * (c - 1)
        bad = np.isnan(q)
    threshold = chi2_quantile(1.0 - cfg.alpha, df)
    return (~bad) & (np.nan_to_num(q) > threshold), bad


def _mc_gof(cfg, n, counts, noise, streams):
    p0 = cfg.null[0]
    v = laplace_variance(cfg.budget) if cfg.noise_variance is None else cfg.noise_variance
    value = gof_statistic_batch(counts + noise, n, v, p0, cfg.kind)
    reps = []
    for s in streams:
        rep = s.spawn(MC_STREAM)
        rc = sample_multinomial(n, p0, rep, size=cfg.m)
        reps.append(rc + laplace_noise(cfg.budget, rep, rc.shape))
    reps = np.concatenate(reps)
    samples = gof_statistic_batch(reps, n, v, p0, cfg.kind).reshape(len(streams), cfg.m)
    return value > _mc_thresholds(samples, cfg.alpha), np.zeros(len(streams), dtype=bool)


def _mc_indep(cfg, n, counts, noise, streams, model):
    v = laplace_variance(cfg.budget) if cfg.noise_variance is None else cfg.noise_variance
    value, _, _, inconc, _, theta = min_chi2_decisions(
        counts + noise, n, v, model, cfg.kind, cfg.alpha)
    p_hat = model.prob_map(theta)
    reps = []
    for s, p in zip(streams, p_hat):
        rep = s.spawn(MC_STREAM)
        rc = sample_multinomial(n, p, rep, size=cfg.m)
        reps.append(rc + laplace_noise(cfg.budget, rep, rc.shape))
    reps = np.concatenate(reps)
    trials = len(streams)
    if cfg.reestimate:
        _, samples, _, _, _ = minimize_batch(reps, n, v, model, cfg.kind)
    else:
        problem = _Problem(reps, n, v, model, cfg.kind)
        samples = problem.statistic(np.repeat(theta, cfg.m, axis=0), np.arange(trials * cfg.m))
    thresholds = _mc_thresholds(samples.reshape(trials, cfg.m), cfg.alpha)
    return (value > thresholds) & ~inconc, inconc


def _output_perturbation(cfg, n, counts, streams):
    gc = GwasConfig.build(n, cfg.alpha, cfg.budget)
    q = pearson_statistic_batch(counts.reshape(-1, 3, 2))
    z = np.array([float(s.standard_normal()) for s in streams])
    bad = np.isnan(q)
    return (~bad) & (np.nan_to_num(q) + gc.sigma * z > gc.threshold), bad


def _run_chunk(cfg, n_index, n, start, stop):
    """Returns ``(rejections, inconclusive)`` for trials ``start..stop-1`` at grid point ``n``."""
    streams = [RngStream(cfg.master_seed, n_index, t) for t in range(start, stop)]
    counts = _draw_data(cfg, n, streams)
    d = counts.shape[1]
    if cfg.kind is StatKind.CLASSICAL and cfg.test_id != "gwas-output-pert":
        reject, inconc = _classical(cfg, counts)
    elif cfg.test_id == "gwas-output-pert":
        reject, inconc = _output_perturbation(cfg, n, counts, streams)
    else:
        noise = _noise(cfg, streams, d)
        if cfg.test_id == "zcdp-gof":
            value = gof_statistic_batch(counts + noise, n, 1.0 / cfg.budget, cfg.null[0], cfg.kind)
            threshold = chi2_quantile(1.0 - cfg.alpha, statistic_df(d, cfg.kind))
            reject, inconc = value > threshold, np.zeros(len(streams), dtype=bool)
        elif cfg.test_id == "mc-gof":
            reject, inconc = _mc_gof(cfg, n, counts, noise, streams)
        else:
            model = independence_model(*cfg.shape)
            if cfg.test_id == "mc-indep":
                reject, inconc = _mc_indep(cfg, n, counts, noise, streams, model)
            else:
                _, _, reject, inconc, _, _ = min_chi2_decisions(
                    counts + noise, n, 1.0 / cfg.budget, model, cfg.kind, cfg.alpha)
    return int(np.sum(reject)), int(np.sum(inconc))


def _run_task(args):
    return _run_chunk(*args)


def run_experiment(cfg, workers=1, progress=None):
    """Run ``cfg.trials`` trials at every grid size and return one row per size, in grid order.

    ``workers > 1`` spreads chunks over processes; the output does not
    depend on it. ``progress`` (optional) is called with each finished row.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise ConfigError("run_experiment needs an ExperimentConfig")
    if int(workers) != workers or workers < 1:
        raise ConfigError("workers must be a positive integer")
    tasks = [(cfg, i, n, start, min(start + CHUNK, cfg.trials))
             for i, n in enumerate(cfg.n_grid)
             for start in range(0, cfg.trials, CHUNK)]
    if workers == 1:
        results = map(_run_task, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=int(workers))
        results = pool.map(_run_task, tasks)
    rows = []
    totals = {}
    try:
        per_n = -(-cfg.trials // CHUNK)
        for task, (rej, inc) in zip(tasks, results):
            i = task[1]
            acc = totals.setdefault(i, [0, 0, 0])
            acc[0] += rej
            acc[1] += inc
            acc[2] += 1
            if acc[2] == per_n:
                n = cfg.n_grid[i]
                row = ExperimentRow(n, cfg.trials, acc[0], acc[1], _row_analytic_power(cfg, n))
                rows.append(row)
                if progress is not None:
                    progress(row)
    finally:
        if pool is not None:
            pool.shutdown()
    return rows


# -- CSV ------------------------------------------------------------------------

def _fmt(x):
    return "" if x is None else f"{x:.6f}"


def format_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.n, r.trials, r.rejections, r.inconclusive, _fmt(r.rate),
                         _fmt(r.se), _fmt(r.analytic_power)])
    return buf.getvalue()


def emit_csv(rows, path):
    """Write rows as UTF-8 CSV with LF line endings."""
    text = format_csv(rows)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write experiment CSV to {path}: {exc.strerror or exc}") from exc


def read_csv(path):
    """Parse a file written by :func:`emit_csv` back into dictionaries."""
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# -- presets --------------------------------------------------------------------

GOF_NULL = (1 / 2, 1 / 6, 1 / 6, 1 / 6)
GOF_OFFSET = tuple(0.01 * x for x in (1.0, -1 / 3, -1 / 3, -1 / 3))
INDEP_NULL = ((2 / 3, 1 / 3), (1 / 2, 1 / 2))
INDEP_OFFSET = (0.01, 0.0, -0.01, 0.0)
GOF_GRID = (1000, 2500, 5000, 10000, 20000, 35000, 50000, 75000, 100000)
INDEP_GRID = (1000, 2500, 5000, 10000, 20000, 35000, 50000, 75000, 100000)
GWAS_GRID = (250, 500, 750, 1000, 1500, 2000, 3000, 4000, 6000, 8000, 12000, 16000)
PAPER_RHO = 0.001
PAPER_EPSILON = math.sqrt(2 * PAPER_RHO)


def gwas_setup(case_probs, control_probs):
    """Null marginals and offset for a case/control design with given column distributions.

    The null is independence with row marginal equal to the average of the
    two columns. The offset moves each half-column to its own distribution.
    """
    a = check_probability_vector(case_probs, "case_probs")
    b = check_probability_vector(control_probs, "control_probs")
    joint = np.stack([a, b], axis=1) / 2.0
    pi1 = joint.sum(axis=1)
    null = (tuple(pi1), (0.5, 0.5))
    offset = (joint - np.outer(pi1, [0.5, 0.5])).ravel()
    return null, tuple(offset)


GWAS_NULL, GWAS_OFFSET = gwas_setup((1 / 3, 1 / 3, 1 / 3), (1 / 2, 1 / 4, 1 / 4))

PRESETS = {
    "gof-power-paper": dict(test_id="zcdp-gof", null=GOF_NULL, offset=GOF_OFFSET,
                            n_grid=GOF_GRID, budget=PAPER_RHO),
    "gof-typei-paper": dict(test_id="zcdp-gof", null=GOF_NULL, n_grid=(10000, 100000),
                            trials=10000, budget=PAPER_RHO),
    "mc-gof-power-paper": dict(test_id="mc-gof", null=GOF_NULL, offset=GOF_OFFSET,
                               n_grid=GOF_GRID, budget=PAPER_EPSILON),
    "indep-power-paper": dict(test_id="zcdp-indep", null=INDEP_NULL, offset=INDEP_OFFSET,
                              n_grid=INDEP_GRID, budget=PAPER_RHO),
    "indep-typei-paper": dict(test_id="zcdp-indep", null=INDEP_NULL, n_grid=(10000, 100000),
                              trials=10000, budget=PAPER_RHO),
    "mc-indep-power-paper": dict(test_id="mc-indep", null=INDEP_NULL, offset=INDEP_OFFSET,
                                 n_grid=INDEP_GRID, trials=1000, budget=PAPER_EPSILON),
    "gwas-proj-paper": dict(test_id="gwas-proj", null=GWAS_NULL, offset=GWAS_OFFSET,
                            n_grid=GWAS_GRID, budget=PAPER_RHO),
    "gwas-output-pert-paper": dict(test_id="gwas-output-pert", null=GWAS_NULL,
                                   offset=GWAS_OFFSET, n_grid=GWAS_GRID, budget=PAPER_RHO),
}


def preset(name, **overrides):
    """An :class:`ExperimentConfig` for a named experiment, with field overrides."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    params = dict(PRESETS[name])
    params.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(name=name, **params)
