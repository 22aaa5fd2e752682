"""scikit-learn style wrappers around the tests and mechanisms.

Constructor arguments are stored untouched (so ``get_params``/``set_params``
and ``clone`` work) and validated in ``fit``. ``fit(X)`` runs the test on one
histogram or table and stores the result in attributes ending in ``_``.
``predict(X)`` runs the test on each item of a stack and returns decision
labels. Item ``i`` uses stream ``(random_state, i)``, so results depend only
on the seed and the position.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DomainError, check_histogram
from .gof import classical_gof_test, dp_mc_gof_test, zcdp_gof_test
from .gwas import output_perturbation_test
from .minchi import (
    classical_independence_test,
    dp_mc_min_test,
    independence_model,
    zcdp_min_chi2_test,
)
from .randnoise import (
    GAUSSIAN,
    LAPLACE,
    RngStream,
    gaussian_mechanism,
    laplace_mechanism,
)
from .report import StatKind


def _stream(random_state, *path):
    seed = 0 if random_state is None else int(random_state)
    return RngStream(seed, *path)


class _TestMixin:
    """Shared fit/predict plumbing; subclasses implement ``_run(X, rng)``."""

    def fit(self, X, y=None):
        report = self._run(X, _stream(self.random_state))
        self.report_ = report
        self.statistic_ = report.statistic.value
        self.threshold_ = report.threshold
        self.decision_ = report.decision
        self.reject_ = report.reject
        return self

    def predict(self, X):
        """Decision label (``"Reject"``, ``"FailToReject"``, ``"Inconclusive"``) per item of ``X``."""
        return np.array([str(self._run(x, _stream(self.random_state, i)).decision)
                         for i, x in enumerate(X)])

    def summary(self):
        check_is_fitted(self, "report_")
        return self.report_.csv_line()


class PrivateGoodnessOfFit(_TestMixin, BaseEstimator):
    """Private goodness-of-fit test of a histogram against ``null``.

    With ``epsilon`` set the test is the Laplace/Monte Carlo one; otherwise
    it is the Gaussian zCDP test with budget ``rho``. ``statistic`` is
    ``"projected"``, ``"unprojected"`` or ``"classical"`` (non-private).
    """

    def __init__(self, null=None, rho=0.001, epsilon=None, alpha=0.05,
                 statistic="projected", mc_samples=59, noise_variance=None, random_state=0):
        self.null = null
        self.rho = rho
        self.epsilon = epsilon
        self.alpha = alpha
        self.statistic = statistic
        self.mc_samples = mc_samples
        self.noise_variance = noise_variance
        self.random_state = random_state

    def _run(self, X, rng):
        if self.null is None:
            raise DomainError("null must be given")
        kind = StatKind.coerce(self.statistic)
        if kind is StatKind.CLASSICAL:
            return classical_gof_test(X, self.alpha, self.null)
        if self.epsilon is not None:
            return dp_mc_gof_test(X, self.epsilon, self.alpha, self.null, kind,
                                  m=self.mc_samples, rng=rng, noise_variance=self.noise_variance)
        return zcdp_gof_test(X, self.rho, self.alpha, self.null, kind, rng=rng)


class PrivateIndependenceTest(_TestMixin, BaseEstimator):
    """Private minimum chi-square test of independence for an ``r x c`` table."""

    def __init__(self, rho=0.001, epsilon=None, alpha=0.05, statistic="projected",
                 mc_samples=59, noise_variance=None, reestimate=True, random_state=0):
        self.rho = rho
        self.epsilon = epsilon
        self.alpha = alpha
        self.statistic = statistic
        self.mc_samples = mc_samples
        self.noise_variance = noise_variance
        self.reestimate = reestimate
        self.random_state = random_state

    def _run(self, X, rng):
        table = np.asarray(X)
        kind = StatKind.coerce(self.statistic)
        if kind is StatKind.CLASSICAL:
            return classical_independence_test(table, self.alpha)
        if table.ndim != 2:
            raise DomainError("independence tests need a 2-d table")
        model = independence_model(*table.shape)
        if self.epsilon is not None:
            return dp_mc_min_test(table, self.epsilon, self.alpha, model, kind,
                                  m=self.mc_samples, rng=rng,
                                  noise_variance=self.noise_variance,
                                  reestimate=self.reestimate)
        return zcdp_min_chi2_test(table, self.rho, self.alpha, model, kind, rng=rng)

    def fit(self, X, y=None):
        super().fit(X, y)
        self.theta_ = self.report_.theta_hat
        return self


class OutputPerturbationTest(_TestMixin, BaseEstimator):
    """Gaussian output perturbation of Pearson's statistic on evenly split 3 x 2 tables."""

    def __init__(self, rho=0.001, alpha=0.05, random_state=0):
        self.rho = rho
        self.alpha = alpha
        self.random_state = random_state

    def _run(self, X, rng):
        return output_perturbation_test(X, self.rho, self.alpha, rng=rng)


class NoisyHistogramTransformer(TransformerMixin, BaseEstimator):
    """Add Gaussian (``rho``) or Laplace (``epsilon``) noise to each row of count vectors."""

    def __init__(self, mechanism=GAUSSIAN, rho=0.001, epsilon=None, random_state=0):
        self.mechanism = mechanism
        self.rho = rho
        self.epsilon = epsilon
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.mechanism not in (GAUSSIAN, LAPLACE):
            raise DomainError(f"mechanism must be {GAUSSIAN!r} or {LAPLACE!r}")
        X = np.atleast_2d(X)
        self.n_features_in_ = X.shape[1]
        self.noise_variance_ = (1.0 / self.rho if self.mechanism == GAUSSIAN
                                else 8.0 / self.epsilon ** 2)
        return self

    def transform(self, X):
        check_is_fitted(self, "noise_variance_")
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise DomainError(f"expected {self.n_features_in_} cells, got {X.shape[1]}")
        out = np.empty(X.shape, dtype=float)
        for i, row in enumerate(X):
            rng = _stream(self.random_state, i)
            counts = check_histogram(row)
            if self.mechanism == GAUSSIAN:
                out[i] = gaussian_mechanism(counts, self.rho, rng).values
            else:
                out[i] = laplace_mechanism(counts, self.epsilon, rng).values
        return out
