"""Result containers shared by the goodness-of-fit, min chi-square and GWAS tests."""

from dataclasses import dataclass, field
import enum
from typing import Optional

import numpy as np


class Decision(str, enum.Enum):
    REJECT = "Reject"
    FAIL_TO_REJECT = "FailToReject"
    INCONCLUSIVE = "Inconclusive"

    def __str__(self):
        return self.value


class StatKind(str, enum.Enum):
    PROJECTED = "projected"
    UNPROJECTED = "unprojected"
    CLASSICAL = "classical"

    @classmethod
    def coerce(cls, kind):
        if isinstance(kind, cls):
            return kind
        aliases = {"proj": cls.PROJECTED, "unproj": cls.UNPROJECTED,
                   "nonprivate": cls.CLASSICAL}
        key = str(kind).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown statistic kind {kind!r}") from None


@dataclass(frozen=True)
class GofStatistic:
    kind: StatKind
    value: float
    df: int
    centered: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TestReport:
    """Outcome of one hypothesis test.

    ``df`` is set for tests calibrated against a chi-square law,
    ``mc_samples_used`` for Monte Carlo tests. ``converged`` is False when a
    minimization (observed or any replicate) hit its evaluation cap.
    """

    statistic: GofStatistic
    threshold: float
    alpha: float
    decision: Decision
    mc_samples_used: Optional[int] = None
    converged: bool = True
    failed_replicates: int = 0
    theta_hat: Optional[np.ndarray] = field(default=None, compare=False)

    __test__ = False  # not a pytest class

    @property
    def reject(self):
        return self.decision is Decision.REJECT

    @property
    def df_or_m(self):
        return self.mc_samples_used if self.mc_samples_used is not None else self.statistic.df

    def csv_line(self):
        return f"{self.decision},{self.statistic.value:.10g},{self.threshold:.10g},{self.df_or_m}"


def decide(value, threshold):
    """Strict-inequality rejection rule."""
    return Decision.REJECT if value > threshold else Decision.FAIL_TO_REJECT
