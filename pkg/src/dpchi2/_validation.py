"""Exception types and input validation helpers shared by every module."""

import math

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class InvalidNullError(DomainError):
    """A null-hypothesis probability vector is not strictly positive."""


class ShapeError(DomainError):
    """Array dimensions do not agree."""


class InsufficientSamplesError(DomainError):
    """Too few Monte Carlo samples for the requested level."""


class DegenerateTableError(DomainError):
    """A contingency table has an empty row or column."""


class DataError(ValueError):
    """Malformed user data (files read by the command line tool)."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


PROB_ATOL = 1e-12


def check_positive(value, name):
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def check_probability_vector(p, name="p", strict=False, atol=PROB_ATOL):
    """Return ``p`` as a float array after checking it is a distribution.

    With ``strict=True`` every entry must be positive, which is what the
    goodness-of-fit covariance algebra needs; violations then raise
    :class:`InvalidNullError`.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ShapeError(f"{name} must be a 1-d vector with at least 2 entries")
    if not np.all(np.isfinite(p)):
        raise DomainError(f"{name} has non-finite entries")
    if strict and np.any(p <= 0):
        raise InvalidNullError(f"{name} must be strictly positive, got {p}")
    if np.any(p < 0):
        raise DomainError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise DomainError(f"{name} must sum to 1 (sum={p.sum()!r})")
    return p


def check_histogram(counts, name="histogram"):
    """Validate raw cell counts: a 1-d array of nonnegative integers, d >= 2."""
    arr = np.asarray(counts)
    if arr.ndim != 1 or arr.size < 2:
        raise ShapeError(f"{name} must be a 1-d vector with at least 2 cells")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise DomainError(f"{name} must hold integer counts")
    elif arr.dtype.kind not in "iu":
        raise DomainError(f"{name} must hold integer counts")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise DomainError(f"{name} has negative counts")
    return arr


def check_table(table, name="table"):
    """Validate an r x c contingency table of nonnegative integer counts."""
    arr = np.asarray(table)
    if arr.ndim != 2 or min(arr.shape) < 2:
        raise ShapeError(f"{name} must be a 2-d table with at least 2 rows and columns")
    check_histogram(arr.ravel(), name)
    return arr.astype(np.int64)


def check_same_length(a, b, what="vectors"):
    if np.shape(a)[-1] != np.shape(b)[-1]:
        raise ShapeError(f"{what} have different lengths: {np.shape(a)[-1]} != {np.shape(b)[-1]}")


def min_mc_samples(alpha):
    """Smallest Monte Carlo sample count for which the order-statistic threshold exists."""
    return math.ceil(1.0 / alpha - 1e-12) - 1
