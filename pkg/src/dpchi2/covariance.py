"""Dense covariance algebra for noisy multinomial vectors.

All matrices are parameterized by the scaled noise variance ``s = v / n``
(per-cell noise variance over sample size), so Gaussian and Laplace noise go
through the same formulas.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive, check_probability_vector


def _null(p0):
    return check_probability_vector(p0, "p0", strict=True)


def multinomial_covariance(p0):
    """Covariance ``Diag(p0) - p0 p0^T`` of one multinomial draw (rank d-1)."""
    p0 = _null(p0)
    return np.diag(p0) - np.outer(p0, p0)


def private_covariance(p0, s):
    """Multinomial covariance plus ``s`` on the diagonal: the centered noisy vector's covariance."""
    p0 = _null(p0)
    s = check_positive(s, "scaled variance")
    return multinomial_covariance(p0) + s * np.eye(p0.size)


def shrinkage_weights(p0, s):
    """Shrinkage weights ``p0_i / (p0_i + s)``."""
    return p0 / (p0 + s)


def woodbury_inverse(p, s):
    """Closed-form ``(Diag(p) - p p^T + s I)^-1`` for one or many rows of ``p``.

    Unvalidated batch kernel: ``p`` has shape ``(d,)`` or ``(B, d)`` with
    positive entries and ``s`` is a scalar or shape ``(B,)``. The rank-one
    denominator ``1 - p . w`` (with weights ``w = p / (p + s)``) is evaluated as
    ``s * sum(w)``, which is the same number without the cancellation.
    """
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)[..., None]
    denom = p + s
    w = p / denom
    coef = 1.0 / (s[..., 0] * w.sum(axis=-1))
    d = p.shape[-1]
    diag = np.zeros(p.shape + (d,))
    idx = np.arange(d)
    diag[..., idx, idx] = 1.0 / denom
    return diag + coef[..., None, None] * w[..., :, None] * w[..., None, :]


def private_covariance_inverse(p0, s):
    """Woodbury inverse ``Diag(p0 + s)^-1 + w w^T / (1 - p0 . w)`` with ``w = p0 / (p0 + s)``."""
    p0 = _null(p0)
    s = check_positive(s, "scaled variance")
    return woodbury_inverse(p0, s)


def projection(d):
    """``I - 11^T / d``, the orthogonal projection that removes the all-ones direction."""
    return np.eye(d) - np.full((d, d), 1.0 / d)


def projected_middle_matrix(p0, s):
    """Inverse private covariance with the all-ones direction projected out on both sides."""
    inv = private_covariance_inverse(p0, s)
    P = projection(inv.shape[0])
    return P @ inv @ P


@dataclass(frozen=True)
class GofMatrices:
    """All goodness-of-fit matrices for one null ``p0`` and scaled variance ``s``."""

    p0: np.ndarray
    scaled_variance: float
    sigma: np.ndarray
    sigma_priv: np.ndarray
    sigma_priv_inv: np.ndarray
    projection: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, p0, s):
        p0 = _null(p0)
        s = check_positive(s, "scaled variance")
        return cls(
            p0=p0,
            scaled_variance=s,
            sigma=multinomial_covariance(p0),
            sigma_priv=private_covariance(p0, s),
            sigma_priv_inv=private_covariance_inverse(p0, s),
            projection=projection(p0.size),
            weights=shrinkage_weights(p0, s),
        )

    @property
    def middle(self):
        return self.projection @ self.sigma_priv_inv @ self.projection
