"""Reproducible random streams, samplers and the privacy mechanisms.

Streams are counter based: every stream is a Philox generator whose 128-bit
key is derived from ``(master_seed, *path)``. A simulation gives trial ``t``
the stream ``RngStream(seed, n_index, t)``, so its draws do not depend on
which worker runs it or in what order.
"""

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np

from ._validation import (
    DomainError,
    check_histogram,
    check_positive,
    check_probability_vector,
)

GAUSSIAN = "gaussian"
LAPLACE = "laplace"

# histogram sensitivities under add/remove of one record's category
L1_SENSITIVITY = 2.0
L2_SENSITIVITY = math.sqrt(2.0)

_U53 = 2.0 ** -53


class RngStream:
    """A single-owner random stream addressed by ``(master_seed, *path)``.

    Identical addresses replay identical sequences. ``spawn(i)`` returns an
    independent child stream whose address extends the parent's path, which is
    how Monte Carlo replicates get their own randomness.
    """

    def __init__(self, master_seed=0, *path):
        if master_seed < 0 or any(int(p) < 0 for p in path):
            raise DomainError("seed and stream ids must be nonnegative integers")
        self.master_seed = int(master_seed)
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        key = seq.generate_state(2, np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    @property
    def stream_id(self):
        return self.path

    def spawn(self, index):
        return RngStream(self.master_seed, *self.path, index)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, path={self.path})"

    # thin wrappers so call sites never touch numpy's global state
    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def binomial(self, n, p, size=None):
        return self.generator.binomial(n, p, size)

    def uniform_open(self, size=None):
        """Uniforms on the open interval (0, 1) with 53-bit resolution."""
        k = self.generator.integers(0, 2**53, size=size, dtype=np.int64)
        return (k + 0.5) * _U53


def as_stream(rng):
    """Accept an :class:`RngStream`, an int seed, or None (seed 0)."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))


@dataclass(frozen=True)
class PrivacyBudget:
    """Either a zCDP budget ``rho`` or a pure-DP budget ``epsilon``."""

    kind: str
    value: float
    delta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("zcdp", "pure"):
            raise DomainError(f"budget kind must be 'zcdp' or 'pure', got {self.kind!r}")
        object.__setattr__(self, "value", check_positive(self.value, "privacy parameter"))
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise DomainError("delta must lie in (0, 1)")

    @classmethod
    def zcdp(cls, rho):
        return cls("zcdp", rho)

    @classmethod
    def pure(cls, epsilon):
        return cls("pure", epsilon)

    @property
    def rho(self):
        """zCDP parameter implied by this budget."""
        return self.value if self.kind == "zcdp" else zcdp_of_pure(self.value)

    @property
    def epsilon(self):
        if self.kind != "pure":
            raise AttributeError("a zCDP budget has no pure-DP epsilon")
        return self.value


def zcdp_of_pure(epsilon):
    """An epsilon-DP mechanism is (epsilon^2 / 2)-zCDP."""
    epsilon = check_positive(epsilon, "epsilon")
    return 0.5 * epsilon * epsilon


def approx_dp_of_zcdp(rho, delta):
    """Epsilon of the (epsilon, delta)-DP guarantee implied by rho-zCDP."""
    rho = check_positive(rho, "rho")
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta!r}")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


@dataclass(frozen=True)
class NoisyHistogram:
    """Privatized cell counts ``values = counts + noise``.

    ``noise_variance`` is the per-cell variance the test statistics plug in.
    ``realized_noise`` is only kept when a mechanism is asked to keep it.
    """

    values: np.ndarray
    n: int
    noise_variance: float
    mechanism: str
    realized_noise: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise DomainError("noisy histogram needs at least 2 cells")
        object.__setattr__(self, "values", values)
        if int(self.n) != self.n or self.n < 0:
            raise DomainError("n must be a nonnegative integer")
        object.__setattr__(self, "n", int(self.n))
        check_positive(self.noise_variance, "noise_variance")

    @property
    def d(self):
        return self.values.size

    @property
    def noisy_total(self):
        return float(self.values.sum())


def _sequential_binomials(n, p, rng, size):
    # Cell i is Binomial(remaining, p_i / remaining mass); exact and O(d).
    d = p.size
    shape = (d,) if size is None else (size, d)
    counts = np.zeros(shape, dtype=np.int64)
    remaining = np.full(() if size is None else (size,), n, dtype=np.int64)
    mass = 1.0
    for i in range(d - 1):
        if mass <= 0.0:
            break
        q = min(1.0, max(0.0, p[i] / mass))
        draw = rng.binomial(remaining, q)
        counts[..., i] = draw
        remaining = remaining - draw
        mass -= p[i]
    counts[..., d - 1] += remaining
    return counts


def sample_multinomial(n, p, rng, size=None):
    """Draw Multinomial(n, p) counts, or ``size`` independent draws stacked by row."""
    if int(n) != n or n < 0:
        raise DomainError(f"n must be a nonnegative integer, got {n!r}")
    p = check_probability_vector(p)
    return _sequential_binomials(int(n), p, as_stream(rng), size)


def gaussian_noise(rho, rng, size):
    """iid N(0, 1/rho) noise: the Gaussian mechanism for a histogram (l2 sensitivity sqrt 2)."""
    sigma = L2_SENSITIVITY / math.sqrt(2.0 * check_positive(rho, "rho"))
    return sigma * rng.standard_normal(size)


def laplace_noise(epsilon, rng, size):
    """iid Laplace(2/epsilon) noise drawn by inverting the Laplace CDF."""
    scale = L1_SENSITIVITY / check_positive(epsilon, "epsilon")
    u = rng.uniform_open(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_variance(epsilon):
    """Variance 2 b^2 = 8 / epsilon^2 of Laplace noise with scale b = 2/epsilon."""
    b = L1_SENSITIVITY / check_positive(epsilon, "epsilon")
    return 2.0 * b * b


def gaussian_mechanism(counts, rho, rng, keep_noise=False):
    """Release ``counts + N(0, 1/rho I)`` as a :class:`NoisyHistogram`."""
    counts = check_histogram(counts)
    rho = check_positive(rho, "rho")
    z = gaussian_noise(rho, as_stream(rng), counts.size)
    return NoisyHistogram(
        values=counts + z,
        n=int(counts.sum()),
        noise_variance=1.0 / rho,
        mechanism=GAUSSIAN,
        realized_noise=z if keep_noise else None,
    )


def laplace_mechanism(counts, epsilon, rng, keep_noise=False, noise_variance=None):
    """Release ``counts + Lap(2/epsilon)`` noise per cell.

    ``noise_variance`` overrides the variance recorded for the statistics
    (default ``8/epsilon^2``, the true variance); the noise itself is unchanged.
    """
    counts = check_histogram(counts)
    z = laplace_noise(epsilon, as_stream(rng), counts.size)
    v = laplace_variance(epsilon) if noise_variance is None else check_positive(
        noise_variance, "noise_variance")
    return NoisyHistogram(
        values=counts + z,
        n=int(counts.sum()),
        noise_variance=v,
        mechanism=LAPLACE,
        realized_noise=z if keep_noise else None,
    )
