import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpchi2._validation import InsufficientSamplesError, InvalidNullError, ShapeError
from dpchi2.gof import (
    centered_vector,
    check_mc_samples,
    classical_gof_test,
    classical_statistic,
    dp_mc_gof_test,
    gof_statistic_batch,
    mc_critical_value,
    noisy_statistic,
    projected_statistic,
    statistic_df,
    unprojected_statistic,
    zcdp_gof_test,
)
from dpchi2.randnoise import (
    GAUSSIAN,
    NoisyHistogram,
    RngStream,
    gaussian_mechanism,
    sample_multinomial,
)
from dpchi2.report import Decision, StatKind

from oracles import dense_statistic

P0 = np.array([1 / 2, 1 / 6, 1 / 6, 1 / 6])


def random_instance(rng):
    d = int(rng.integers(2, 11))
    p0 = rng.dirichlet(np.ones(d)) * 0.95 + 0.05 / d
    n = int(10 ** rng.uniform(1, 6))
    s = 10 ** rng.uniform(-5, 1)
    v = s * n
    counts = sample_multinomial(n, rng.dirichlet(np.ones(d) * 5), RngStream(int(rng.integers(2**31))))
    z = rng.standard_normal(d) * math.sqrt(v)
    return p0, n, v, counts, z


def test_centered_vector_examples():
    nh = NoisyHistogram([60.0, 40.0], 100, 1.0, GAUSSIAN)
    assert np.allclose(centered_vector(nh, [0.5, 0.5]), [1.0, -1.0])
    exact = NoisyHistogram(1000 * P0, 1000, 5.0, GAUSSIAN)
    assert np.allclose(centered_vector(exact, P0), 0)


def test_centered_vector_sum():
    nh = NoisyHistogram([52.5, 17.0, 18.25, 13.0], 100, 5.0, GAUSSIAN)
    assert centered_vector(nh, P0).sum() == pytest.approx((nh.noisy_total - 100) / 10, abs=1e-9)


def test_zero_vector_gives_zero():
    exact = NoisyHistogram(1200 * P0, 1200, 50.0, GAUSSIAN)
    assert unprojected_statistic(exact, P0).value == pytest.approx(0, abs=1e-12)
    assert projected_statistic(exact, P0).value == pytest.approx(0, abs=1e-12)


def test_closed_forms_match_dense_quadratic_forms():
    rng = np.random.default_rng(11)
    for _ in range(300):
        p0, n, v, counts, z = random_instance(rng)
        nh = NoisyHistogram(counts + z, n, v, GAUSSIAN)
        for projected, fn in ((False, unprojected_statistic), (True, projected_statistic)):
            ref = dense_statistic(nh.values, n, v, p0, projected)
            assert fn(nh, p0).value == pytest.approx(ref, rel=1e-8, abs=1e-10)


def test_projection_removes_noise_total():
    rng = np.random.default_rng(12)
    for _ in range(300):
        p0, n, v, counts, z = random_instance(rng)
        nh = NoisyHistogram(counts + z, n, v, GAUSSIAN)
        diff = unprojected_statistic(nh, p0).value - projected_statistic(nh, p0).value
        expected = z.sum() ** 2 / (v * p0.size)
        assert diff == pytest.approx(expected, rel=1e-8, abs=1e-12 * unprojected_statistic(nh, p0).value)


@settings(max_examples=100)
@given(seed=st.integers(0, 2**31))
def test_statistics_nonnegative(seed):
    p0, n, v, counts, z = random_instance(np.random.default_rng(seed))
    nh = NoisyHistogram(counts + z, n, v, GAUSSIAN)
    assert unprojected_statistic(nh, p0).value >= -1e-9
    assert projected_statistic(nh, p0).value >= -1e-9


def test_statistic_metadata():
    nh = gaussian_mechanism([500, 170, 160, 170], 0.01, RngStream(0))
    assert unprojected_statistic(nh, P0).df == 4
    assert projected_statistic(nh, P0).df == 3
    assert noisy_statistic(nh, P0, "proj").kind is StatKind.PROJECTED
    assert statistic_df(4, "unprojected", k=1) == 3
    with pytest.raises(ShapeError):
        unprojected_statistic(nh, [0.5, 0.5])
    with pytest.raises(ValueError):
        noisy_statistic(nh, P0, "classical")


def test_batch_matches_single():
    nhs = [gaussian_mechanism([500, 170, 160, 170], 0.01, RngStream(i)) for i in range(5)]
    values = np.stack([nh.values for nh in nhs])
    batch = gof_statistic_batch(values, 1000, 100.0, P0, "projected")
    single = [projected_statistic(nh, P0).value for nh in nhs]
    assert np.array_equal(batch, single)


def test_classical_statistic_matches_loop():
    counts = np.array([480, 190, 150, 180])
    expected = 1000 * P0
    ref = sum((c - e) ** 2 / e for c, e in zip(counts, expected))
    assert classical_statistic(counts, P0) == pytest.approx(ref)
    assert classical_gof_test([500, 500], 0.05, [0.5, 0.5]).decision is Decision.FAIL_TO_REJECT


def test_zcdp_threshold_and_determinism():
    counts = [5000, 1650, 1700, 1650]
    a = zcdp_gof_test(counts, 0.001, 0.05, P0, "projected", rng=RngStream(7))
    b = zcdp_gof_test(counts, 0.001, 0.05, P0, "projected", rng=RngStream(7))
    assert a.threshold == pytest.approx(7.8147, abs=1e-3)
    assert a == b
    assert a.reject == (a.statistic.value > a.threshold)
    assert zcdp_gof_test(counts, 0.001, 0.05, P0, "unprojected", rng=7).statistic.df == 4


def test_zcdp_rejects_bad_null():
    with pytest.raises(InvalidNullError):
        zcdp_gof_test([10, 10], 0.1, 0.05, [1.0, 0.0])


def test_mc_critical_value_order_statistic():
    assert mc_critical_value(np.arange(1, 60), 0.05) == 57
    rng = np.random.default_rng(0)
    assert mc_critical_value(rng.permutation(np.arange(1, 60)), 0.05) == 57
    assert mc_critical_value(np.full(59, 3.5), 0.05) == 3.5
    assert mc_critical_value(np.arange(19), 0.05) == 18


def test_mc_sample_precondition():
    with pytest.raises(InsufficientSamplesError):
        mc_critical_value(np.arange(10), 0.05)
    with pytest.raises(InsufficientSamplesError):
        check_mc_samples(18, 0.05)
    assert check_mc_samples(19, 0.05) == 19
    with pytest.raises(InsufficientSamplesError):
        dp_mc_gof_test([500, 170, 160, 170], 0.0447, 0.05, P0, m=10)


@pytest.mark.parametrize("m,alpha", [(19, 0.05), (59, 0.05), (25, 0.05), (99, 0.1)])
def test_rank_rule_is_exact_for_exchangeable_draws(m, alpha):
    rng = np.random.default_rng(m)
    trials = 40000
    draws = rng.standard_normal((trials, m + 1))
    thresholds = np.array([mc_critical_value(row[1:], alpha) for row in draws])
    rate = np.mean(draws[:, 0] > thresholds)
    target = math.floor((m + 1) * alpha) / (m + 1)
    se = math.sqrt(target * (1 - target) / trials)
    assert abs(rate - target) <= 4 * se


def test_dp_mc_gof_deterministic():
    counts = [500, 170, 160, 170]
    a = dp_mc_gof_test(counts, 0.0447, 0.05, P0, rng=RngStream(3))
    b = dp_mc_gof_test(counts, 0.0447, 0.05, P0, rng=RngStream(3))
    assert a.statistic.value == b.statistic.value and a.threshold == b.threshold
    assert a.mc_samples_used == 59 and a.df_or_m == 59


def test_dp_mc_gof_noise_variance_override_changes_statistic():
    counts = [500, 170, 160, 170]
    a = dp_mc_gof_test(counts, 0.0447, 0.05, P0, rng=RngStream(3))
    b = dp_mc_gof_test(counts, 0.0447, 0.05, P0, rng=RngStream(3), noise_variance=2 / 0.0447**2)
    assert a.statistic.value != b.statistic.value


@pytest.mark.slow
def test_zcdp_type_one_error_small_run():
    rejections = 0
    trials = 3000
    for t in range(trials):
        rng = RngStream(99, 0, t)
        counts = sample_multinomial(10**5, P0, rng)
        rejections += zcdp_gof_test(counts, 0.001, 0.05, P0, rng=rng).reject
    rate = rejections / trials
    assert rate <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / trials)
