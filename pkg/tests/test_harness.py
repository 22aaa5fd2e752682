import math

import numpy as np
import pytest

from dpchi2._validation import ConfigError, DomainError
from dpchi2.gof import dp_mc_gof_test, zcdp_gof_test
from dpchi2.gwas import output_perturbation_test
from dpchi2.harness import (
    GOF_NULL,
    GOF_OFFSET,
    GWAS_NULL,
    GWAS_OFFSET,
    INDEP_NULL,
    ExperimentConfig,
    ExperimentRow,
    analytic_power,
    emit_csv,
    format_csv,
    gwas_setup,
    preset,
    read_csv,
    run_experiment,
)
from dpchi2.minchi import independence_model, zcdp_min_chi2_test
from dpchi2.randnoise import RngStream, sample_multinomial
from dpchi2.report import Decision

P0 = np.array(GOF_NULL)


def test_row_statistics():
    row = ExperimentRow(1000, 200, 10, 5)
    assert row.rate == 0.05
    assert row.se == pytest.approx(math.sqrt(0.05 * 0.95 / 200))
    assert row.failures == 185
    with pytest.raises(ValueError):
        ExperimentRow(10, 5, 4, 2)


def test_csv_format(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    assert path.read_bytes() == b"n,trials,rejections,inconclusive,rate,se,analytic_power\n"
    row = ExperimentRow(500, 100, 5, 0, 0.0512345678)
    text = format_csv([row])
    assert text.splitlines()[1] == "500,100,5,0,0.050000,0.021794,0.051235"
    emit_csv([row], tmp_path / "one.csv")
    back = read_csv(tmp_path / "one.csv")
    assert back == [dict(n="500", trials="100", rejections="5", inconclusive="0", rate="0.050000",
                         se="0.021794", analytic_power="0.051235")]
    assert b"\r" not in (tmp_path / "one.csv").read_bytes()


def test_csv_error_names_path(tmp_path):
    with pytest.raises(OSError, match="nowhere"):
        emit_csv([], tmp_path / "nowhere" / "x.csv")


def test_analytic_power_null_case_is_alpha():
    for kind in ("projected", "unprojected", "classical"):
        assert analytic_power(P0, P0, 10**4, 0.001, kind) == pytest.approx(0.05, abs=1e-9)


def test_analytic_power_increases_with_n():
    p1 = P0 + np.array(GOF_OFFSET)
    powers = [analytic_power(P0, p1, n, 0.001) for n in (1000, 5000, 10**4, 5 * 10**4, 10**5)]
    assert all(a < b for a, b in zip(powers, powers[1:]))
    assert 0 < powers[0] < 1


def test_analytic_power_requires_zero_sum_shift():
    with pytest.raises(DomainError):
        analytic_power([0.5, 0.5], [0.6, 0.5], 100, 0.1)


def test_analytic_power_ordering():
    p1 = P0 + np.array(GOF_OFFSET)
    n = 20000
    nonpriv = analytic_power(P0, p1, n, 0.001, "classical")
    proj = analytic_power(P0, p1, n, 0.001, "projected")
    unproj = analytic_power(P0, p1, n, 0.001, "unprojected")
    assert nonpriv > proj > unproj


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig("bogus", GOF_NULL, (100,))
    with pytest.raises(ConfigError):
        ExperimentConfig("zcdp-gof", GOF_NULL, (100,), offset=(0.6, 0, 0, 0))
    with pytest.raises(ConfigError):
        ExperimentConfig("zcdp-gof", GOF_NULL, (100,), offset=(0.6, -0.2, -0.2, -0.2))
    with pytest.raises(ConfigError):
        ExperimentConfig("zcdp-gof", GOF_NULL, ())
    with pytest.raises(ConfigError):
        ExperimentConfig("mc-gof", GOF_NULL, (100,), m=10)
    with pytest.raises(ConfigError):
        ExperimentConfig("zcdp-indep", GOF_NULL, (100,))
    with pytest.raises(ConfigError):
        ExperimentConfig("gwas-proj", GWAS_NULL, (101,))
    with pytest.raises(ConfigError):
        ExperimentConfig("zcdp-gof", GOF_NULL, (100,), alpha=1.5)
    with pytest.raises(ConfigError):
        preset("nope")


def test_gwas_setup():
    null, offset = gwas_setup((1 / 3, 1 / 3, 1 / 3), (1 / 2, 1 / 4, 1 / 4))
    joint = np.outer(null[0], null[1]).ravel() + np.array(offset)
    assert np.allclose(joint.reshape(3, 2)[:, 0] * 2, 1 / 3)
    assert np.allclose(joint.reshape(3, 2)[:, 1] * 2, [1 / 2, 1 / 4, 1 / 4])
    assert (null, offset) == (GWAS_NULL, GWAS_OFFSET)


def test_smoke_single_trial():
    rows = run_experiment(ExperimentConfig("zcdp-gof", GOF_NULL, (1000,), trials=1))
    assert len(rows) == 1 and rows[0].rate in (0.0, 1.0)


def _replay(cfg, n, t, single):
    """Run trial ``t`` at grid index 0 through the single-test API."""
    rng = RngStream(cfg.master_seed, 0, t)
    counts = sample_multinomial(n, cfg.true_probabilities, rng)
    return single(counts, rng)


def test_harness_replays_single_test_api():
    cfg = ExperimentConfig("zcdp-gof", GOF_NULL, (2000,), offset=GOF_OFFSET, trials=60, master_seed=3)
    expected = sum(_replay(cfg, 2000, t, lambda c, r: zcdp_gof_test(c, 0.001, 0.05, P0, rng=r)).reject
                   for t in range(60))
    assert run_experiment(cfg)[0].rejections == expected


def test_harness_replays_mc_gof():
    eps = math.sqrt(0.002)
    cfg = ExperimentConfig("mc-gof", GOF_NULL, (20000,), offset=GOF_OFFSET, trials=40,
                           budget=eps, master_seed=4)
    expected = sum(_replay(cfg, 20000, t,
                           lambda c, r: dp_mc_gof_test(c, eps, 0.05, P0, rng=r)).reject
                   for t in range(40))
    assert run_experiment(cfg)[0].rejections == expected


def test_harness_replays_independence():
    cfg = ExperimentConfig("zcdp-indep", INDEP_NULL, (3000,), offset=(0.01, 0, -0.01, 0),
                           trials=40, master_seed=5)
    model = independence_model(2, 2)
    decisions = [_replay(cfg, 3000, t,
                         lambda c, r: zcdp_min_chi2_test(c, 0.001, 0.05, model, rng=r)).decision
                 for t in range(40)]
    row = run_experiment(cfg)[0]
    assert row.rejections == decisions.count(Decision.REJECT)
    assert row.inconclusive == decisions.count(Decision.INCONCLUSIVE)


def test_harness_replays_output_perturbation():
    cfg = ExperimentConfig("gwas-output-pert", GWAS_NULL, (2000,), offset=GWAS_OFFSET, trials=40,
                           master_seed=6)
    expected = 0
    for t in range(40):
        rng = RngStream(6, 0, t)
        cols = cfg.true_probabilities.reshape(3, 2) * 2
        a = sample_multinomial(1000, cols[:, 0], rng)
        b = sample_multinomial(1000, cols[:, 1], rng)
        expected += output_perturbation_test(np.stack([a, b], axis=1), 0.001, 0.05, rng=rng).reject
    assert run_experiment(cfg)[0].rejections == expected


def test_gwas_tables_are_evenly_split():
    from dpchi2.harness import _draw_data
    cfg = ExperimentConfig("gwas-proj", GWAS_NULL, (600,), offset=GWAS_OFFSET)
    tables = _draw_data(cfg, 600, [RngStream(0, 0, t) for t in range(20)]).reshape(-1, 3, 2)
    assert np.all(tables.sum(axis=1) == 300)


def test_deterministic_and_chunk_invariant(monkeypatch):
    cfg = ExperimentConfig("zcdp-indep", INDEP_NULL, (1000, 4000), offset=(0.01, 0, -0.01, 0),
                           trials=300, master_seed=1)
    a = format_csv(run_experiment(cfg))
    import dpchi2.harness as h
    monkeypatch.setattr(h, "CHUNK", 7)
    b = format_csv(run_experiment(cfg))
    assert a == b


def test_worker_invariance():
    cfg = ExperimentConfig("mc-gof", GOF_NULL, (1000, 5000), trials=150, budget=0.0447, master_seed=2)
    import dpchi2.harness as h
    old = h.CHUNK
    h.CHUNK = 40
    try:
        a = format_csv(run_experiment(cfg, workers=1))
        b = format_csv(run_experiment(cfg, workers=3))
    finally:
        h.CHUNK = old
    assert a == b


def test_progress_callback_and_order():
    seen = []
    cfg = ExperimentConfig("zcdp-gof", GOF_NULL, (3000, 1000, 2000), trials=20)
    rows = run_experiment(cfg, progress=seen.append)
    assert [r.n for r in rows] == [3000, 1000, 2000]
    assert seen == rows


def test_classical_arm_and_conservation():
    cfg = ExperimentConfig("zcdp-indep", INDEP_NULL, (20, 5000), kind="classical", trials=200)
    for row in run_experiment(cfg):
        assert row.rejections + row.failures + row.inconclusive == row.trials


def test_presets_build():
    cfg = preset("gof-power-paper", trials=10)
    assert cfg.test_id == "zcdp-gof"
    assert np.allclose(cfg.true_probabilities, P0 + 0.01 * np.array([1, -1 / 3, -1 / 3, -1 / 3]))
    assert cfg.budget == 0.001 and cfg.alpha == 0.05 and cfg.trials == 10
    assert preset("mc-gof-power-paper").budget == pytest.approx(math.sqrt(0.002))


@pytest.mark.slow
def test_type_one_error_null_rows():
    cfg = ExperimentConfig("zcdp-gof", GOF_NULL, (10**4,), trials=4000, kind="unprojected")
    row = run_experiment(cfg)[0]
    assert row.rate <= 0.05 + 3 * row.se
