import numpy as np
import pytest

from bygars import verify
from bygars.aggregate import reputation_update
from bygars.core import ConfigError, ScheduleSpec
from bygars.simulation import build_problem, run

from conftest import SMALL_REG, small_config, theorem_config


def test_q_recursion_deterministic_limit():
    cfg = theorem_config([1, 1, 1], batch_size="full", aux_batch_size="full")
    problem = build_problem(cfg)
    rep = verify.q_recursion_check(cfg, n_trials=100, alpha=0.3, problem=problem)
    assert rep.passed
    np.testing.assert_allclose(rep.values, rep.details["expected"], rtol=1e-10, atol=1e-10)
    # with full batches every shard and the aux set give conditional means; expected = alpha <G_i, g_aux>
    G, g_aux = verify.conditional_means(problem, problem.obj.zeros())
    np.testing.assert_allclose(rep.details["expected"], 0.3 * G @ g_aux, rtol=1e-12)


def test_q_recursion_alpha_zero_keeps_q():
    q = np.array([0.3, -0.2, 0.1])
    rep = verify.q_recursion_check(theorem_config([1, -1, 0]), n_trials=100, alpha=0.0, q=q)
    np.testing.assert_allclose(rep.values, q, rtol=1e-12)
    assert rep.passed
    np.testing.assert_array_equal(reputation_update(q, np.ones((3, 2)), np.array([5.0, -7.0]), 0.0), q)


def test_q_recursion_signs():
    rep = verify.q_recursion_check(theorem_config([1, -1, 0]), n_trials=2000, alpha=0.5)
    assert rep.passed and len(rep.details["coordinate_pass"]) == 3
    v = rep.values
    assert v[0] > 0 and v[1] < 0 and abs(v[2]) < 0.1 * abs(v[0])


def test_q_recursion_guards():
    with pytest.raises(ConfigError):
        verify.q_recursion_check(theorem_config([1]), n_trials=10)
    with pytest.raises(ConfigError):
        verify.q_recursion_check(small_config(), n_trials=100)


def test_equilibrium_single_benign_noiseless():
    cfg = theorem_config([1], m=1, batch_size="full", aux_batch_size="full",
                         schedules=ScheduleSpec(alpha0=0.05, beta_m=0.0))
    problem = build_problem(cfg)
    w = np.full(SMALL_REG.d, 0.5)
    rep = verify.equilibrium_check(cfg, w=w, n_iterations=600, n_trials=1, problem=problem)
    G, g_aux = verify.conditional_means(problem, w)
    assert rep.values[0] == pytest.approx(float(G[0] @ g_aux), rel=1e-10)


def test_equilibrium_rejects_zero_kappa():
    cfg = theorem_config([1, 0])
    with pytest.raises(ConfigError):
        verify.equilibrium_check(cfg.replace(attacks=(cfg.attacks[1],) * 2))


def test_martingale_noise_vanishes_with_full_batches():
    cfg = theorem_config([1, -1], iterations=30, batch_size="full", aux_batch_size="full")
    res = run(cfg)
    rep = verify.martingale_noise_check(res, n_checkpoints=3, n_trials=100)
    assert rep.passed and rep.details["max_abs_z"] == 0.0


@pytest.mark.parametrize("kappas", [[1, 1, 1, 1], [-1, -1, -1, -1]])
def test_martingale_noise_zero_mean(kappas):
    res = run(theorem_config(kappas, iterations=50))
    assert verify.martingale_noise_check(res, n_checkpoints=3, n_trials=2000).passed


def test_byz_tolerance_and_convergence_reports(tmp_path):
    res = run(theorem_config([1, 1, -1, -1], iterations=400, init_std=1.0))
    rep = verify.byz_tolerance_statistic(res, burn_in=50, window=100)
    assert rep.passed and rep.values[0] == 0.0
    conv = verify.convergence_check(res, ratio_tol=1.0)
    assert conv.passed and conv.details["ratio"] < 1.0
    path = tmp_path / "r.jsonl"
    verify.write_reports([rep, conv], path)
    assert len(path.read_text().splitlines()) == 2


def test_schedule_warnings():
    assert verify.schedule_warnings(ScheduleSpec(gamma_exponent=1.0, alpha_exponent=0.6, beta=1, beta_m=1)) == []
    assert verify.schedule_warnings(ScheduleSpec(gamma_exponent=0.6, alpha_exponent=0.9))
