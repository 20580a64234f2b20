"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected and printed in the pytest terminal summary. Runs
shared between criteria (no-attack baselines) are cached per session.
"""
import functools
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from bygars import harness, verify
from bygars.adversary import AttackSpec
from bygars.config import AggregatorConfig, default_config
from bygars.simulation import build_problem, run

from conftest import ACCEPTANCE_LINES

SEEDS5 = range(5)
SEEDS3 = range(3)


def report(n, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


@functools.lru_cache(maxsize=None)
def final(task, agg, attacks, seed, iterations=None):
    """(final test loss, final test accuracy, wall seconds) of one cached run."""
    cfg = default_config(task, aggregator=AggregatorConfig(kind=agg), attacks=attacks, seed=seed)
    if iterations is not None:
        cfg = cfg.replace(iterations=iterations)
    t0 = time.perf_counter()
    res = run(cfg, record_trace=False)
    return res.final.test_loss, res.final.test_accuracy, time.perf_counter() - t0


def mean_loss(task, agg, attacks, seeds, iterations=None):
    return float(np.mean([final(task, agg, attacks, s, iterations)[0] for s in seeds]))


def test_criterion_01_no_attack_equivalence():
    avg = mean_loss("regression", "average", "none", SEEDS5)
    rel = {a: mean_loss("regression", a, "none", SEEDS5) / avg - 1 for a in ("bygars", "bygars_pp")}
    slowest = max(final("regression", a, "none", s)[2] for a in ("bygars", "bygars_pp", "average") for s in SEEDS5)
    ok = all(abs(r) <= 0.10 for r in rel.values()) and slowest < 30
    report(1, ok, f"relative MSE gap vs average {({k: round(v, 4) for k, v in rel.items()})} "
                  f"(tol 0.10), average MSE {avg:.5f}, slowest run {slowest:.1f}s (< 30s)")


def test_criterion_02_all_sign_flip():
    parts, ok = [], True
    for agg in ("bygars", "bygars_pp"):
        r = mean_loss("regression", agg, "sign_flip:8", SEEDS5) / mean_loss("regression", agg, "none", SEEDS5)
        ok &= r <= 1.15
        parts.append(f"{agg} {r:.3f}x (<= 1.15)")
    for agg in ("average", "median"):
        r = mean_loss("regression", agg, "sign_flip:8", SEEDS5) / mean_loss("regression", agg, "none", SEEDS5)
        ok &= r >= 10
        parts.append(f"{agg} {r:.3g}x (>= 10)")
    report(2, ok, "8/8 sign flip loss ratios: " + ", ".join(parts))


MAJORITY = [("constant", "regression"), ("gaussian", "regression"), ("random_sign_flip", "regression"),
            ("inner_product", "regression"), ("ofom", "regression"), ("paf", "regression"),
            ("label_flip", "classification")]
MEDIAN_MUST_FAIL = ("constant", "random_sign_flip", "inner_product")


def test_criterion_03_majority_adversaries():
    parts, ok = [], True
    for kind, task in MAJORITY:
        preset = f"{kind}:6"
        r = mean_loss(task, "bygars_pp", preset, SEEDS3) / mean_loss(task, "bygars_pp", "none", SEEDS3)
        ok &= r <= 1.5
        msg = f"{kind} bygars_pp {r:.3f}x"
        if kind in MEDIAN_MUST_FAIL:
            rm = mean_loss(task, "median", preset, SEEDS3) / mean_loss(task, "median", "none", SEEDS3)
            ok &= rm >= 5
            msg += f" median {rm:.3g}x"
        parts.append(msg)
    report(3, ok, "6/8 adversaries (bygars_pp <= 1.5x, median >= 5x): " + "; ".join(parts))


# Shards hold ~969 rows and batches 32 rows, so 3000 iterations is about 100 passes over each shard.
LIE_ITERATIONS = 3000


def test_criterion_04_lie():
    parts, ok = [], True
    for agg in ("bygars", "bygars_pp"):
        base = mean_loss("regression", agg, "none", SEEDS3, LIE_ITERATIONS)
        for count in (3, 4):
            r = mean_loss("regression", agg, f"lie:{count}:z=1.5", SEEDS3, LIE_ITERATIONS) / base
            ok &= r <= 1.5
            parts.append(f"{agg} f={count} {r:.3f}x")
    report(4, ok, f"LIE z=1.5, T={LIE_ITERATIONS}, loss vs no attack (<= 1.5x): " + ", ".join(parts))


def test_criterion_05_mixed_attack():
    base = [final("classification", "bygars", "none", s)[1] for s in SEEDS5]
    parts, ok = [f"benign bygars acc {np.mean(base):.4f}"], True
    for agg in ("bygars", "bygars_pp"):
        acc = [final("classification", agg, "mixed", s)[1] for s in SEEDS5]
        worst_gap = max(b - a for a, b in zip(acc, base))
        gap = float(np.mean(base) - np.mean(acc))
        ok &= gap <= 0.05 and worst_gap <= 0.05
        parts.append(f"{agg} mixed acc {np.mean(acc):.4f} (mean gap {100 * gap:.2f} pts, worst seed {100 * worst_gap:.2f} pts)")
    report(5, ok, "; ".join(parts) + " (tol 5 pts)")


def _theorem_cfg(kappas, seed, iterations, zero_std=1.0):
    attacks = tuple(AttackSpec() if k == 1 else
                    AttackSpec("scaled_multiplicative", {"kappa_mean": k, "kappa_std": 0.0 if k else zero_std})
                    for k in kappas)
    return default_config("regression", mode="theorem_check", m=len(kappas), attacks=attacks, iterations=iterations,
                          seed=seed, eval_every=100)


THEOREM_SETS = {"8 benign": [1] * 8, "8 sign flip": [-1] * 8, "kappa (2,2,-1,-1,0,0,1,1)": [2, 2, -1, -1, 0, 0, 1, 1]}


def test_criterion_06_byzantine_tolerance_statistic():
    parts, ok = [], True
    for name, kappas in THEOREM_SETS.items():
        passed = [verify.byz_tolerance_statistic(run(_theorem_cfg(kappas, s, 1000))).passed for s in range(10)]
        ok &= all(passed)
        parts.append(f"{name} {sum(passed)}/10")
    report(6, ok, "windowed mean of <grad F, H^T q> >= -3 SE: " + ", ".join(parts))


def test_criterion_07_q_recursion():
    cfg = _theorem_cfg([1, -1, 0], 0, 1)
    rep = verify.q_recursion_check(cfg, n_trials=10_000, alpha=0.5)
    # no gradient noise: full batches and a constant multiplier on the kappa=0 worker
    det_cfg = _theorem_cfg([1, -1, 0], 0, 1, zero_std=0.0).replace(batch_size="full", aux_batch_size="full")
    det = verify.q_recursion_check(det_cfg, n_trials=100, alpha=0.5)
    det_err = float(np.max(np.abs(np.array(det.values) - det.details["expected"])))
    ok = rep.passed and det_err <= 1e-10
    z = ", ".join(f"{v:.2f}" for v in rep.details["z_scores"])
    report(7, ok, f"kappa (1,-1,0), n_trials 1e4: z-scores [{z}] (|z| <= 4); full-batch max error {det_err:.1e} (<= 1e-10)")


def test_criterion_08_equilibrium():
    cfg = _theorem_cfg([2, -1], 0, 1)
    problem = build_problem(cfg)
    ws = [problem.obj.zeros(), 0.5 * problem.theta_star]
    reps = [verify.equilibrium_check(cfg, w=w, n_iterations=5000, n_trials=10, problem=problem) for w in ws]
    norms = [r.details["q_norm"] for r in reps]
    grads = [r.details["grad_norm_sq"] for r in reps]
    ratio_q, ratio_g = norms[0] / norms[1], grads[0] / grads[1]
    ratio_err = abs(ratio_q / ratio_g - 1)
    errs = [r.details["relative_error"] for r in reps]
    ok = all(r.passed for r in reps) and ratio_err <= 0.10
    report(8, ok, f"kappa (2,-1), T=5000: relative errors {[round(e, 4) for e in errs]} (<= 0.05); "
                  f"||q(w1)||/||q(w2)|| = {ratio_q:.4f} vs ||grad F||^2 ratio {ratio_g:.4f} (within 10%)")


def test_criterion_09_convergence():
    parts, ok = [], True
    for name in ("8 benign", "8 sign flip"):
        t0 = time.perf_counter()
        res = run(_theorem_cfg(THEOREM_SETS[name], 0, 20_000))
        dt = time.perf_counter() - t0
        rep = verify.convergence_check(res)
        ok &= rep.passed and dt < 60
        parts.append(f"{name} ratio {rep.details['ratio']:.4f} in {dt:.1f}s")
    report(9, ok, "||w_T - w*|| / ||w_0 - w*|| <= 0.05, T=20000, < 60s: " + ", ".join(parts))


PROPERTY_TESTS = [
    "tests/test_core.py::test_normalize_examples",
    "tests/test_core.py::test_normalize_hits_target_norm",
    "tests/test_core.py::test_schedules_are_positive_and_nonincreasing",
    "tests/test_data.py::test_partition_sizes_example",
    "tests/test_objective.py::test_gradient_matches_finite_differences",
    "tests/test_objective.py::test_softmax_gradient_property",
    "tests/test_aggregate.py::test_aggregators_are_permutation_equivariant",
    "tests/test_simulation.py::test_reruns_are_bit_identical",
    "tests/test_harness.py::test_cli_run_is_reproducible",
]


def test_criterion_10_property_suites():
    root = Path(__file__).resolve().parent.parent
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
                          cwd=root, capture_output=True, text=True)
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    report(10, proc.returncode == 0, f"normalization, schedules, partition, finite differences, "
                                     f"permutation equivariance, reruns: {last}")


def test_criterion_11_ablation_trends():
    base = default_config("classification", aggregator=AggregatorConfig(kind="bygars"), attacks="label_flip:3")
    aux = harness.sweep_means(harness.sweep(base, "n_aux", [25, 250], SEEDS5))
    meta = harness.sweep_means(harness.sweep(base, "k_meta", [1, 3], SEEDS5))
    ok = aux["250"] <= aux["25"] and meta["3"] <= meta["1"]
    report(11, ok, f"3 label-flip, 5 seeds: loss n_aux 25 -> {aux['25']:.5f}, 250 -> {aux['250']:.5f}; "
                   f"k_meta 1 -> {meta['1']:.5f}, 3 -> {meta['3']:.5f}")
