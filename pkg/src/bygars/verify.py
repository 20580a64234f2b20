"""Empirical checks of the convergence theory for the simultaneous-update rule.

Every check returns a :class:`TheoremCheckReport`. Monte Carlo checks draw
trial ``i`` from streams derived from ``(seed, check name, i)``, so reports do
not depend on execution order.

Expected values use the exact conditional means of the simulator: a worker
with shard ``D_i`` has ``E[h_i | w] = kappa_i * grad F_{D_i}(w)`` and the
auxiliary gradient has mean ``grad F_aux(w)``. Under the population model
all of these equal ``grad F(w)``; the full-training-set form is reported
alongside as ``population_*`` fields.
"""
from __future__ import annotations

import json
import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .adversary import attack_round, make_workers
from .aggregate import AggregatorState, AuxOracle, bygars_pp_step, reputation_update
from .config import RunConfig
from .core import ConfigError, RngStream, ScheduleSpec, alpha_at
from .objective import gradient, population_gradient
from .simulation import Problem, RunResult, build_problem

log = logging.getLogger(__name__)

CHECK_NAMES = ("byz_tolerance", "q_recursion", "equilibrium", "martingale_noise", "convergence")
VERIFY_STREAM = 7


@dataclass
class TheoremCheckReport:
    name: str
    passed: bool
    tolerance: str
    n_samples: int
    values: list = field(default_factory=list)
    running_mean: list = field(default_factory=list)
    half_width: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.name}: tolerance {self.tolerance}, samples {self.n_samples}"

    def to_record(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def write_reports(reports, path) -> None:
    """One JSON record per line."""
    with open(path, "w") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")


def _check_stream(seed: int, name: str) -> RngStream:
    return RngStream(seed, VERIFY_STREAM, (zlib.crc32(name.encode()),))


def kappa_vector(cfg: RunConfig) -> np.ndarray:
    kappas = [a.kappa for a in cfg.attacks]
    if any(k is None for k in kappas):
        raise ConfigError("kappa is known only for benign and multiplicative-noise workers")
    return np.array(kappas, dtype=float)


def conditional_means(problem: Problem, w: np.ndarray):
    """Per-shard mean gradients (rows) and the auxiliary-set mean gradient at ``w``."""
    ds, split, obj = problem.ds, problem.split, problem.obj
    G = np.stack([gradient(obj, w, ds.X[s], ds.y[s]) for s in split.worker_shards])
    g_aux = gradient(obj, w, ds.X[split.auxiliary], ds.y[split.auxiliary])
    return G, g_aux


def _require_theorem_mode(cfg: RunConfig):
    if cfg.mode != "theorem_check":
        raise ConfigError("theory checks need a theorem_check-mode config")


def _windows(n: int, burn_in: int, window: int):
    return [(s, min(s + window, n)) for s in range(burn_in, n, window) if min(s + window, n) - s >= 2]


def byz_tolerance_statistic(result: RunResult, burn_in: int = 50, window: int = 200,
                            n_se: float = 3.0) -> TheoremCheckReport:
    """Windowed mean of ``<grad F(w_t), H_t^T q_t>`` must not fall below ``-n_se`` standard errors."""
    cfg = result.config
    if cfg.aggregator.kind != "bygars_pp":
        raise ConfigError("byz_tolerance_statistic is defined for the bygars_pp aggregator")
    _require_theorem_mode(cfg)
    s = np.asarray(result.trace.byz_tolerance, dtype=float)
    running = np.cumsum(s) / np.arange(1, len(s) + 1)
    means, hws, passed = [], [], True
    for lo, hi in _windows(len(s), burn_in, window):
        seg = s[lo:hi]
        mu, se = seg.mean(), seg.std(ddof=1) / np.sqrt(len(seg))
        means.append(mu)
        hws.append(n_se * se)
        if mu < -n_se * se:
            passed = False
    if not means:
        raise ConfigError(f"run of {len(s)} iterations has no window after burn-in {burn_in}")
    return TheoremCheckReport(
        name="byz_tolerance", passed=passed,
        tolerance=f"window mean >= -{n_se:g} SE (burn-in {burn_in}, window {window})",
        n_samples=len(s), values=s.tolist(), running_mean=running.tolist(), half_width=hws,
        details={"window_means": means, "post_burn_in_mean": float(s[burn_in:].mean()) if len(s) > burn_in else None},
    )


def _trial_objects(cfg, problem, stream: RngStream, trial: int):
    shards = problem.split.worker_shards
    workers = make_workers(shards, cfg.attacks, cfg.seed, problem.obj.n_params)
    for j, ws in enumerate(workers):
        ws.rng = stream.child(trial, j).generator()
    aux = AuxOracle(problem.obj, problem.ds, problem.split.auxiliary, cfg.aux_batch_size,
                    stream.child(trial, cfg.m).generator())
    return workers, aux


def q_recursion_check(cfg: RunConfig, w: Optional[np.ndarray] = None, q: Optional[np.ndarray] = None,
                      n_trials: int = 10_000, alpha: Optional[float] = None, t: int = 0,
                      problem: Optional[Problem] = None, n_se: float = 4.0,
                      exact_tol: float = 1e-10) -> TheoremCheckReport:
    """Monte Carlo estimate of ``E[q_{t+1} | q_t, w]`` against ``(1-a) q + a kappa <grad, grad>``."""
    _require_theorem_mode(cfg)
    if n_trials < 100:
        raise ConfigError("q_recursion_check needs n_trials >= 100")
    problem = problem or build_problem(cfg)
    kappa = kappa_vector(cfg)
    w = problem.obj.zeros() if w is None else np.asarray(w, float)
    q = np.zeros(cfg.m) if q is None else np.asarray(q, float)
    a = alpha_at(cfg.effective_schedules, t) if alpha is None else float(alpha)
    stream = _check_stream(cfg.seed, "q_recursion")

    samples = np.empty((n_trials, cfg.m))
    for i in range(n_trials):
        workers, aux = _trial_objects(cfg, problem, stream, i)
        H = attack_round(workers, problem.obj, problem.ds, w, cfg.batch_size)
        samples[i] = reputation_update(q, H.rows, aux.gradient(w), a)

    G, g_aux = conditional_means(problem, w)
    expected = (1 - a) * q + a * kappa * (G @ g_aux)
    gF = population_gradient(problem.obj, w, problem.X_train, problem.y_train)
    population = (1 - a) * q + a * float(gF @ gF) * kappa
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n_trials)
    scale = np.maximum(1.0, np.abs(expected))
    tol = np.maximum(n_se * se, exact_tol * scale)
    ok = np.abs(mean - expected) <= tol
    return TheoremCheckReport(
        name="q_recursion", passed=bool(ok.all()),
        tolerance=f"|mean - expected| <= {n_se:g} SE per coordinate (floor {exact_tol:g} relative)",
        n_samples=n_trials, values=mean.tolist(), half_width=(n_se * se).tolist(),
        details={
            "alpha": a, "kappa": kappa.tolist(), "expected": expected.tolist(),
            "coordinate_pass": ok.tolist(), "z_scores": ((mean - expected) / np.where(se > 0, se, np.inf)).tolist(),
            "population_expected": population.tolist(),
        },
    )


def equilibrium_check(cfg: RunConfig, w: Optional[np.ndarray] = None, n_iterations: int = 5000,
                      n_trials: int = 10, problem: Optional[Problem] = None,
                      rel_tol: float = 0.05) -> TheoremCheckReport:
    """Run the reputation recursion alone at a frozen ``w`` and compare with its fixed point."""
    _require_theorem_mode(cfg)
    kappa = kappa_vector(cfg)
    if not np.any(kappa):
        raise ConfigError("kappa is the zero vector: the equilibrium is the origin, use an absolute check")
    problem = problem or build_problem(cfg)
    w = problem.obj.zeros() if w is None else np.asarray(w, float)
    sched = cfg.effective_schedules
    stream = _check_stream(cfg.seed, "equilibrium")
    finals = np.empty((n_trials, cfg.m))
    for i in range(n_trials):
        workers, aux = _trial_objects(cfg, problem, stream, i)
        st = AggregatorState("bygars_pp", cfg.m, sched, normalize=False)
        for t in range(n_iterations):
            H = attack_round(workers, problem.obj, problem.ds, w, cfg.batch_size, t)
            bygars_pp_step(st, w, H, aux, t)
        finals[i] = st.q
    q_T = finals.mean(axis=0)
    G, g_aux = conditional_means(problem, w)
    target = kappa * (G @ g_aux)
    gF = population_gradient(problem.obj, w, problem.X_train, problem.y_train)
    grad_sq = float(gF @ gF)
    population_target = kappa * grad_sq
    rel = float(np.linalg.norm(q_T - target) / np.linalg.norm(target))
    pop_rel = float(np.linalg.norm(q_T - population_target) / np.linalg.norm(population_target))
    return TheoremCheckReport(
        name="equilibrium", passed=rel <= rel_tol,
        tolerance=f"relative error <= {rel_tol:g} after {n_iterations} iterations",
        n_samples=n_trials, values=q_T.tolist(),
        half_width=(finals.std(axis=0, ddof=1) / np.sqrt(n_trials)).tolist() if n_trials > 1 else [],
        details={
            "target": target.tolist(), "relative_error": rel,
            "population_target": population_target.tolist(), "population_relative_error": pop_rel,
            "grad_norm_sq": grad_sq, "q_norm": float(np.linalg.norm(q_T)),
            "normalized_q": (q_T / grad_sq).tolist(),
        },
    )


def martingale_noise_check(result: RunResult, n_checkpoints: int = 10, n_trials: int = 10_000,
                           n_se: float = 4.0, exact_tol: float = 1e-10,
                           problem: Optional[Problem] = None) -> TheoremCheckReport:
    """Re-simulate rounds at recorded ``(w_t, q_t)`` and test that the noise terms have zero mean.

    ``u = (kappa^T q) g - H^T q`` and ``v = H g_aux - kappa <g_i, g_aux>`` with
    the conditional mean gradients; each coordinate of the Monte Carlo mean
    must lie within ``n_se`` standard errors of zero.
    """
    cfg = result.config
    _require_theorem_mode(cfg)
    kappa = kappa_vector(cfg)
    if not result.trace.w or not result.trace.q:
        raise ConfigError("martingale_noise_check needs a run trace with recorded w_t and q_t")
    problem = problem or build_problem(cfg)
    T = len(result.trace.w)
    picks = np.unique(np.linspace(0, T - 1, n_checkpoints).astype(int))
    stream = _check_stream(cfg.seed, "martingale_noise")
    worst = 0.0
    passed = True
    per_checkpoint = []
    for c, t in enumerate(picks):
        w, q = np.asarray(result.trace.w[t]), np.asarray(result.trace.q[t])
        G, g_aux_mean = conditional_means(problem, w)
        u_mean_target = (kappa * q) @ G
        v_target = kappa * (G @ g_aux_mean)
        U = np.empty((n_trials, problem.obj.n_params))
        V = np.empty((n_trials, cfg.m))
        for i in range(n_trials):
            workers, aux = _trial_objects(cfg, problem, stream.child(c), i)
            H = attack_round(workers, problem.obj, problem.ds, w, cfg.batch_size)
            U[i] = u_mean_target - H.rows.T @ q
            V[i] = H.rows @ aux.gradient(w) - v_target
        res = []
        for M in (U, V):
            mean = M.mean(axis=0)
            se = M.std(axis=0, ddof=1) / np.sqrt(n_trials)
            scale = np.maximum(1.0, np.abs(M).max(axis=0))
            ok = np.abs(mean) <= np.maximum(n_se * se, exact_tol * scale)
            z = np.abs(mean) / np.where(se > 0, se, np.inf)
            worst = max(worst, float(np.max(z)) if z.size else 0.0)
            res.append(bool(ok.all()))
        passed &= all(res)
        per_checkpoint.append({"t": int(t), "u_zero_mean": res[0], "v_zero_mean": res[1]})
    return TheoremCheckReport(
        name="martingale_noise", passed=passed,
        tolerance=f"|mean| <= {n_se:g} SE per coordinate at {len(picks)} checkpoints",
        n_samples=n_trials * len(picks),
        details={"checkpoints": per_checkpoint, "max_abs_z": worst},
    )


def schedule_warnings(sched: ScheduleSpec) -> list:
    out = []
    if not sched.gamma_exponent > sched.alpha_exponent:
        out.append(f"gamma_t/alpha_t does not vanish (gamma exponent {sched.gamma_exponent} "
                   f"<= alpha exponent {sched.alpha_exponent})")
    for name, e, b in (("gamma", sched.gamma_exponent, sched.beta), ("alpha", sched.alpha_exponent, sched.beta_m)):
        if b == 0 or not 0.5 < e <= 1.0:
            out.append(f"{name}_t violates sum = inf / sum of squares < inf (exponent {e}, decay {b})")
    return out


def convergence_check(result: RunResult, w_star: Optional[np.ndarray] = None,
                      ratio_tol: float = 0.05) -> TheoremCheckReport:
    """``||w_T - w*|| / ||w_0 - w*||`` must be at most ``ratio_tol``."""
    cfg = result.config
    w_star = result.w_star if w_star is None else np.asarray(w_star)
    if w_star is None:
        raise ConfigError("convergence_check needs the optimum w*")
    d0 = float(np.linalg.norm(result.w0 - w_star))
    dT = float(np.linalg.norm(result.w - w_star))
    ratio = dT / d0 if d0 > 0 else 0.0
    warns = schedule_warnings(cfg.effective_schedules)
    for msg in warns:
        log.warning(msg)
    return TheoremCheckReport(
        name="convergence", passed=ratio <= ratio_tol,
        tolerance=f"||w_T - w*|| / ||w_0 - w*|| <= {ratio_tol:g}",
        n_samples=cfg.iterations, values=list(result.trace.dist),
        details={"ratio": ratio, "initial_distance": d0, "final_distance": dT}, warnings=warns,
    )
