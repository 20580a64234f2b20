"""The synchronous parameter-server training loop."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adversary import attack_round, make_workers
from .aggregate import AggregatorState, AuxOracle, step
from .config import RunConfig
from .core import (INIT_STREAM, PARTITION_STREAM, SERVER_STREAM, DATA_STREAM, RngStream,
                   alpha_at, gamma_at)
from .data import CLASSIFICATION, Dataset, DataSplit, generate, partition
from .objective import (MSE_LINEAR, SOFTMAX_LINEAR, Objective, SingularSystemError, accuracy,
                        closed_form_optimum, loss, population_gradient)

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """A run aborted at iteration ``t`` for a machine-readable ``cause``."""

    def __init__(self, t: int, cause: str, detail: str = ""):
        super().__init__(f"iteration {t}: {cause}" + (f" ({detail})" if detail else ""))
        self.t = t
        self.cause = cause


@dataclass
class MetricsRecord:
    t: int
    train_loss: float
    test_loss: float
    q: np.ndarray
    gamma: float
    alpha: float
    wall_time: float
    test_accuracy: Optional[float] = None
    dist_to_opt: Optional[float] = None
    byz_tolerance: Optional[float] = None


@dataclass
class RunTrace:
    """Per-iteration quantities, recorded for every t (not just eval points)."""

    q: list = field(default_factory=list)
    w: list = field(default_factory=list)
    dist: list = field(default_factory=list)
    byz_tolerance: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)


@dataclass
class RunResult:
    config: RunConfig
    records: list
    w: np.ndarray
    q: Optional[np.ndarray]
    trace: RunTrace
    w0: np.ndarray
    w_star: Optional[np.ndarray]

    @property
    def final(self) -> MetricsRecord:
        return self.records[-1]


@dataclass
class Problem:
    """A generated dataset with its split and objective."""

    ds: Dataset
    split: DataSplit
    obj: Objective
    theta_star: Optional[np.ndarray] = None

    @property
    def X_train(self):
        return self.ds.X[self.split.train]

    @property
    def y_train(self):
        return self.ds.y[self.split.train]


def build_problem(cfg: RunConfig) -> Problem:
    ds, theta_star = generate(cfg.task, RngStream(cfg.seed, DATA_STREAM))
    split = partition(ds, cfg.m, cfg.task.n_aux, cfg.task.n_test, RngStream(cfg.seed, PARTITION_STREAM))
    if ds.kind == CLASSIFICATION:
        obj = Objective(SOFTMAX_LINEAR, ds.d, ds.K, cfg.effective_l2_reg)
    else:
        obj = Objective(MSE_LINEAR, ds.d, 1, cfg.effective_l2_reg)
    return Problem(ds, split, obj, theta_star)


def make_aggregator(cfg: RunConfig) -> AggregatorState:
    a = cfg.aggregator
    return AggregatorState(
        kind=a.kind, m=cfg.m, schedules=cfg.effective_schedules, k_meta=a.k_meta,
        normalize=cfg.normalize, worker_norm=a.worker_norm, aux_norm=a.aux_norm,
        baseline_aux_norm=a.baseline_aux_norm, reuse_aux_batch=a.reuse_aux_batch,
    )


def run(cfg: RunConfig, problem: Optional[Problem] = None, record_trace: bool = True) -> RunResult:
    """Execute one run. Deterministic given the config (including its seed)."""
    problem = problem or build_problem(cfg)
    ds, split, obj = problem.ds, problem.split, problem.obj
    X_tr, y_tr = problem.X_train, problem.y_train
    X_te, y_te = ds.X[split.test], ds.y[split.test]
    theorem = cfg.mode == "theorem_check"

    w_star = None
    if obj.kind == MSE_LINEAR:
        try:
            w_star = closed_form_optimum(obj, X_tr, y_tr)
        except SingularSystemError:
            log.warning("training system is singular; distance to optimum not reported")

    w = cfg.init_std * RngStream(cfg.seed, INIT_STREAM).generator().standard_normal(obj.n_params)
    w0 = w.copy()
    workers = make_workers(split.worker_shards, cfg.attacks, cfg.seed, obj.n_params)
    aux = AuxOracle(obj, ds, split.auxiliary, cfg.aux_batch_size, RngStream(cfg.seed, SERVER_STREAM).generator())
    agg = make_aggregator(cfg)
    benign_mask = np.array([a.is_benign for a in cfg.attacks])
    sched = agg.schedules

    trace = RunTrace()
    records = []
    start = time.perf_counter()
    warned_ball = False

    def evaluate(t, s_t=None):
        rec = MetricsRecord(
            t=t,
            train_loss=loss(obj, w, X_tr, y_tr),
            test_loss=loss(obj, w, X_te, y_te) if len(y_te) else float("nan"),
            q=None if agg.q is None else agg.q.copy(),
            gamma=gamma_at(sched, t),
            alpha=alpha_at(sched, t),
            wall_time=time.perf_counter() - start,
        )
        if obj.kind == SOFTMAX_LINEAR and len(y_te):
            rec.test_accuracy = accuracy(obj, w, X_te, y_te)
        if w_star is not None:
            rec.dist_to_opt = float(np.linalg.norm(w - w_star))
        if theorem:
            rec.byz_tolerance = s_t
        records.append(rec)

    evaluate(0, 0.0 if theorem else None)
    for t in range(cfg.iterations):
        try:
            H = attack_round(workers, obj, ds, w, cfg.batch_size, t)
            s_t = None
            if theorem or record_trace:
                trace.w.append(w.copy())
                if agg.q is not None:
                    trace.q.append(agg.q.copy())
                if w_star is not None:
                    trace.dist.append(float(np.linalg.norm(w - w_star)))
            if theorem:
                gF = population_gradient(obj, w, X_tr, y_tr)
                trace.grad_norm_sq.append(float(gF @ gF))
                if agg.q is not None:
                    s_t = float(gF @ (H.rows.T @ agg.q))
                    trace.byz_tolerance.append(s_t)
            w = step(agg, w, H, aux, t, benign_mask)
        except SimulationError:
            raise
        except Exception as exc:
            raise SimulationError(t, type(exc).__name__, str(exc)) from exc
        if not np.all(np.isfinite(w)):
            raise SimulationError(t, "non_finite_parameters", "parameters overflowed")
        if not warned_ball and np.linalg.norm(w) > cfg.ball_radius:
            log.warning("iterate norm exceeded ball radius %g at t=%d", cfg.ball_radius, t)
            warned_ball = True
        t_next = t + 1
        if t_next % cfg.eval_every == 0 or t_next == cfg.iterations:
            evaluate(t_next, s_t)

    if record_trace and w_star is not None:
        trace.dist.append(float(np.linalg.norm(w - w_star)))
    return RunResult(cfg, records, w, None if agg.q is None else agg.q.copy(), trace, w0, w_star)
