"""Experiment runner: metrics files, parameter sweeps and theory-check reports."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import verify
from .adversary import AttackSpec, attack_preset
from .config import RunConfig, dump_config
from .core import ConfigError
from .simulation import RunResult, build_problem, run

log = logging.getLogger(__name__)

SWEEP_AXES = ("n_aux", "k_meta", "attacks", "aggregator", "batch_size", "lie_z")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def metrics_columns(cfg: RunConfig) -> list:
    cols = ["t", "train_loss", "test_loss"]
    if cfg.task.kind == "classification":
        cols.append("test_accuracy")
    if cfg.task.kind == "regression":
        cols.append("dist_to_opt")
    if cfg.aggregator.kind in ("bygars", "bygars_pp"):
        cols += [f"q_{j}" for j in range(cfg.m)]
    cols += ["gamma", "alpha"]
    if cfg.mode == "theorem_check":
        cols.append("byz_tolerance")
    return cols


def metrics_rows(result: RunResult) -> list:
    cols = metrics_columns(result.config)
    rows = []
    for rec in result.records:
        row = {"t": rec.t, "train_loss": rec.train_loss, "test_loss": rec.test_loss,
               "test_accuracy": rec.test_accuracy, "dist_to_opt": rec.dist_to_opt,
               "gamma": rec.gamma, "alpha": rec.alpha, "byz_tolerance": rec.byz_tolerance}
        if rec.q is not None:
            row.update({f"q_{j}": v for j, v in enumerate(rec.q)})
        rows.append([_fmt(row.get(c)) for c in cols])
    return rows


def expected_row_count(cfg: RunConfig) -> int:
    return math.ceil(cfg.iterations / cfg.eval_every) + 1


def write_metrics(result: RunResult, path) -> None:
    """Comma-separated metrics, one row per eval point.

    Floats use their shortest round-trip representation. Wall time is left
    out so that reruns of one config produce identical files.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(metrics_columns(result.config))
        w.writerows(metrics_rows(result))


def read_metrics(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_to_dir(cfg: RunConfig, out_dir) -> RunResult:
    """Run one config and write ``metrics_seed<N>.csv``, ``final_seed<N>.json`` and the resolved config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run(cfg, record_trace=False)
    write_metrics(result, out / f"metrics_seed{cfg.seed}.csv")
    final = {"w": result.w.tolist(), "q": None if result.q is None else result.q.tolist()}
    (out / f"final_seed{cfg.seed}.json").write_text(json.dumps(final) + "\n")
    dump_config(cfg, out / f"config_seed{cfg.seed}.yaml")
    return result


def apply_axis(cfg: RunConfig, axis: str, value) -> RunConfig:
    """Return ``cfg`` with one sweep axis set to ``value``."""
    if axis == "n_aux":
        n_aux = int(value)
        task = replace(cfg.task, n_aux=n_aux)
        # The auxiliary batch cannot exceed the auxiliary set.
        aux_bs = cfg.aux_batch_size if cfg.aux_batch_size <= n_aux else n_aux
        return cfg.replace(task=task, aux_batch_size=aux_bs)
    if axis == "k_meta":
        return cfg.replace(aggregator=replace(cfg.aggregator, k_meta=int(value)))
    if axis == "attacks":
        if isinstance(value, str):
            return cfg.replace(attacks=tuple(attack_preset(value, cfg.m)))
        return cfg.replace(attacks=tuple(value))
    if axis == "aggregator":
        return cfg.replace(aggregator=replace(cfg.aggregator, kind=str(value)))
    if axis == "batch_size":
        return cfg.replace(batch_size=value if value == "full" else int(value))
    if axis == "lie_z":
        if not any(a.kind == "lie" for a in cfg.attacks):
            raise ConfigError("lie_z sweep needs at least one lie worker in the base config")
        attacks = tuple(AttackSpec("lie", {**a.params, "z": float(value)}) if a.kind == "lie" else a
                        for a in cfg.attacks)
        return cfg.replace(attacks=attacks)
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {list(SWEEP_AXES)}")


def parse_axis_value(axis: str, text: str):
    if axis in ("n_aux", "k_meta"):
        return int(text)
    if axis == "batch_size":
        return text if text == "full" else int(text)
    if axis == "lie_z":
        return float(text)
    if axis in ("attacks", "aggregator"):
        return text
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {list(SWEEP_AXES)}")


@dataclass
class SweepRow:
    axis: str
    value: str
    seed: int
    final_train_loss: float
    final_test_loss: float
    final_test_accuracy: Optional[float]
    final_dist_to_opt: Optional[float]
    iterations: int


def _sweep_one(args) -> SweepRow:
    cfg, axis, value, out_dir = args
    result = run_to_dir(cfg, out_dir) if out_dir is not None else run(cfg, record_trace=False)
    f = result.final
    return SweepRow(axis, str(value), cfg.seed, f.train_loss, f.test_loss, f.test_accuracy,
                    f.dist_to_opt, cfg.iterations)


def sweep(base: RunConfig, axis: str, values: Sequence, seeds: Sequence[int], jobs: int = 1,
          out_dir=None) -> list:
    """Run the cross product ``values x seeds``; one :class:`SweepRow` per run.

    Runs are independent (each builds its streams from its own seed), so
    ``jobs > 1`` executes them in worker processes with identical results.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {list(SWEEP_AXES)}")
    if not list(values):
        raise ConfigError("sweep needs at least one value")
    if not list(seeds):
        raise ConfigError("sweep needs at least one seed")
    tasks = []
    for v in values:
        cfg_v = apply_axis(base, axis, v)
        for s in seeds:
            sub = None if out_dir is None else Path(out_dir) / f"{axis}={v}"
            tasks.append((cfg_v.replace(seed=int(s)), axis, v, sub))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]


def write_sweep_table(rows: list, path) -> None:
    fields = ["axis", "value", "seed", "final_train_loss", "final_test_loss", "final_test_accuracy",
              "final_dist_to_opt", "iterations"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in fields])


def sweep_means(rows: list) -> dict:
    """Mean final test loss per axis value, in first-seen order."""
    acc = {}
    for r in rows:
        acc.setdefault(r.value, []).append(r.final_test_loss)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def verify_cmd(cfg: RunConfig, checks: Sequence[str], out_path=None, n_trials: Optional[int] = None) -> list:
    """Run the named theory checks on ``cfg`` and optionally write a JSON-lines report.

    ``n_trials`` overrides the Monte Carlo sample count of the sampling checks.
    """
    checks = list(checks)
    if not checks:
        raise ConfigError("no checks requested")
    unknown = [c for c in checks if c not in verify.CHECK_NAMES]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; expected a subset of {list(verify.CHECK_NAMES)}")
    if cfg.mode != "theorem_check":
        raise ConfigError("verify needs a config with mode: theorem_check")
    problem = build_problem(cfg)
    mc = {} if n_trials is None else {"n_trials": n_trials}
    result = None
    if {"byz_tolerance", "martingale_noise", "convergence"} & set(checks):
        result = run(cfg, problem=problem, record_trace=True)
    reports = []
    for name in checks:
        if name == "byz_tolerance":
            reports.append(verify.byz_tolerance_statistic(result))
        elif name == "q_recursion":
            reports.append(verify.q_recursion_check(cfg, problem=problem, **mc))
        elif name == "equilibrium":
            reports.append(verify.equilibrium_check(cfg, problem=problem))
        elif name == "martingale_noise":
            reports.append(verify.martingale_noise_check(result, problem=problem, **mc))
        else:
            reports.append(verify.convergence_check(result))
    if out_path is not None:
        verify.write_reports(reports, out_path)
    return reports
