"""Server-side aggregation: reputation-score rules and the comparison baselines."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ConfigError, ScheduleSpec, alpha_at, gamma_at, normalize
from .adversary import GradientBatch
from .data import Dataset, sample_batch
from .objective import Objective, gradient

log = logging.getLogger(__name__)

AGGREGATOR_KINDS = ("bygars", "bygars_pp", "average", "median", "baseline_oracle")
REPUTATION_KINDS = ("bygars", "bygars_pp")

# Target l2 norms for worker gradients per aggregator; auxiliary gradients go to 1.
WORKER_NORMS = {"bygars": 1.0, "bygars_pp": 2.0, "average": 5.0, "median": 5.0, "baseline_oracle": 5.0}
AUX_NORM = 1.0


@dataclass
class AuxOracle:
    """Server access to the clean auxiliary rows; ``batch_size`` 0 means the whole set."""

    obj: Objective
    ds: Dataset
    indices: np.ndarray
    batch_size: int
    rng: np.random.Generator

    def __post_init__(self):
        if not 0 <= self.batch_size <= len(self.indices):
            raise ConfigError(f"aux batch size {self.batch_size} must be in [0, {len(self.indices)}]")

    def draw(self) -> np.ndarray:
        return sample_batch(self.indices, self.batch_size, self.rng)

    def gradient(self, w: np.ndarray, batch: Optional[np.ndarray] = None) -> np.ndarray:
        if batch is None:
            batch = self.draw()
        return gradient(self.obj, w, self.ds.X[batch], self.ds.y[batch])


@dataclass
class AggregatorState:
    kind: str
    m: int
    schedules: ScheduleSpec = field(default_factory=ScheduleSpec)
    k_meta: int = 3
    normalize: bool = True
    worker_norm: Optional[float] = None
    aux_norm: float = AUX_NORM
    baseline_aux_norm: float = AUX_NORM
    reuse_aux_batch: bool = False
    q: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ConfigError(f"unknown aggregator {self.kind!r}; expected one of {list(AGGREGATOR_KINDS)}")
        if self.kind == "bygars" and self.k_meta < 1:
            raise ConfigError("k_meta must be >= 1")
        if self.worker_norm is None:
            self.worker_norm = WORKER_NORMS[self.kind]
        if self.q is None and self.kind in REPUTATION_KINDS:
            self.q = np.zeros(self.m)


def apply_norm_policy(kind: str, H: GradientBatch, aux_grad: Optional[np.ndarray],
                      worker_norm: Optional[float] = None, aux_norm: float = AUX_NORM):
    """Rescale worker rows and the auxiliary gradient to their per-aggregator norms.

    Rows with NaN/Inf entries are replaced by zeros and their worker ids are
    appended to ``H.corrupted``.
    """
    target = WORKER_NORMS[kind] if worker_norm is None else worker_norm
    rows = np.empty_like(H.rows)
    corrupted = list(H.corrupted)
    for j, row in enumerate(H.rows):
        if not np.all(np.isfinite(row)):
            log.warning("non-finite gradient from worker %s replaced by zeros", H.worker_ids[j])
            corrupted.append(H.worker_ids[j])
            rows[j] = 0.0
        else:
            rows[j] = normalize(row, target)
    aux = None if aux_grad is None else normalize(aux_grad, aux_norm)
    return GradientBatch(rows, list(H.worker_ids), corrupted), aux


def _zero_nonfinite(H: GradientBatch) -> GradientBatch:
    bad = ~np.all(np.isfinite(H.rows), axis=1)
    if not bad.any():
        return H
    rows = H.rows.copy()
    rows[bad] = 0.0
    return GradientBatch(rows, list(H.worker_ids), list(H.corrupted) + [H.worker_ids[j] for j in np.flatnonzero(bad)])


def _aux_direction(st: AggregatorState, aux: AuxOracle, w: np.ndarray, batch=None) -> np.ndarray:
    g = aux.gradient(w, batch)
    return normalize(g, st.aux_norm) if st.normalize else g


def bygars_step(st: AggregatorState, w: np.ndarray, H: GradientBatch, aux: AuxOracle, t: int):
    """Meta-learned reputation step: ``k_meta`` pseudo/meta updates on ``q``, then the real update.

    Expects rows already normalized when ``st.normalize`` is set.
    """
    gamma, alpha = gamma_at(st.schedules, t), alpha_at(st.schedules, t)
    Hm = H.rows
    q = st.q.copy()
    batch = aux.draw() if st.reuse_aux_batch else None
    for _ in range(st.k_meta):
        w_hat = w - gamma * (Hm.T @ q)
        q = q + alpha * gamma * (Hm @ _aux_direction(st, aux, w_hat, batch))
    st.q = q
    return w - gamma * (Hm.T @ q), q.copy()


def reputation_update(q: np.ndarray, rows: np.ndarray, g_aux: np.ndarray, alpha: float) -> np.ndarray:
    return (1.0 - alpha) * q + alpha * (rows @ g_aux)


def bygars_pp_step(st: AggregatorState, w: np.ndarray, H: GradientBatch, aux: AuxOracle, t: int):
    """Simultaneous update: ``w -= gamma H^T q`` and ``q <- (1-alpha) q + alpha H g_aux``.

    ``g_aux`` is evaluated at the pre-update ``w``.
    """
    gamma, alpha = gamma_at(st.schedules, t), alpha_at(st.schedules, t)
    g_aux = _aux_direction(st, aux, w)
    Hm = H.rows
    w_next = w - gamma * (Hm.T @ st.q)
    st.q = reputation_update(st.q, Hm, g_aux, alpha)
    return w_next, st.q.copy()


def average_step(st: AggregatorState, w: np.ndarray, H: GradientBatch, t: int) -> np.ndarray:
    return w - gamma_at(st.schedules, t) * H.rows.mean(axis=0)


def median_step(st: AggregatorState, w: np.ndarray, H: GradientBatch, t: int) -> np.ndarray:
    return w - gamma_at(st.schedules, t) * np.median(H.rows, axis=0)


def baseline_step(st: AggregatorState, w: np.ndarray, H: GradientBatch, aux: AuxOracle, t: int,
                  benign_mask) -> np.ndarray:
    """Average of the rows flagged benign plus one auxiliary gradient."""
    benign_mask = np.asarray(benign_mask, dtype=bool)
    if benign_mask.shape != (H.m,):
        raise ConfigError("benign mask must have one entry per worker")
    g_aux = aux.gradient(w)
    if st.normalize:
        g_aux = normalize(g_aux, st.baseline_aux_norm)
    pool = np.vstack([H.rows[benign_mask], g_aux[None, :]])
    return w - gamma_at(st.schedules, t) * pool.mean(axis=0)


def step(st: AggregatorState, w: np.ndarray, H: GradientBatch, aux: AuxOracle, t: int,
         benign_mask=None) -> np.ndarray:
    """Apply the state's norm policy (if enabled) and advance one iteration; returns ``w_{t+1}``."""
    if st.normalize:
        H, _ = apply_norm_policy(st.kind, H, None, st.worker_norm, st.aux_norm)
    else:
        H = _zero_nonfinite(H)
    if st.kind == "bygars":
        return bygars_step(st, w, H, aux, t)[0]
    if st.kind == "bygars_pp":
        return bygars_pp_step(st, w, H, aux, t)[0]
    if st.kind == "average":
        return average_step(st, w, H, t)
    if st.kind == "median":
        return median_step(st, w, H, t)
    if benign_mask is None:
        raise ConfigError("baseline_oracle needs the benign mask from the harness")
    return baseline_step(st, w, H, aux, t, benign_mask)
