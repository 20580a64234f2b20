"""Worker behaviours: honest gradients and the attack suite.

Attack kinds and parameter keys (these names are part of the config schema):

================== ============================================ =====================
kind               payload                                      params (default)
================== ============================================ =====================
benign             honest mini-batch gradient                   none
sign_flip          ``scale * g``                                scale (-1)
random_sign_flip   ``k * g``, ``k ~ N(mean, std^2)`` per round  mean (-2), std (1)
gaussian           ``N(0, noise_std^2 I)``                      noise_std (sqrt 200)
constant           ``value * ones``                             value (100)
label_flip         gradient on labels ``K-1-l``                 none
inner_product      ``scale * mean(benign)``                     scale (-1)
lie                ``mu - z * sigma`` over benign, per coord    z (1.5)
ofom               ``mean(benign) + magnitude * u``, fixed u    magnitude (100)
paf                as ofom with u redrawn every round           magnitude (100)
scaled_multiplicative ``k * g``, ``k`` iid, clipped             kappa_mean (1), kappa_std (0),
                                                                kappa_max (1000)
================== ============================================ =====================
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ATTACK_DIRECTION_STREAM, ConfigError, RngStream, worker_stream
from .data import CLASSIFICATION, Dataset, flip_labels, sample_batch
from .objective import Objective, gradient

ATTACK_DEFAULTS = {
    "benign": {},
    "sign_flip": {"scale": -1.0},
    "random_sign_flip": {"mean": -2.0, "std": 1.0},
    "gaussian": {"noise_std": float(np.sqrt(200.0))},
    "constant": {"value": 100.0},
    "label_flip": {},
    "inner_product": {"scale": -1.0},
    "lie": {"z": 1.5},
    "ofom": {"magnitude": 100.0},
    "paf": {"magnitude": 100.0},
    "scaled_multiplicative": {"kappa_mean": 1.0, "kappa_std": 0.0, "kappa_max": 1000.0},
}
ATTACK_KINDS = tuple(ATTACK_DEFAULTS)
COLLUSION_KINDS = frozenset({"inner_product", "lie", "ofom", "paf"})


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "benign"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ATTACK_DEFAULTS:
            raise ConfigError(f"unknown attack kind {self.kind!r}; expected one of {list(ATTACK_KINDS)}")
        defaults = ATTACK_DEFAULTS[self.kind]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ConfigError(f"attack {self.kind!r} got unknown params {sorted(unknown)}")
        merged = {**defaults, **{k: float(v) for k, v in self.params.items()}}
        object.__setattr__(self, "params", merged)
        p = merged
        if self.kind == "sign_flip" and not p["scale"] < 0:
            raise ConfigError("sign_flip scale must be negative")
        if self.kind == "inner_product" and not p["scale"] < 0:
            raise ConfigError("inner_product scale must be negative")
        if self.kind == "random_sign_flip" and p["std"] < 0:
            raise ConfigError("random_sign_flip std must be nonnegative")
        if self.kind == "gaussian" and p["noise_std"] < 0:
            raise ConfigError("gaussian noise_std must be nonnegative")
        if self.kind == "lie" and p["z"] < 0:
            raise ConfigError("lie z must be nonnegative")
        if self.kind == "scaled_multiplicative":
            if p["kappa_std"] < 0 or p["kappa_max"] <= 0:
                raise ConfigError("scaled_multiplicative needs kappa_std >= 0 and kappa_max > 0")
            if abs(p["kappa_mean"]) > p["kappa_max"]:
                raise ConfigError("|kappa_mean| must not exceed kappa_max")

    @property
    def is_benign(self) -> bool:
        return self.kind == "benign"

    @property
    def kappa(self) -> Optional[float]:
        """Mean multiplicative factor when the behaviour is multiplicative noise, else None."""
        if self.kind == "benign":
            return 1.0
        if self.kind == "scaled_multiplicative":
            return self.params["kappa_mean"]
        if self.kind == "sign_flip":
            return self.params["scale"]
        return None

    def to_dict(self) -> dict:
        defaults = ATTACK_DEFAULTS[self.kind]
        out = {"kind": self.kind}
        params = {k: v for k, v in self.params.items() if v != defaults[k]}
        if params:
            out["params"] = params
        return out

    @classmethod
    def from_dict(cls, d) -> "AttackSpec":
        if isinstance(d, str):
            return cls(d)
        extra = set(d) - {"kind", "params"}
        if extra:
            raise ConfigError(f"attack entry has unknown keys {sorted(extra)}")
        return cls(d.get("kind", "benign"), dict(d.get("params") or {}))


@dataclass
class WorkerState:
    """One simulated worker. ``rng`` is consumed for batches and attack noise."""

    worker_id: int
    shard: np.ndarray
    attack: AttackSpec
    rng: np.random.Generator
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.shard) == 0:
            raise ConfigError(f"worker {self.worker_id} has an empty shard")


def make_workers(shards, attacks, seed: int, n_params: int) -> list:
    if len(shards) != len(attacks):
        raise ConfigError(f"{len(attacks)} attack specs for {len(shards)} workers")
    workers = []
    for j, (shard, spec) in enumerate(zip(shards, attacks)):
        direction = None
        if spec.kind == "ofom":
            u = RngStream(seed, ATTACK_DIRECTION_STREAM).child(j).generator().standard_normal(n_params)
            direction = u / np.linalg.norm(u)
        workers.append(WorkerState(j, np.asarray(shard), spec, worker_stream(seed, j).generator(), direction))
    return workers


@dataclass
class GradientBatch:
    """The ``m x p`` matrix of received gradients, row ``j`` from worker ``worker_ids[j]``."""

    rows: np.ndarray
    worker_ids: list
    corrupted: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.rows.shape[0]


def honest_gradient(ws: WorkerState, obj: Objective, ds: Dataset, w: np.ndarray, batch_size: int) -> np.ndarray:
    """Mini-batch gradient on the worker's shard (label-flipped for label_flip workers)."""
    idx = sample_batch(ws.shard, batch_size, ws.rng)
    y = ds.y[idx]
    if ws.attack.kind == "label_flip":
        if ds.kind != CLASSIFICATION:
            raise ConfigError("label_flip attack requires a classification task")
        y = flip_labels(y, ds.K)
    return gradient(obj, w, ds.X[idx], y)


def _local_payload(ws: WorkerState, g: np.ndarray) -> np.ndarray:
    p = ws.attack.params
    kind = ws.attack.kind
    if kind in ("benign", "label_flip"):
        return g
    if kind == "sign_flip":
        return p["scale"] * g
    if kind == "random_sign_flip":
        return (p["mean"] + p["std"] * ws.rng.standard_normal()) * g
    if kind == "gaussian":
        return p["noise_std"] * ws.rng.standard_normal(g.shape[0])
    if kind == "constant":
        return np.full(g.shape[0], p["value"])
    if kind == "scaled_multiplicative":
        k = p["kappa_mean"] + p["kappa_std"] * ws.rng.standard_normal()
        return float(np.clip(k, -p["kappa_max"], p["kappa_max"])) * g
    raise AssertionError(kind)


def _collusion_payload(ws: WorkerState, benign: np.ndarray) -> np.ndarray:
    p = ws.attack.params
    kind = ws.attack.kind
    mu = benign.mean(axis=0)
    if kind == "inner_product":
        return p["scale"] * mu
    if kind == "lie":
        return mu - p["z"] * benign.std(axis=0)
    if kind == "ofom":
        return mu + p["magnitude"] * ws.direction
    if kind == "paf":
        u = ws.rng.standard_normal(mu.shape[0])
        return mu + p["magnitude"] * (u / np.linalg.norm(u))
    raise AssertionError(kind)


def attack_round(workers, obj: Objective, ds: Dataset, w: np.ndarray, batch_size: int, t: int = 0,
                 honest: Optional[np.ndarray] = None) -> GradientBatch:
    """Build the received-gradient matrix for one synchronous round.

    Phase one computes every worker's honest gradient (``honest`` may be
    passed in to inject precomputed ones). Phase two applies local attacks
    row by row, then lets colluders read the benign rows of phase one.
    """
    m = len(workers)
    if m < 1:
        raise ConfigError("attack_round needs at least one worker")
    if honest is None:
        honest = np.stack([honest_gradient(ws, obj, ds, w, batch_size) for ws in workers])
    rows = np.empty_like(honest)
    colluders = []
    for j, ws in enumerate(workers):
        if ws.attack.kind in COLLUSION_KINDS:
            colluders.append(j)
        else:
            rows[j] = _local_payload(ws, honest[j])
    if colluders:
        benign_idx = [j for j, ws in enumerate(workers) if ws.attack.is_benign]
        if not benign_idx:
            raise ConfigError("collusion attacks need at least one benign worker to observe")
        benign = honest[benign_idx]
        for j in colluders:
            rows[j] = _collusion_payload(workers[j], benign)
    return GradientBatch(rows, [ws.worker_id for ws in workers])


def mixed_attack_default(m: int = 8) -> list:
    """One benign worker (index 0) followed by the seven-attacker mix."""
    if m != 8:
        raise ConfigError("the default mixed attack is defined for exactly 8 workers")
    kinds = ["benign", "gaussian", "sign_flip", "sign_flip", "random_sign_flip",
             "label_flip", "label_flip", "constant"]
    return [AttackSpec(k) for k in kinds]


def attack_preset(name: str, m: int) -> list:
    """Parse an attack-set name: ``none``, ``mixed``, or ``<kind>:<count>[:key=value,...]``.

    Adversaries occupy the last ``count`` slots; the rest are benign.
    """
    if name in ("none", "benign"):
        return [AttackSpec() for _ in range(m)]
    if name == "mixed":
        return mixed_attack_default(m)
    parts = name.split(":")
    if len(parts) not in (2, 3):
        raise ConfigError(f"bad attack preset {name!r}")
    kind = parts[0]
    params = {}
    try:
        count = int(parts[1])
        if len(parts) == 3 and parts[2]:
            for kv in parts[2].split(","):
                k, v = kv.split("=")
                params[k] = float(v)
    except ValueError as exc:
        raise ConfigError(f"bad attack preset {name!r}: {exc}") from exc
    if not 0 <= count <= m:
        raise ConfigError(f"preset {name!r} asks for {count} adversaries out of {m}")
    return [AttackSpec() for _ in range(m - count)] + [AttackSpec(kind, params) for _ in range(count)]
