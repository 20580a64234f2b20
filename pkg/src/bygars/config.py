"""Run configuration: schema, validation, and (de)serialization.

Config files are YAML (JSON is accepted as a YAML subset) with a top-level
``schema_version``. Unknown keys anywhere in the document are errors.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .adversary import AttackSpec, attack_preset
from .aggregate import AGGREGATOR_KINDS, AUX_NORM
from .core import ConfigError, ScheduleSpec
from .data import CLASSIFICATION, FULL_BATCH, REGRESSION, SyntheticSpec

SCHEMA_VERSION = 1
MODES = ("empirical", "theorem_check")
THEOREM_ATTACKS = frozenset({"benign", "scaled_multiplicative"})
THEOREM_L2_REG = 1e-3
# The blob task is nearly separable; without a penalty the test loss degrades as weights grow.
CLASSIFICATION_L2_REG = 1e-3


@dataclass(frozen=True)
class AggregatorConfig:
    kind: str = "bygars_pp"
    k_meta: int = 3
    reuse_aux_batch: bool = False
    worker_norm: Optional[float] = None
    aux_norm: float = AUX_NORM
    baseline_aux_norm: float = AUX_NORM

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ConfigError(f"unknown aggregator {self.kind!r}; expected one of {list(AGGREGATOR_KINDS)}")
        if self.k_meta < 1:
            raise ConfigError("k_meta must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    task: SyntheticSpec = field(default_factory=SyntheticSpec)
    m: int = 8
    attacks: tuple = ()
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    schedules: Optional[ScheduleSpec] = None
    batch_size: int = 32
    aux_batch_size: int = 32
    iterations: int = 2000
    eval_every: int = 10
    seed: int = 0
    mode: str = "empirical"
    l2_reg: Optional[float] = None
    init_std: float = 0.0
    ball_radius: float = 1e6

    def __post_init__(self):
        if isinstance(self.attacks, str):
            object.__setattr__(self, "attacks", tuple(attack_preset(self.attacks, self.m)))
        if not self.attacks:
            object.__setattr__(self, "attacks", tuple(AttackSpec() for _ in range(self.m)))
        else:
            object.__setattr__(self, "attacks", tuple(self.attacks))
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if len(self.attacks) != self.m:
            raise ConfigError(f"{len(self.attacks)} attack specs given for m={self.m} workers")
        if self.iterations < 1 or self.eval_every < 1:
            raise ConfigError("iterations and eval_every must be >= 1")
        for name in ("batch_size", "aux_batch_size"):
            v = getattr(self, name)
            if v == "full":
                object.__setattr__(self, name, FULL_BATCH)
            elif not isinstance(v, int) or v < 0:
                raise ConfigError(f"{name} must be a positive integer or 'full', got {v!r}")
        if self.aux_batch_size > self.task.n_aux:
            raise ConfigError(f"aux_batch_size {self.aux_batch_size} exceeds n_aux {self.task.n_aux}")
        n_train = self.task.N - self.task.n_test - self.task.n_aux
        if n_train // self.m < self.batch_size:  # FULL_BATCH is 0 and always fits
            raise ConfigError(f"batch_size {self.batch_size} exceeds the smallest shard ({n_train // self.m} rows)")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.l2_reg is not None and self.l2_reg < 0:
            raise ConfigError("l2_reg must be nonnegative")
        if self.init_std < 0:
            raise ConfigError("init_std must be nonnegative")
        if self.mode == "theorem_check":
            bad = sorted({a.kind for a in self.attacks} - THEOREM_ATTACKS)
            if bad:
                raise ConfigError(f"theorem_check mode allows only benign/scaled_multiplicative workers, got {bad}")
            if all(a.kappa == 0 for a in self.attacks):
                raise ConfigError("theorem_check mode needs at least one worker with nonzero kappa")

    @property
    def effective_l2_reg(self) -> float:
        if self.l2_reg is not None:
            return self.l2_reg
        if self.mode == "theorem_check":
            return THEOREM_L2_REG
        return CLASSIFICATION_L2_REG if self.task.kind == CLASSIFICATION else 0.0

    @property
    def effective_schedules(self) -> ScheduleSpec:
        if self.schedules is not None:
            return self.schedules
        return default_schedules(self.task.kind, self.aggregator.kind, self.mode)

    @property
    def normalize(self) -> bool:
        return self.mode == "empirical"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "task": dataclasses.asdict(self.task),
            "m": self.m,
            "attacks": [a.to_dict() for a in self.attacks],
            "aggregator": dataclasses.asdict(self.aggregator),
            "schedules": None if self.schedules is None else dataclasses.asdict(self.schedules),
            "batch_size": self.batch_size,
            "aux_batch_size": self.aux_batch_size,
            "iterations": self.iterations,
            "eval_every": self.eval_every,
            "seed": self.seed,
            "mode": self.mode,
            "l2_reg": self.l2_reg,
            "init_std": self.init_std,
            "ball_radius": self.ball_radius,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        doc = dict(doc)
        version = doc.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
        top = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - top
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kw = dict(doc)
        if "task" in kw:
            kw["task"] = _build(SyntheticSpec, kw["task"], "task")
        if "aggregator" in kw:
            kw["aggregator"] = _build(AggregatorConfig, kw["aggregator"], "aggregator")
        if kw.get("schedules") is not None:
            kw["schedules"] = _build(ScheduleSpec, kw["schedules"], "schedules")
        if "attacks" in kw:
            kw["attacks"] = _parse_attacks(kw["attacks"], kw.get("m", 8))
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _build(klass, section, name):
    if section is None:
        return klass()
    if not isinstance(section, dict):
        raise ConfigError(f"{name} must be a mapping")
    allowed = {f.name for f in dataclasses.fields(klass)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    return klass(**section)


def _parse_attacks(value, m):
    if isinstance(value, str):
        return tuple(attack_preset(value, m))
    if not isinstance(value, list):
        raise ConfigError("attacks must be a list or a preset name")
    return tuple(AttackSpec.from_dict(a) for a in value)


# Step sizes shared by every aggregator on a task; the reputation step differs per rule.
_GAMMA = {
    ("regression", "empirical"): dict(gamma0=0.2, beta=0.02),
    ("classification", "empirical"): dict(gamma0=0.2, beta=0.02),
    ("regression", "theorem_check"): dict(gamma0=0.002, beta=0.001),
    ("classification", "theorem_check"): dict(gamma0=0.002, beta=0.001),
}
_ALPHA = {
    ("bygars", "empirical"): dict(alpha0=0.05, beta_m=0.001),
    ("bygars_pp", "empirical"): dict(alpha0=0.05, beta_m=0.01),
    ("bygars", "theorem_check"): dict(alpha0=1.0, beta_m=0.0),
    ("bygars_pp", "theorem_check"): dict(alpha0=0.05, beta_m=0.01, alpha_exponent=0.6),
}


def default_schedules(task_kind: str, aggregator_kind: str, mode: str = "empirical") -> ScheduleSpec:
    kw = dict(_GAMMA[(task_kind, mode)])
    kw.update(_ALPHA.get((aggregator_kind, mode), {}))
    return ScheduleSpec(**kw)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(doc)


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


def default_config(kind: str = REGRESSION, **overrides) -> RunConfig:
    """Desk-scale defaults: regression runs 2000 iterations, classification 3000."""
    task = SyntheticSpec(kind=kind)
    iterations = 2000 if kind == REGRESSION else 3000
    base = RunConfig(task=task, iterations=iterations)
    return base.replace(**overrides) if overrides else base
