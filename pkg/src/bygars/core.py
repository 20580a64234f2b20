"""Shared numeric helpers: step-size schedules, gradient normalization, seeded streams.

Parameter vectors (model weights ``w`` and reputation scores ``q``) are plain
1-D ``float64`` numpy arrays throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_NORM = 1e-12

# Fixed stream ids. Worker j draws from WORKER_STREAM_BASE + j.
DATA_STREAM = 0
PARTITION_STREAM = 1
SERVER_STREAM = 2
INIT_STREAM = 3
ATTACK_DIRECTION_STREAM = 4
WORKER_STREAM_BASE = 1000


class ConfigError(ValueError):
    """Raised for invalid run configurations or impossible parameter combinations."""


class CorruptGradientError(ValueError):
    """Raised when a gradient carries NaN or Inf entries."""


@dataclass(frozen=True)
class ScheduleSpec:
    """Decay schedules for the model step ``gamma_t`` and the reputation step ``alpha_t``."""

    gamma0: float = 0.1
    beta: float = 0.05
    alpha0: float = 0.05
    beta_m: float = 0.1
    gamma_exponent: float = 1.0
    alpha_exponent: float = 0.9

    def __post_init__(self):
        for name in ("gamma0", "alpha0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("beta", "beta_m", "gamma_exponent", "alpha_exponent"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")

    def gamma(self, t: int) -> float:
        return gamma_at(self, t)

    def alpha(self, t: int) -> float:
        return alpha_at(self, t)


def gamma_at(s: ScheduleSpec, t: int) -> float:
    if t < 0:
        raise ValueError("iteration index must be nonnegative")
    return s.gamma0 / (1.0 + s.beta * float(t) ** s.gamma_exponent)


def alpha_at(s: ScheduleSpec, t: int) -> float:
    if t < 0:
        raise ValueError("iteration index must be nonnegative")
    return s.alpha0 / (1.0 + s.beta_m * float(t) ** s.alpha_exponent)


def normalize(v: np.ndarray, target_norm: float) -> np.ndarray:
    """Rescale ``v`` to have l2 norm ``target_norm``.

    Vectors with norm at most ``EPS_NORM`` are returned unchanged (as a copy).
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise CorruptGradientError("cannot normalize a vector with non-finite entries")
    n = np.linalg.norm(v)
    if n <= EPS_NORM:
        return v.copy()
    return v * (target_norm / n)


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream keyed by ``(seed, stream_id)``.

    Streams are derived through ``numpy.random.SeedSequence`` so distinct ids
    give independent sequences. ``generator()`` returns a fresh generator at
    the start of the stream each time it is called.
    """

    seed: int
    stream_id: int
    path: tuple = ()

    def generator(self) -> np.random.Generator:
        entropy = [int(self.seed) & 0xFFFFFFFFFFFFFFFF, int(self.stream_id)]
        # The path goes in the spawn key: appending it to the entropy would make
        # trailing zero keys collide with the parent stream.
        ss = np.random.SeedSequence(entropy, spawn_key=tuple(int(k) for k in self.path))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "RngStream":
        """A sub-stream, e.g. for Monte Carlo trial ``i`` of a check."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))


def worker_stream(seed: int, worker_id: int) -> RngStream:
    return RngStream(seed, WORKER_STREAM_BASE + worker_id)


def check_finite(v: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise CorruptGradientError(f"{what} has non-finite entries")
    return v
