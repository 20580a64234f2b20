"""Synthetic tasks, random partitioning across workers, and mini-batch sampling."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ConfigError, RngStream

REGRESSION = "regression"
CLASSIFICATION = "classification"

_MAGIC = "BYGARS-DATASET"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = REGRESSION
    d: int = 20
    N: int = 10_000
    n_test: int = 2_000
    n_aux: int = 250
    noise_std: float = 0.1
    theta_star_mean: float = 1.0
    K: int = 10
    class_sep: float = 4.5

    def __post_init__(self):
        if self.kind not in (REGRESSION, CLASSIFICATION):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.d <= 0 or self.N <= 0:
            raise ConfigError("d and N must be positive")
        if self.n_test < 0 or self.n_aux < 1:
            raise ConfigError("n_test must be >= 0 and n_aux >= 1")
        if self.n_test + self.n_aux >= self.N:
            raise ConfigError(
                f"n_test + n_aux = {self.n_test + self.n_aux} leaves no training rows out of N={self.N}"
            )
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")
        if self.kind == CLASSIFICATION and self.K < 2:
            raise ConfigError("classification needs K >= 2")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    kind: str
    K: int = 0

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] == 0 or self.X.shape[1] == 0:
            raise ValueError(f"features must be a non-empty 2-D array, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("targets must be a vector with one entry per row")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise ValueError("features and targets must be finite")
        if self.kind == CLASSIFICATION:
            if self.K < 2:
                raise ValueError("classification dataset needs K >= 2")
            if self.y.min() < 0 or self.y.max() >= self.K:
                raise ValueError(f"labels must lie in 0..{self.K - 1}")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class DataSplit:
    worker_shards: list
    auxiliary: np.ndarray
    test: np.ndarray
    train: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.train is None:
            object.__setattr__(self, "train", np.sort(np.concatenate(self.worker_shards)))


def generate_regression(spec: SyntheticSpec, rng: RngStream):
    """Linear-Gaussian regression data ``y = x^T theta* + eps``.

    Returns ``(dataset, theta_star)``.
    """
    g = rng.generator()
    theta_star = spec.theta_star_mean + g.standard_normal(spec.d)
    X = g.standard_normal((spec.N, spec.d))
    eps = spec.noise_std * g.standard_normal(spec.N)
    y = X @ theta_star + eps
    return Dataset(X, y, REGRESSION), theta_star


def class_means(spec: SyntheticSpec, rng: RngStream) -> np.ndarray:
    g = rng.generator()
    if spec.K <= spec.d:
        q, _ = np.linalg.qr(g.standard_normal((spec.d, spec.d)))
        dirs = q.T[: spec.K]
    else:
        dirs = g.standard_normal((spec.K, spec.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return spec.class_sep * dirs


def generate_classification(spec: SyntheticSpec, rng: RngStream, means: Optional[np.ndarray] = None) -> Dataset:
    """``K`` unit-covariance Gaussian blobs; the label is the blob index.

    Default means are ``class_sep`` times orthonormal directions, so all blobs
    are equidistant from each other and from the origin.
    """
    if means is None:
        means = class_means(spec, rng.child(0))
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (spec.K, spec.d):
        raise ConfigError(f"means must have shape {(spec.K, spec.d)}, got {means.shape}")
    g = rng.generator()
    y = g.integers(0, spec.K, size=spec.N)
    X = means[y] + g.standard_normal((spec.N, spec.d))
    return Dataset(X, y.astype(np.int64), CLASSIFICATION, spec.K)


def generate(spec: SyntheticSpec, rng: RngStream):
    """Dispatch on ``spec.kind``; returns ``(dataset, theta_star or None)``."""
    if spec.kind == REGRESSION:
        return generate_regression(spec, rng)
    return generate_classification(spec, rng), None


def partition(ds: Dataset, m: int, n_aux: int, n_test: int, rng: RngStream) -> DataSplit:
    """Random disjoint split into test rows, auxiliary rows and ``m`` worker shards.

    Shard sizes differ by at most one.
    """
    if m < 1:
        raise ConfigError("need at least one worker")
    n_train = ds.N - n_aux - n_test
    if n_aux < 1 or n_test < 0 or n_train < m:
        raise ConfigError(
            f"cannot split N={ds.N} rows into n_test={n_test}, n_aux={n_aux} and {m} non-empty shards"
        )
    perm = rng.generator().permutation(ds.N)
    test = np.sort(perm[:n_test])
    aux = np.sort(perm[n_test : n_test + n_aux])
    shards = [np.sort(s) for s in np.array_split(perm[n_test + n_aux :], m)]
    return DataSplit(shards, aux, test)


FULL_BATCH = 0


def sample_batch(indices: np.ndarray, batch_size: int, gen: np.random.Generator) -> np.ndarray:
    """Uniform sample of ``batch_size`` distinct entries of ``indices``.

    ``FULL_BATCH`` (0) selects every index without consuming randomness.
    """
    n = len(indices)
    if batch_size == FULL_BATCH:
        return np.asarray(indices).copy()
    if batch_size > n or batch_size < 1:
        raise ConfigError(f"batch size {batch_size} not in [1, {n}]")
    if batch_size == n:
        return np.asarray(indices).copy()
    return indices[gen.choice(n, size=batch_size, replace=False)]


def flip_labels(y: np.ndarray, K: int) -> np.ndarray:
    return (K - 1) - y


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset as one ASCII header line followed by raw little-endian arrays.

    Header: ``BYGARS-DATASET 1 d=<d> N=<N> kind=<kind> K=<K>``. The body is
    the ``N*d`` float64 features in row-major order then the ``N`` targets
    (float64 for regression, int64 for labels).
    """
    header = f"{_MAGIC} {_FORMAT_VERSION} d={ds.d} N={ds.N} kind={ds.kind} K={ds.K}\n"
    ydtype = "<f8" if ds.kind == REGRESSION else "<i8"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(ds.X, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.y, dtype=ydtype).tobytes())


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 6 or parts[0] != _MAGIC:
        raise ValueError(f"{path}: not a dataset file")
    if int(parts[1]) != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {parts[1]}")
    meta = dict(p.split("=", 1) for p in parts[2:])
    d, N, kind, K = int(meta["d"]), int(meta["N"]), meta["kind"], int(meta["K"])
    body = io.BytesIO(raw[nl + 1 :])
    X = np.frombuffer(body.read(8 * N * d), dtype="<f8").reshape(N, d).astype(np.float64)
    ydtype = "<f8" if kind == REGRESSION else "<i8"
    y = np.frombuffer(body.read(8 * N), dtype=ydtype).astype(np.float64 if kind == REGRESSION else np.int64)
    if body.read():
        raise ValueError(f"{path}: trailing bytes after dataset body")
    return Dataset(X, y, kind, K)
