"""Losses and closed-form gradients for linear least squares and linear softmax."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MSE_LINEAR = "mse_linear"
SOFTMAX_LINEAR = "softmax_linear"


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Objective:
    """Per-example loss ``f(w, x, y)`` plus an optional ridge penalty.

    For ``softmax_linear`` the flat parameter vector holds a ``K x d`` weight
    matrix in row-major order (no bias term).
    """

    kind: str
    d: int
    K: int = 1
    l2_reg: float = 0.0

    def __post_init__(self):
        if self.kind not in (MSE_LINEAR, SOFTMAX_LINEAR):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be nonnegative")
        if self.kind == SOFTMAX_LINEAR and self.K < 2:
            raise ValueError("softmax objective needs K >= 2")

    @property
    def n_params(self) -> int:
        return self.d if self.kind == MSE_LINEAR else self.d * self.K

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n_params)


def _check(obj: Objective, w, X, y):
    if len(y) == 0:
        raise ValueError("loss/gradient over an empty set of rows")
    if w.shape != (obj.n_params,):
        raise ValueError(f"parameter vector has shape {w.shape}, expected ({obj.n_params},)")
    if X.shape[1] != obj.d:
        raise ValueError(f"rows have {X.shape[1]} features, objective expects {obj.d}")


def _log_softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def logits(obj: Objective, w: np.ndarray, X: np.ndarray) -> np.ndarray:
    return X @ w.reshape(obj.K, obj.d).T


def loss(obj: Objective, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    _check(obj, w, X, y)
    if obj.kind == MSE_LINEAR:
        r = X @ w - y
        data = 0.5 * float(np.mean(r * r))
    else:
        lp = _log_softmax(logits(obj, w, X))
        data = -float(np.mean(lp[np.arange(len(y)), y]))
    return data + 0.5 * obj.l2_reg * float(w @ w)


def gradient(obj: Objective, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mean per-example gradient over the given rows plus ``l2_reg * w``."""
    _check(obj, w, X, y)
    n = len(y)
    if obj.kind == MSE_LINEAR:
        g = X.T @ (X @ w - y) / n
    else:
        P = np.exp(_log_softmax(logits(obj, w, X)))
        P[np.arange(n), y] -= 1.0
        g = (P.T @ X / n).ravel()
    if obj.l2_reg:
        g = g + obj.l2_reg * w
    return g


def population_gradient(obj: Objective, w: np.ndarray, X_train: np.ndarray, y_train: np.ndarray) -> np.ndarray:
    """Full-training-set gradient, the stand-in for the population gradient."""
    return gradient(obj, w, X_train, y_train)


def closed_form_optimum(obj: Objective, X_train: np.ndarray, y_train: np.ndarray) -> np.ndarray:
    """Solve ``(X^T X / N + l2_reg I) w = X^T y / N`` for the least-squares objective."""
    if obj.kind != MSE_LINEAR:
        raise ValueError("closed-form optimum exists only for mse_linear")
    N = len(y_train)
    A = X_train.T @ X_train / N + obj.l2_reg * np.eye(obj.d)
    b = X_train.T @ y_train / N
    if obj.l2_reg == 0 and np.linalg.matrix_rank(A) < obj.d:
        raise SingularSystemError("normal equations are singular; use l2_reg > 0")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("normal equations are not positive definite; use l2_reg > 0") from exc
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


def accuracy(obj: Objective, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    if obj.kind != SOFTMAX_LINEAR:
        raise ValueError("accuracy is defined for classification only")
    return float(np.mean(np.argmax(logits(obj, w, X), axis=1) == y))
