"""scikit-learn estimators that train linear models with simulated Byzantine workers.

The training rows are split into a clean auxiliary set held by the server
and ``n_workers`` shards. Workers follow ``attacks`` (a preset string such as
``"sign_flip:6"`` or a list of :class:`AttackSpec`), and the server combines
their gradients with the chosen aggregation rule.
"""
from __future__ import annotations


import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .adversary import AttackSpec, attack_preset
from .config import AggregatorConfig, RunConfig
from .core import PARTITION_STREAM, ConfigError, RngStream, ScheduleSpec
from .data import CLASSIFICATION, REGRESSION, Dataset, DataSplit, SyntheticSpec
from .objective import MSE_LINEAR, SOFTMAX_LINEAR, Objective, logits
from .simulation import Problem, run


class _ByGARSBase(BaseEstimator):
    _kind = REGRESSION

    def __init__(self, aggregator="bygars_pp", n_workers=8, attacks="none", n_aux=0.025,
                 batch_size=32, aux_batch_size=32, max_iter=2000, k_meta=3, schedules=None,
                 l2_reg=None, fit_intercept=True, random_state=0):
        self.aggregator = aggregator
        self.n_workers = n_workers
        self.attacks = attacks
        self.n_aux = n_aux
        self.batch_size = batch_size
        self.aux_batch_size = aux_batch_size
        self.max_iter = max_iter
        self.k_meta = k_meta
        self.schedules = schedules
        self.l2_reg = l2_reg
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def _design(self, X):
        if self.fit_intercept:
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def _n_aux(self, n):
        if isinstance(self.n_aux, (float, np.floating)) and 0 < self.n_aux < 1:
            return max(1, int(round(self.n_aux * n)))
        return int(self.n_aux)

    def _attack_list(self):
        if isinstance(self.attacks, str):
            return tuple(attack_preset(self.attacks, self.n_workers))
        return tuple(a if isinstance(a, AttackSpec) else AttackSpec.from_dict(a) for a in self.attacks)

    def _seed(self):
        if self.random_state is None:
            return int(np.random.SeedSequence().generate_state(1)[0])
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        raise ConfigError("random_state must be an int or None")

    def _fit(self, X, y_enc, K):
        Xd = self._design(X)
        n, d = Xd.shape
        n_aux = self._n_aux(n)
        if not 1 <= n_aux < n - self.n_workers:
            raise ValueError(f"n_aux={n_aux} leaves too few rows for {self.n_workers} workers")
        seed = self._seed()
        perm = RngStream(seed, PARTITION_STREAM).generator().permutation(n)
        aux = np.sort(perm[:n_aux])
        shards = [np.sort(s) for s in np.array_split(perm[n_aux:], self.n_workers)]
        ds = Dataset(Xd, y_enc, self._kind, K if self._kind == CLASSIFICATION else 0)
        split = DataSplit(shards, aux, np.array([], dtype=int))

        smallest = min(len(s) for s in shards)
        batch = min(self.batch_size, smallest) if self.batch_size != "full" else "full"
        aux_batch = min(self.aux_batch_size, n_aux) if self.aux_batch_size != "full" else "full"
        schedules = self.schedules
        if isinstance(schedules, dict):
            schedules = ScheduleSpec(**schedules)
        task = SyntheticSpec(kind=self._kind, d=d, N=n, n_test=0, n_aux=n_aux, K=max(K, 2))
        cfg = RunConfig(
            task=task, m=self.n_workers, attacks=self._attack_list(),
            aggregator=AggregatorConfig(kind=self.aggregator, k_meta=self.k_meta),
            schedules=schedules, batch_size=batch, aux_batch_size=aux_batch,
            iterations=self.max_iter, eval_every=self.max_iter, seed=seed, l2_reg=self.l2_reg,
        )
        if self._kind == CLASSIFICATION:
            obj = Objective(SOFTMAX_LINEAR, d, K, cfg.effective_l2_reg)
        else:
            obj = Objective(MSE_LINEAR, d, 1, cfg.effective_l2_reg)
        result = run(cfg, problem=Problem(ds, split, obj), record_trace=False)

        self.config_ = cfg
        self.w_ = result.w
        self.reputation_ = result.q
        self.train_loss_ = result.final.train_loss
        self.n_features_in_ = X.shape[1]
        return self

    def _check_X(self, X):
        check_is_fitted(self, "w_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self._design(X)


class ByGARSRegressor(RegressorMixin, _ByGARSBase):
    """Least-squares linear regression trained by Byzantine-resilient distributed SGD.

    Attributes
    ----------
    coef_, intercept_ : fitted weights.
    reputation_ : final per-worker reputation scores (``None`` for non-reputation rules).
    """

    _kind = REGRESSION

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self._fit(X, y.astype(np.float64), 1)
        self.coef_ = self.w_[: self.n_features_in_]
        self.intercept_ = float(self.w_[-1]) if self.fit_intercept else 0.0
        return self

    def predict(self, X):
        return self._check_X(X) @ self.w_


class ByGARSClassifier(ClassifierMixin, _ByGARSBase):
    """Multinomial logistic regression trained by Byzantine-resilient distributed SGD.

    ``label_flip`` workers map class index ``l`` to ``K-1-l`` in the order of ``classes_``.
    """

    _kind = CLASSIFICATION

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        K = len(self.classes_)
        if K < 2:
            raise ValueError("need samples of at least two classes")
        self._fit(X, y_enc.astype(np.int64), K)
        W = self.w_.reshape(K, -1)
        self.coef_ = W[:, : self.n_features_in_]
        self.intercept_ = W[:, -1] if self.fit_intercept else np.zeros(K)
        return self

    def decision_function(self, X):
        Xd = self._check_X(X)
        return logits(self._objective, self.w_, Xd)

    @property
    def _objective(self) -> Objective:
        K, d = len(self.classes_), self.w_.size // len(self.classes_)
        return Objective(SOFTMAX_LINEAR, d, K)

    def predict_proba(self, X):
        Z = self.decision_function(X)
        Z = Z - Z.max(axis=1, keepdims=True)
        P = np.exp(Z)
        return P / P.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
