import numpy as np
import pytest

from bygars.adversary import AttackSpec
from bygars.config import RunConfig
from bygars.data import SyntheticSpec

SMALL_REG = SyntheticSpec(kind="regression", d=5, N=600, n_test=100, n_aux=50)
SMALL_CLS = SyntheticSpec(kind="classification", d=6, N=800, n_test=100, n_aux=60, K=3, class_sep=3.0)


def small_config(kind="regression", **kw):
    task = SMALL_REG if kind == "regression" else SMALL_CLS
    base = dict(task=task, iterations=100, eval_every=10, batch_size=16, aux_batch_size=16)
    base.update(kw)
    return RunConfig(**base)


def theorem_config(kappas, iterations=100, seed=0, task=SMALL_REG, **kw):
    attacks = tuple(AttackSpec() if k == 1 else
                    AttackSpec("scaled_multiplicative", {"kappa_mean": k, "kappa_std": 0.0 if k else 1.0})
                    for k in kappas)
    base = dict(task=task, m=len(kappas), attacks=attacks, iterations=iterations, seed=seed,
                mode="theorem_check", eval_every=10, batch_size=16, aux_batch_size=16)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
