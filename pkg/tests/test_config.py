import pytest
import yaml

from bygars.adversary import AttackSpec
from bygars.config import (RunConfig, default_config, default_schedules, dump_config, load_config)
from bygars.core import ConfigError, ScheduleSpec
from bygars.data import FULL_BATCH


def test_round_trip_through_file(tmp_path):
    cfg = default_config("classification", attacks="mixed", seed=3,
                         schedules=ScheduleSpec(gamma0=0.3, beta=0.1))
    path = tmp_path / "c.yaml"
    dump_config(cfg, path)
    assert load_config(path) == cfg


def test_null_schedules_keep_task_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    dump_config(default_config("regression"), path)
    cfg = load_config(path)
    assert cfg.schedules is None
    assert cfg.effective_schedules == default_schedules("regression", "bygars_pp")


@pytest.mark.parametrize("doc", [
    {"schema_version": 1, "iterationz": 5},
    {"schema_version": 1, "task": {"d": 3, "colour": 1}},
    {"schema_version": 1, "attacks": [{"kind": "lie", "params": {"zz": 1}}] + [{"kind": "benign"}] * 7},
    {"schema_version": 2},
    {"iterations": 5},
])
def test_unknown_keys_and_versions_rejected(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_invariants():
    with pytest.raises(ConfigError):
        RunConfig(m=3, attacks=(AttackSpec(),) * 2)
    with pytest.raises(ConfigError):
        RunConfig(iterations=0)
    with pytest.raises(ConfigError):
        RunConfig(mode="theorem_check", attacks="sign_flip:2")
    zero = AttackSpec("scaled_multiplicative", {"kappa_mean": 0.0, "kappa_std": 1.0})
    with pytest.raises(ConfigError):
        RunConfig(mode="theorem_check", attacks=(zero,) * 8)
    with pytest.raises(ConfigError):
        RunConfig(batch_size=5000)


def test_full_batch_keyword():
    cfg = RunConfig.from_dict(yaml.safe_load("schema_version: 1\nbatch_size: full\naux_batch_size: full\n"))
    assert cfg.batch_size == cfg.aux_batch_size == FULL_BATCH


def test_mode_dependent_defaults():
    assert default_config("regression").effective_l2_reg == 0.0
    assert default_config("classification").effective_l2_reg == 1e-3
    assert default_config("regression", mode="theorem_check").effective_l2_reg == 1e-3
    assert not default_config("regression", mode="theorem_check").normalize
    assert default_config("regression").iterations == 2000
    assert default_config("classification").iterations == 3000
