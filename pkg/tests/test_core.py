import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bygars.core import (ConfigError, CorruptGradientError, RngStream, ScheduleSpec, alpha_at, gamma_at,
                         normalize, worker_stream)


@pytest.mark.parametrize("g0,beta,t,expected", [(0.2, 0.9, 0, 0.2), (0.2, 0.9, 10, 0.02), (0.05, 0.5, 2, 0.025)])
def test_gamma_examples(g0, beta, t, expected):
    assert gamma_at(ScheduleSpec(gamma0=g0, beta=beta), t) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("a0,bm,t,expected", [
    (0.2, 0.5, 0, 0.2),
    (0.001, 0.1, 1, 0.001 / 1.1),
    (0.05, 0.5, 1024, 0.05 / (1 + 0.5 * 1024 ** 0.9)),
])
def test_alpha_examples(a0, bm, t, expected):
    assert alpha_at(ScheduleSpec(alpha0=a0, beta_m=bm), t) == pytest.approx(expected, rel=1e-12)


def test_schedule_rejects_bad_values():
    with pytest.raises(ConfigError):
        ScheduleSpec(gamma0=0.0)
    with pytest.raises(ConfigError):
        ScheduleSpec(beta=-1.0)
    with pytest.raises(ValueError):
        gamma_at(ScheduleSpec(), -1)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 10), st.floats(0, 5), st.floats(0.5, 1.0), st.integers(0, 10_000))
def test_schedules_are_positive_and_nonincreasing(g0, beta, expo, t):
    s = ScheduleSpec(gamma0=g0, beta=beta, gamma_exponent=expo, alpha0=g0, beta_m=beta, alpha_exponent=expo)
    assert 0 < gamma_at(s, t + 1) <= gamma_at(s, t) <= g0
    assert 0 < alpha_at(s, t + 1) <= alpha_at(s, t) <= g0


@pytest.mark.parametrize("v,target,expected", [([3, 4], 1, [0.6, 0.8]), ([0, 0], 5, [0, 0]), ([1, 0], 2, [2, 0])])
def test_normalize_examples(v, target, expected):
    np.testing.assert_allclose(normalize(np.array(v, float), target), expected, rtol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), st.floats(1e-3, 100))
def test_normalize_hits_target_norm(values, target):
    v = np.array(values)
    out = normalize(v, target)
    if np.linalg.norm(v) > 1e-12:
        assert np.linalg.norm(out) == pytest.approx(target, rel=1e-12)
        # direction preserved
        assert np.dot(out, v) > 0
    else:
        np.testing.assert_array_equal(out, v)


def test_normalize_rejects_nonfinite():
    with pytest.raises(CorruptGradientError):
        normalize(np.array([1.0, np.nan]), 1.0)


def test_streams_are_reproducible_and_distinct():
    a = RngStream(7, 2).generator().standard_normal(5)
    b = RngStream(7, 2).generator().standard_normal(5)
    c = RngStream(7, 3).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(RngStream(7, 2).child(0).generator().standard_normal(5), a)
    assert not np.allclose(worker_stream(7, 0).generator().random(3), worker_stream(7, 1).generator().random(3))
