import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivemimic.reward import (
    ExpertProfile,
    Profile,
    RewardConfig,
    deterministic_reward,
    stochastic_reward,
)

LAP = 1000.0
GRID = np.arange(0.0, LAP, 5.0)


def _profile(with_samples=True, n_samples=4):
    d_mean = 3.0 + 0.5 * np.sin(GRID / 100.0)
    v_mean = 80.0 + 10.0 * np.cos(GRID / 150.0)
    if with_samples:
        rng = np.random.default_rng(0)
        d_s = [d_mean + rng.normal(0, 0.3) for _ in range(n_samples)]
        v_s = [v_mean + rng.normal(0, 2.0) for _ in range(n_samples)]
    else:
        d_s, v_s = [], []
    return ExpertProfile.build(GRID, LAP, d_mean, v_mean, d_s, v_s)


# -- lookup ---------------------------------------------------------------------


def test_lookup_at_grid_point():
    p = Profile(GRID, np.arange(len(GRID), dtype=float), LAP)
    assert p.lookup(25.0) == 5.0


def test_lookup_linear_midpoint():
    p = Profile(np.array([0.0, 10.0]), np.array([2.0, 4.0]), 20.0)
    assert p.lookup(5.0) == pytest.approx(3.0)


def test_lookup_modular_wrap():
    p = Profile(GRID, np.sin(GRID / 40.0), LAP)
    assert p.lookup(LAP + 10.0) == pytest.approx(p.lookup(10.0))
    assert p.lookup(-5.0) == pytest.approx(p.lookup(LAP - 5.0))


def test_lookup_wraps_between_last_node_and_lap_end():
    p = Profile(np.array([0.0, 5.0]), np.array([1.0, 3.0]), 10.0)
    # between sigma=5 (value 3) and sigma=10 == 0 (value 1)
    assert p.lookup(7.5) == pytest.approx(2.0)


# -- deterministic reward -----------------------------------------------------------


def test_max_reward_equals_expert_speed():
    prof = _profile()
    sigma = 123.0
    v_h = float(prof.v_mean.lookup(sigma))
    d_h = float(prof.d_mean.lookup(sigma))
    r = deterministic_reward(sigma, v_h, d_h, (0.2, 0.1), (0.2, 0.1), False,
                             prof, RewardConfig())
    assert r == pytest.approx(v_h)


def test_termination_penalty_dominates():
    prof = _profile()
    r = deterministic_reward(50.0, 80.0, 3.0, (0.0, 0.0), (0.0, 0.0), True,
                             prof, RewardConfig())
    assert r == -100.0


def test_composite_hand_evaluation():
    # V_h=80, V_a=90, D_h=3, D_a=2, |dpsi|=0.1, |dtau|=0.05
    # -> 80 - 10 - 20*1 - 100*0.1 - 10*0.05 = 39.5
    grid = np.array([0.0, 10.0])
    prof = ExpertProfile.build(grid, 20.0, [3.0, 3.0], [80.0, 80.0])
    r = deterministic_reward(5.0, 90.0, 2.0, (0.1, 0.05), (0.0, 0.0), False,
                             prof, RewardConfig())
    assert r == pytest.approx(39.5, abs=1e-12)


def test_reward_rejects_nonfinite():
    prof = _profile()
    with pytest.raises(ValueError):
        deterministic_reward(math.nan, 80.0, 3.0, (0, 0), (0, 0), False,
                             prof, RewardConfig())


def test_reward_upper_bound_property():
    prof = _profile()
    rng = np.random.default_rng(1)
    v_max = 80.0 + 10.0
    for _ in range(200):
        r = deterministic_reward(rng.uniform(0, 2 * LAP), rng.uniform(0, 100),
                                 rng.uniform(-6, 6),
                                 tuple(rng.uniform(-1, 1, 2)),
                                 tuple(rng.uniform(-1, 1, 2)), False,
                                 prof, RewardConfig())
        assert r <= v_max + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 100), st.floats(-6, 6))
def test_termination_overrides_everything(v, d):
    prof = _profile()
    r = deterministic_reward(10.0, v, d, (1.0, -1.0), (-1.0, 1.0), True,
                             prof, RewardConfig())
    assert r == -100.0


# -- stochastic reward ----------------------------------------------------------------


def test_stochastic_reduces_to_deterministic_when_sample_is_mean():
    d_mean = 3.0 + 0.5 * np.sin(GRID / 100.0)
    v_mean = 80.0 + 10.0 * np.cos(GRID / 150.0)
    prof = ExpertProfile.build(GRID, LAP, d_mean, v_mean, [d_mean], [v_mean])
    prof.active = 0
    cfg = RewardConfig(mode="stochastic")
    for sigma in (0.0, 77.0, 512.3):
        a = stochastic_reward(sigma, 66.0, 2.2, (0.1, 0.2), (0.0, 0.1), False, prof, cfg)
        b = deterministic_reward(sigma, 66.0, 2.2, (0.1, 0.2), (0.0, 0.1), False, prof, cfg)
        assert a == b


def test_speed_term_zero_at_twice_reference():
    prof = _profile()
    prof.active = 1
    sigma = 40.0
    v_j = float(prof.v_samples[1].lookup(sigma))
    d_j = float(prof.d_samples[1].lookup(sigma))
    r = stochastic_reward(sigma, 2.0 * v_j, d_j, (0.0, 0.0), (0.0, 0.0), False,
                          prof, RewardConfig(mode="stochastic"))
    assert r == pytest.approx(0.0, abs=1e-9)


def test_sample_bank_indexing():
    prof = _profile(n_samples=6)
    args = (200.0, 70.0, 2.5, (0.1, 0.0), (0.0, 0.0), False, prof,
            RewardConfig(mode="stochastic"))
    prof.active = 2
    r2 = stochastic_reward(*args)
    prof.active = 5
    r5 = stochastic_reward(*args)
    prof.active = 2
    r2_again = stochastic_reward(*args)
    assert r2 != r5
    assert r2 == r2_again


def test_empty_bank_errors():
    prof = _profile(with_samples=False)
    with pytest.raises(ValueError):
        stochastic_reward(0.0, 50.0, 3.0, (0, 0), (0, 0), False, prof,
                          RewardConfig(mode="stochastic"))
    with pytest.raises(ValueError):
        prof.draw_sample_index(np.random.default_rng(0))


def test_draw_sample_index_uniform():
    prof = _profile(n_samples=5)
    rng = np.random.default_rng(3)
    counts = np.zeros(5)
    for _ in range(5000):
        counts[prof.draw_sample_index(rng)] += 1
    assert counts.min() > 800  # roughly uniform


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(c1=-1.0)
    with pytest.raises(ValueError):
        RewardConfig(mode="other")
