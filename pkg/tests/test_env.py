import numpy as np
import pytest
from hypothesis import given, strategies as st

from mecoffload.config import ConfigError, NetworkConfig
from mecoffload.env import (MecEnv, advance, init_env, observe, sample_tasks, stationary_distribution,
                            step_channels, transition_matrix)


def test_transition_matrix_rows_and_adjacency():
    P = transition_matrix(8, 0.8)
    assert np.allclose(P.sum(axis=1), 1.0)
    assert np.allclose(np.diag(P), 0.8)
    assert P[0, 2] == 0.0
    assert np.count_nonzero(np.triu(P, 2)) == 0 and np.count_nonzero(np.tril(P, -2)) == 0


@given(st.integers(2, 12), st.floats(0.0, 0.99))
def test_stationary_is_fixed_point(L, rho):
    P = transition_matrix(L, rho)
    pi = stationary_distribution(P)
    assert np.allclose(pi @ P, pi, atol=1e-12)
    assert pi.sum() == pytest.approx(1.0)


def test_init_is_deterministic(cfg):
    a, b = init_env(cfg, 7), init_env(cfg, 7)
    assert np.array_equal(a.channels_now, b.channels_now)
    assert np.array_equal(a.channels_prev, b.channels_prev)
    assert np.array_equal(a.tasks, b.tasks)
    assert a.t == 0


def test_init_indices_in_range(cfg):
    s = init_env(cfg, 0)
    assert ((s.channels_now >= 0) & (s.channels_now < 8)).all()
    assert ((s.channels_prev >= 0) & (s.channels_prev < 8)).all()


def test_invalid_config_rejected():
    with pytest.raises(ConfigError, match="L"):
        NetworkConfig(L=1)


def test_step_shifts_channels(cfg):
    s = init_env(cfg, 3)
    now = s.channels_now.copy()
    s2 = step_channels(s, cfg)
    assert s2.t == 1
    assert np.array_equal(s2.channels_prev, now)
    assert np.array_equal(observe(s2, cfg).h_prev, np.asarray(cfg.gain_levels)[now])


def test_observation_has_no_leak(cfg):
    s = init_env(cfg, 4)
    obs = observe(s, cfg)
    before = obs.h_prev.copy()
    s.channels_now[...] = 0
    assert np.array_equal(obs.h_prev, before)
    assert (obs.h_prev > 0).all()


def test_observation_is_function_of_prev_and_tasks(cfg):
    env = MecEnv(cfg, 5)
    for _ in range(20):
        prev_now = env.state.channels_now.copy()
        obs = env.advance()
        assert np.array_equal(obs.h_prev, np.asarray(cfg.gain_levels)[prev_now])
        assert np.array_equal(obs.C_now, env.tasks)


def test_self_transition_frequency_high_rho():
    cfg = NetworkConfig(M=1, K=1, rho=0.97)
    s = init_env(cfg, 0)
    stay = 0
    n = 100_000
    for _ in range(n):
        s2 = step_channels(s, cfg)
        stay += int(s2.channels_now[0, 0] == s.channels_now[0, 0])
        s = s2
    assert abs(stay / n - 0.97) < 0.02


def test_long_run_histogram_matches_stationary():
    # 2x50 independent chains for 10^4 steps = 10^6 transitions
    cfg = NetworkConfig(M=2, K=50)
    s = init_env(cfg, 1)
    counts = np.zeros(cfg.L)
    for _ in range(10_000):
        s = step_channels(s, cfg)
        counts += np.bincount(s.channels_now.ravel(), minlength=cfg.L)
    emp = counts / counts.sum()
    pi = stationary_distribution(transition_matrix(cfg.L, cfg.rho))
    assert 0.5 * np.abs(emp - pi).sum() < 0.02


def test_sample_tasks_degenerate_spread(rng):
    cfg = NetworkConfig(C_spread=0.0)
    assert np.all(sample_tasks(cfg, rng) == cfg.C_mean)


def test_sample_tasks_mean_and_support(rng):
    cfg = NetworkConfig(K=100_000, C_spread=0.5)
    c = sample_tasks(cfg, rng)
    assert abs(c.mean() / cfg.C_mean - 1) < 0.01
    assert c.min() >= 0.5 * cfg.C_mean and c.max() <= 1.5 * cfg.C_mean


def test_advance_resamples_tasks(cfg):
    s = init_env(cfg, 9)
    s2 = advance(s, cfg)
    assert not np.array_equal(s.tasks, s2.tasks)


def test_env_reset_reproducible(cfg):
    env = MecEnv(cfg)
    o1 = env.reset(11)
    traj1 = [env.advance().h_prev.copy() for _ in range(5)]
    o2 = env.reset(11)
    traj2 = [env.advance().h_prev.copy() for _ in range(5)]
    assert np.array_equal(o1.h_prev, o2.h_prev)
    assert all(np.array_equal(a, b) for a, b in zip(traj1, traj2))
