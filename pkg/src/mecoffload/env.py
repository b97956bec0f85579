"""Time-slotted MEC environment with finite-state Markov fading and delayed CSI.

The agent-facing view at slot t is ``Observation(h_prev=h(t-1), C_now=C(t))``.
The current-slot gains h(t) are only reachable through :func:`current_gains`,
which the reward path uses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig


def transition_matrix(L: int, rho: float) -> np.ndarray:
    """Birth-death transition matrix with reflecting edges.

    Interior states stay with probability rho and move to either neighbour
    with probability (1 - rho)/2. Edge states stay with probability rho and
    move inward with probability 1 - rho, so every state self-transitions
    with exactly rho.
    """
    P = np.zeros((L, L))
    for i in range(L):
        P[i, i] = rho
        if i == 0:
            P[0, 1] = 1.0 - rho
        elif i == L - 1:
            P[i, i - 1] = 1.0 - rho
        else:
            P[i, i - 1] = P[i, i + 1] = (1.0 - rho) / 2.0
    return P


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Stationary law of a birth-death chain via detailed balance."""
    L = P.shape[0]
    pi = np.ones(L)
    for i in range(L - 1):
        pi[i + 1] = pi[i] * P[i, i + 1] / P[i + 1, i]
    return pi / pi.sum()


@dataclass
class EnvState:
    t: int
    channels_now: np.ndarray   # (M, K) int state indices at slot t
    channels_prev: np.ndarray  # (M, K) int state indices at slot t-1
    tasks: np.ndarray          # (K,) task sizes in bits at slot t
    rng: np.random.Generator


@dataclass(frozen=True)
class Observation:
    h_prev: np.ndarray  # (M, K) power gains from slot t-1
    C_now: np.ndarray   # (K,) task sizes in bits


def _markov_step(states: np.ndarray, cdf: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(states.shape)
    nxt = (u[..., None] >= cdf[states]).sum(axis=-1)
    return np.minimum(nxt, cdf.shape[0] - 1)


def sample_tasks(config: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
    """iid uniform task sizes on C_mean * [1 - C_spread, 1 + C_spread]."""
    u = rng.random(config.K)
    return config.C_mean * (1.0 + config.C_spread * (2.0 * u - 1.0))


def init_env(config: NetworkConfig, seed: int) -> EnvState:
    config.validate()
    rng = np.random.default_rng(seed)
    P = transition_matrix(config.L, config.rho)
    pi = stationary_distribution(P)
    prev = rng.choice(config.L, size=(config.M, config.K), p=pi)
    now = _markov_step(prev, np.cumsum(P, axis=1), rng)
    return EnvState(t=0, channels_now=now, channels_prev=prev,
                    tasks=sample_tasks(config, rng), rng=rng)


def step_channels(state: EnvState, config: NetworkConfig) -> EnvState:
    """Advance every (m, k) channel one Markov step; tasks are left untouched."""
    cdf = np.cumsum(transition_matrix(config.L, config.rho), axis=1)
    now = _markov_step(state.channels_now, cdf, state.rng)
    return EnvState(t=state.t + 1, channels_now=now, channels_prev=state.channels_now.copy(),
                    tasks=state.tasks, rng=state.rng)


def advance(state: EnvState, config: NetworkConfig) -> EnvState:
    """One full slot: channel transition followed by fresh task arrivals."""
    nxt = step_channels(state, config)
    nxt.tasks = sample_tasks(config, nxt.rng)
    return nxt


def observe(state: EnvState, config: NetworkConfig) -> Observation:
    gains = np.asarray(config.gain_levels)
    return Observation(h_prev=gains[state.channels_prev], C_now=np.array(state.tasks, dtype=float))


def current_gains(state: EnvState, config: NetworkConfig) -> np.ndarray:
    """Slot-t gains h(t). Reward computation only; never fed to a policy."""
    return np.asarray(config.gain_levels)[state.channels_now]


class MecEnv:
    """Stateful wrapper bundling a config with a mutable EnvState."""

    def __init__(self, config: NetworkConfig, seed: int = 0):
        self.config = config
        self.state = init_env(config, seed)

    def reset(self, seed: int) -> Observation:
        self.state = init_env(self.config, seed)
        return self.observe()

    def observe(self) -> Observation:
        return observe(self.state, self.config)

    def current_gains(self) -> np.ndarray:
        return current_gains(self.state, self.config)

    @property
    def tasks(self) -> np.ndarray:
        return self.state.tasks

    def advance(self) -> Observation:
        self.state = advance(self.state, self.config)
        return self.observe()
