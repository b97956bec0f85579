"""Random, local-only and MEC-only comparison policies.

Each baseline builds a raw action in the DDPG layout and goes through
:func:`project_action`, so all baselines get the same full-budget power
machinery and decide from the delayed observation only.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .agents import action_dim, project_action
from .config import NetworkConfig
from .env import Observation
from .ratemodel import ControlDecision, DelayReport, evaluate


class BaselineKind(str, Enum):
    RANDOM = "random"
    LOCAL_ONLY = "local_only"
    MEC_ONLY = "mec_only"


def _raw(alpha, local_frac, server, config: NetworkConfig) -> np.ndarray:
    M, K = config.M, config.K
    blocks = np.zeros((K, 3 + M))
    blocks[:, 0] = alpha
    blocks[:, 1] = local_frac
    blocks[:, 2] = 1.0 - np.asarray(local_frac)
    blocks[np.arange(K), 3 + np.asarray(server)] = 1.0
    return blocks.ravel()


def baseline_decide(kind, obs: Observation, config: NetworkConfig,
                    rng: np.random.Generator | None = None) -> ControlDecision:
    kind = BaselineKind(kind)
    K, M = config.K, config.M
    if kind is BaselineKind.RANDOM:
        if rng is None:
            raise ValueError("the random baseline needs an rng")
        server = rng.integers(0, M, size=K)
        alpha = rng.random(K)
        frac = rng.random(K)
        raw = _raw(alpha, frac, server, config)
    elif kind is BaselineKind.LOCAL_ONLY:
        raw = _raw(np.ones(K), np.ones(K), np.zeros(K, dtype=int), config)
    else:
        # equal weights on a shared server give the equal budget split
        raw = _raw(np.zeros(K), np.zeros(K), np.argmax(obs.h_prev, axis=0), config)
    assert raw.shape == (action_dim(config),)
    return project_action(raw, obs, config)


class BaselinePolicy:
    """Harness-facing wrapper: decide from the observation, score on current gains."""

    def __init__(self, kind, seed: int = 0):
        self.kind = BaselineKind(kind).value
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def report(self, obs: Observation, gains_now, config: NetworkConfig) -> DelayReport:
        decision = baseline_decide(self.kind, obs, config, self.rng)
        return evaluate(decision, obs.C_now, gains_now, config)
