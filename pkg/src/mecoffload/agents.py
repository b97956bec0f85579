"""DQN (server selection + solver reward) and DDPG (full continuous action) offloading agents.

Decision code only ever sees :func:`features`, built from the delayed
observation. Current-slot gains enter through the reward path alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import NetworkConfig
from .env import MecEnv, Observation
from .nn import Adam, Mlp, ReplayBuffer, Transition, hard_update, load_params, save_params, soft_update
from .ratemodel import ContractError, ControlDecision, DelayReport, evaluate
from .solver import (P_O_MAX, SolverSettings, local_power_closed_form, mec_power_closed_form,
                     solve_assignment, solve_transmit_power)


def feature_dim(config: NetworkConfig) -> int:
    return config.M * config.K + config.K


def features(obs: Observation, config: NetworkConfig) -> np.ndarray:
    """[h_prev row-major over (m, k) / g0, C_now / C_mean]."""
    return np.concatenate([obs.h_prev.ravel() / config.g0, obs.C_now / config.C_mean])


# --- discrete joint action ------------------------------------------------------

def decode_assignment(index: int, M: int, K: int) -> np.ndarray:
    """Base-M digits of ``index``; user k takes digit k (least significant first)."""
    if not 0 <= index < M ** K:
        raise ContractError(f"action index {index} outside [0, {M ** K})")
    out = np.empty(K, dtype=int)
    for k in range(K):
        index, out[k] = divmod(index, M)
    return out


def encode_assignment(assignment, M: int) -> int:
    return int(sum(int(a) * M ** k for k, a in enumerate(assignment)))


# --- continuous action ------------------------------------------------------------

def action_dim(config: NetworkConfig) -> int:
    return config.K * (3 + config.M)


def project_action(raw, obs: Observation, config: NetworkConfig,
                   tol: float = 1e-9) -> ControlDecision:
    """Map a raw action in [0,1]^(K(3+M)) to a budget-feasible ControlDecision.

    Per-user layout is [alpha, u_l, u_o, u_c(1..M)]. The server is the argmax
    of u_c; the user energy goes u_l : u_o to local computing and transmission;
    each server's energy is divided among its users in proportion to their
    winning u_c. All powers are the budget-activating ones, with transmit power
    planned on the observed (delayed) gains.
    """
    M, K = config.M, config.K
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (action_dim(config),):
        raise ContractError(f"raw action must have length {action_dim(config)}")
    blocks = raw.reshape(K, 3 + M)
    alpha = np.clip(blocks[:, 0], 0.0, 1.0)
    u_l, u_o = blocks[:, 1], blocks[:, 2]
    u_c = blocks[:, 3:]
    assignment = np.argmax(u_c, axis=1)
    weights = u_c[np.arange(K), assignment]
    total = u_l + u_o
    local_frac = np.where(total > 0, u_l / np.where(total > 0, total, 1.0), 0.5)

    p_l = np.zeros(K)
    p_o = np.zeros(K)
    p_c = np.zeros((M, K))
    for k in range(K):
        C = obs.C_now[k]
        E_l = local_frac[k] * config.E_max_user
        E_o = config.E_max_user - E_l
        if alpha[k] > 0 and E_l > 0 and C > 0:
            # capping spends less than E_l, so the budget still holds
            with np.errstate(over="ignore"):
                p_l[k] = min(local_power_closed_form(alpha[k], C, E_l, config.kappa_u, config.D_k), P_O_MAX)
        if alpha[k] < 1 and C > 0:
            p_o[k] = solve_transmit_power(float(alpha[k]), float(C), float(obs.h_prev[assignment[k], k]),
                                          float(E_o), config.B, config.N0, tol)
    for m in range(M):
        members = np.flatnonzero(assignment == m)
        if members.size == 0:
            continue
        w = weights[members]
        shares = w / w.sum() if w.sum() > 0 else np.full(members.size, 1.0 / members.size)
        for k, share in zip(members, shares):
            C = obs.C_now[k]
            if alpha[k] < 1 and share > 0 and C > 0:
                p_c[m, k] = mec_power_closed_form(alpha[k], C, share * config.E_max_mec,
                                                  config.kappa_m, config.D_m)
    return ControlDecision(alpha=alpha, p_l=p_l, p_o=p_o, p_c=p_c, assignment=assignment)


def encode_decision_split(decision: ControlDecision, raw, config: NetworkConfig) -> np.ndarray:
    """Re-encode the split a projection realised (local fraction, MEC shares) as a raw action."""
    M, K = config.M, config.K
    blocks = np.asarray(raw, float).reshape(K, 3 + M)
    u_l, u_o = blocks[:, 1], blocks[:, 2]
    total = u_l + u_o
    frac = np.where(total > 0, u_l / np.where(total > 0, total, 1.0), 0.5)
    out = np.zeros((K, 3 + M))
    out[:, 0] = decision.alpha
    out[:, 1] = frac
    out[:, 2] = 1.0 - frac
    a = decision.assignment
    w = blocks[np.arange(K), 3 + a]
    for m in range(M):
        members = np.flatnonzero(a == m)
        if members.size:
            ws = w[members]
            out[members, 3 + m] = ws / ws.sum() if ws.sum() > 0 else 1.0 / members.size
    return out.ravel()


# --- DQN ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DqnAgentConfig:
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    gamma: float = 0.95
    target_sync: int = 200
    lr: float = 0.01
    batch_size: int = 64
    buffer_capacity: int = 50_000
    hidden: tuple[int, ...] = (64, 64)
    reward_scale: float | None = None  # defaults to 1/tau0

    def __post_init__(self):
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.target_sync < 1 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("target_sync, batch_size and buffer_capacity must be >= 1")
        if self.eps_decay_steps < 0:
            raise ValueError("eps_decay_steps must be >= 0")


def dqn_select_action(qnet: Mlp, feats, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the M^K joint assignments; ties go to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(qnet.out_dim))
    return int(np.argmax(qnet(feats)))


class DqnAgent:
    kind = "dqn"

    def train_slot(self, env: MecEnv) -> DelayReport:
        return dqn_train_slot(self, env)

    @property
    def exploration(self) -> float:
        return self.epsilon

    def __init__(self, config: NetworkConfig, agent_config: DqnAgentConfig = DqnAgentConfig(),
                 seed: int = 0, solver_settings: SolverSettings = SolverSettings()):
        self.net_config = config
        self.cfg = agent_config
        self.solver_settings = solver_settings
        self.rng = np.random.default_rng(seed)
        dims = [feature_dim(config), *agent_config.hidden, config.n_assignments]
        self.q = Mlp(dims, "identity", self.rng)
        self.q_target = self.q.copy()
        self.opt = Adam(self.q.params, lr=agent_config.lr)
        self.buffer = ReplayBuffer(agent_config.buffer_capacity, feature_dim(config), 1, int)
        self.steps = 0
        self.reward_scale = agent_config.reward_scale or 1.0 / config.tau0

    @property
    def epsilon(self) -> float:
        c = self.cfg
        if c.eps_decay_steps == 0:
            return c.eps_end
        frac = min(self.steps / c.eps_decay_steps, 1.0)
        return c.eps_start + frac * (c.eps_end - c.eps_start)

    def act(self, feats, greedy: bool = False) -> int:
        return dqn_select_action(self.q, feats, 0.0 if greedy else self.epsilon, self.rng)

    def learn(self, batch) -> float:
        """One gradient step on y = r + gamma * max_a Q'(s', a); returns the batch loss."""
        n = batch.s.shape[0]
        y = batch.r + self.cfg.gamma * self.q_target(batch.s2).max(axis=1)
        q, cache = self.q.forward(batch.s)
        idx = batch.a[:, 0]
        err = q[np.arange(n), idx] - y
        grad = np.zeros_like(q)
        grad[np.arange(n), idx] = 2.0 * err / n
        grads, _ = self.q.backward(cache, grad)
        self.opt.step(self.q.params, grads)
        return float(np.mean(err ** 2))

    def observe_transition(self, s, a: int, reward: float, s2) -> float | None:
        self.buffer.push(Transition(s, np.array([a]), reward * self.reward_scale, s2))
        self.steps += 1
        loss = None
        if len(self.buffer) >= self.cfg.batch_size:
            loss = self.learn(self.buffer.sample(self.cfg.batch_size, self.rng))
        if self.steps % self.cfg.target_sync == 0:
            hard_update(self.q_target, self.q)
        return loss

    def report(self, obs: Observation, gains_now, config: NetworkConfig) -> DelayReport:
        """Greedy assignment from delayed features; the server side solves on current gains."""
        assignment = decode_assignment(self.act(features(obs, config), greedy=True), config.M, config.K)
        return solve_assignment(assignment, gains_now, obs.C_now, config, self.solver_settings)[1]

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_params(self.q, d / "q.params")
        save_params(self.q_target, d / "q_target.params")

    def load(self, directory: str | Path) -> None:
        d = Path(directory)
        self.q = load_params(d / "q.params", self.q.layer_dims)
        self.q_target = load_params(d / "q_target.params", self.q.layer_dims)
        self.opt = Adam(self.q.params, lr=self.cfg.lr)


def dqn_train_slot(agent: DqnAgent, env: MecEnv) -> DelayReport:
    """One environment slot of DQN training; returns the slot's delay report."""
    obs = env.observe()
    s = features(obs, env.config)
    a = agent.act(s)
    assignment = decode_assignment(a, env.config.M, env.config.K)
    _, report = solve_assignment(assignment, env.current_gains(), obs.C_now, env.config,
                                 agent.solver_settings)
    s2 = features(env.advance(), env.config)
    agent.observe_transition(s, a, report.reward, s2)
    return report


def dqn_train_step(agent: DqnAgent, env: MecEnv) -> tuple[float, DqnAgent]:
    return dqn_train_slot(agent, env).reward, agent


# --- DDPG --------------------------------------------------------------------------

@dataclass(frozen=True)
class DdpgAgentConfig:
    gamma: float = 0.95
    tau: float = 0.005
    sigma_start: float = 0.2
    sigma_end: float = 0.02
    sigma_decay_steps: int = 30_000
    actor_lr: float = 0.001
    critic_lr: float = 0.001
    batch_size: int = 64
    buffer_capacity: int = 50_000
    hidden: tuple[int, ...] = (64, 64)
    reward_scale: float | None = None  # defaults to 1/tau0
    warmup_steps: int = 0  # uniform random actions and critic-only updates before this step
    actor_out_scale: float = 1.0  # shrinks the actor's final-layer init
    # per-dimension noise multipliers, one user block [a, u_l, u_o, u_c...] or the full action
    sigma_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.warmup_steps < 0 or self.actor_out_scale <= 0:
            raise ValueError("warmup_steps must be >= 0 and actor_out_scale > 0")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.sigma_start < 0 or self.sigma_end < 0:
            raise ValueError("sigma must be >= 0")
        if self.sigma_weights is not None and any(w < 0 for w in self.sigma_weights):
            raise ValueError("sigma_weights must be >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be >= 1")


def ddpg_select_action(actor: Mlp, feats, sigma, rng: np.random.Generator) -> np.ndarray:
    """Actor output plus zero-mean Gaussian noise, clamped to [0, 1].

    ``sigma`` is a scalar or a per-dimension array of noise scales.
    """
    a = actor(feats)
    sigma = np.asarray(sigma, float)
    if np.any(sigma > 0):
        a = a + sigma * rng.standard_normal(a.shape)
    return np.clip(a, 0.0, 1.0)


def noise_weights(weights, config: NetworkConfig) -> np.ndarray:
    """Expand per-user-block or full-length noise multipliers to the action dimension."""
    n = action_dim(config)
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, float)
    if w.size == 3 + config.M:
        return np.tile(w, config.K)
    if w.size == n:
        return w
    raise ContractError(f"sigma_weights needs {3 + config.M} or {n} entries, got {w.size}")


def actor_objective_grad(actor: Mlp, critic: Mlp, states: np.ndarray):
    """Mean Q(s, mu(s)) over the batch and its gradient w.r.t. the actor parameters."""
    n = states.shape[0]
    mu, a_cache = actor.forward(states)
    q, c_cache = critic.forward(np.hstack([states, mu]))
    _, grad_in = critic.backward(c_cache, np.full_like(q, 1.0 / n))
    dq_da = grad_in[:, states.shape[1]:]
    grads, _ = actor.backward(a_cache, dq_da)
    return float(q.mean()), grads


class DdpgAgent:
    kind = "ddpg"

    def train_slot(self, env: MecEnv) -> DelayReport:
        return ddpg_train_slot(self, env)

    @property
    def exploration(self) -> float:
        return self.sigma

    def __init__(self, config: NetworkConfig, agent_config: DdpgAgentConfig = DdpgAgentConfig(),
                 seed: int = 0):
        self.net_config = config
        self.cfg = agent_config
        self.rng = np.random.default_rng(seed)
        ds, da = feature_dim(config), action_dim(config)
        self.actor = Mlp([ds, *agent_config.hidden, da], "sigmoid", self.rng)
        self.actor.weights[-1] *= agent_config.actor_out_scale
        self.actor.biases[-1] *= agent_config.actor_out_scale
        self.critic = Mlp([ds + da, *agent_config.hidden, 1], "identity", self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, lr=agent_config.actor_lr)
        self.critic_opt = Adam(self.critic.params, lr=agent_config.critic_lr)
        self.buffer = ReplayBuffer(agent_config.buffer_capacity, ds, da, float)
        self.steps = 0
        self.reward_scale = agent_config.reward_scale or 1.0 / config.tau0
        self.noise_weights = noise_weights(agent_config.sigma_weights, config)

    @property
    def sigma(self) -> float:
        c = self.cfg
        if c.sigma_decay_steps == 0:
            return c.sigma_end
        frac = min(self.steps / c.sigma_decay_steps, 1.0)
        return c.sigma_start + frac * (c.sigma_end - c.sigma_start)

    def act(self, feats, greedy: bool = False) -> np.ndarray:
        if not greedy and self.steps < self.cfg.warmup_steps:
            return self.rng.random(self.actor.out_dim)
        return ddpg_select_action(self.actor, feats, 0.0 if greedy else self.sigma * self.noise_weights, self.rng)

    def learn(self, batch) -> tuple[float, float]:
        n = batch.s.shape[0]
        a2 = self.actor_target(batch.s2)
        y = batch.r + self.cfg.gamma * self.critic_target(np.hstack([batch.s2, a2]))[:, 0]
        q, cache = self.critic.forward(np.hstack([batch.s, batch.a]))
        err = q[:, 0] - y
        grads, _ = self.critic.backward(cache, (2.0 * err / n)[:, None])
        self.critic_opt.step(self.critic.params, grads)

        j = float("nan")
        if self.steps >= self.cfg.warmup_steps:
            j, actor_grads = actor_objective_grad(self.actor, self.critic, batch.s)
            # ascend J: Adam minimises, so feed the negated gradient
            self.actor_opt.step(self.actor.params, [-g for g in actor_grads])

        soft_update(self.actor_target, self.actor, self.cfg.tau)
        soft_update(self.critic_target, self.critic, self.cfg.tau)
        return float(np.mean(err ** 2)), j

    def observe_transition(self, s, raw_action, reward: float, s2):
        self.buffer.push(Transition(s, raw_action, reward * self.reward_scale, s2))
        self.steps += 1
        if len(self.buffer) >= self.cfg.batch_size:
            return self.learn(self.buffer.sample(self.cfg.batch_size, self.rng))
        return None

    def report(self, obs: Observation, gains_now, config: NetworkConfig) -> DelayReport:
        decision = project_action(self.act(features(obs, config), greedy=True), obs, config)
        return evaluate(decision, obs.C_now, gains_now, config)

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for role in ("actor", "actor_target", "critic", "critic_target"):
            save_params(getattr(self, role), d / f"{role}.params")

    def load(self, directory: str | Path) -> None:
        d = Path(directory)
        for role in ("actor", "actor_target", "critic", "critic_target"):
            ref = getattr(self, role)
            setattr(self, role, load_params(d / f"{role}.params", ref.layer_dims))
        self.actor_opt = Adam(self.actor.params, lr=self.cfg.actor_lr)
        self.critic_opt = Adam(self.critic.params, lr=self.cfg.critic_lr)


def ddpg_train_slot(agent: DdpgAgent, env: MecEnv) -> DelayReport:
    """One environment slot of DDPG training; returns the slot's delay report."""
    obs = env.observe()
    s = features(obs, env.config)
    raw = agent.act(s)
    decision = project_action(raw, obs, env.config)
    report = evaluate(decision, obs.C_now, env.current_gains(), env.config)
    s2 = features(env.advance(), env.config)
    agent.observe_transition(s, raw, report.reward, s2)
    return report


def ddpg_train_step(agent: DdpgAgent, env: MecEnv) -> tuple[float, DdpgAgent]:
    return ddpg_train_slot(agent, env).reward, agent
