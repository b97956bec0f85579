"""Property suites run by ``mecoffload check``: oracle, residuals, gradients, feasibility, channel."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .agents import action_dim, project_action
from .config import NetworkConfig
from .env import MecEnv, stationary_distribution, transition_matrix
from .nn import Mlp
from .ratemodel import budget_violation, evaluate
from .solver import (SolverSettings, UserInstance, brute_force_oracle, solve_assignment,
                     solve_shared_mec, solve_single_user_raw)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def random_user_instance(config: NetworkConfig, rng: np.random.Generator) -> UserInstance:
    """Task size uniform over the configured spread, gain log-uniform over the level range."""
    lo, hi = config.C_mean * (1 - config.C_spread), config.C_mean * (1 + config.C_spread)
    g_lo, g_hi = config.gain_levels[0], config.gain_levels[-1]
    gain = float(np.exp(rng.uniform(np.log(g_lo), np.log(g_hi))))
    return UserInstance.from_config(config, float(rng.uniform(lo, hi)), gain)


def solver_vs_oracle(config: NetworkConfig, n: int = 200, seed: int = 0, ratio: float = 1.02,
                     grid_n: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    ok = 0
    worst = 0.0
    for _ in range(n):
        inst = random_user_instance(config, rng)
        d = solve_single_user_raw(inst, SolverSettings(), config.R_cap).delay
        _, d_ref = brute_force_oracle(inst, grid_n, cap=config.R_cap)
        ok += d <= ratio * d_ref
        worst = max(worst, d / d_ref)
    elapsed = time.perf_counter() - start
    frac = ok / n
    return CheckResult("solver_vs_oracle", frac >= 0.99,
                       f"{ok}/{n} within {ratio}x of oracle, worst ratio {worst:.4f}, {elapsed:.1f}s")


def shared_server_residuals(n: int = 200, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_t = worst_e = 0.0
    for _ in range(n):
        k = int(rng.integers(2, 6))
        t_o = rng.uniform(1e-5, 5e-4, k)
        A = rng.uniform(0.1, 2.0, k) * 1e-3
        E = float(rng.uniform(1e-3, 1e-1))
        p_c = solve_shared_mec(t_o, A, E)
        t_c = A / np.cbrt(p_c)
        finish = t_o + t_c
        worst_t = max(worst_t, float((finish.max() - finish.min()) / finish.max()))
        worst_e = max(worst_e, abs(float(np.sum(p_c * t_c)) / E - 1.0))
    passed = worst_t < tol and worst_e < tol
    return CheckResult("shared_server_residuals", passed,
                       f"max finish-time residual {worst_t:.2e}, max energy residual {worst_e:.2e}")


def gradient_check(n: int = 50, seed: int = 0, tol: float = 1e-4, h: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        dims = [int(d) for d in rng.integers(1, 5, size=int(rng.integers(2, 4)))]
        net = Mlp(dims, rng.choice(["identity", "sigmoid"]), rng)
        x = rng.standard_normal((3, dims[0]))
        w = rng.standard_normal((3, dims[-1]))
        out, cache = net.forward(x)
        grads, _ = net.backward(cache, w)
        for p, g in zip(net.params, grads):
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + h
                fp = float(np.sum(w * net(x)))
                p[idx] = orig - h
                fm = float(np.sum(w * net(x)))
                p[idx] = orig
                fd = (fp - fm) / (2 * h)
                denom = max(abs(fd), abs(g[idx]), 1e-6)
                worst = max(worst, abs(fd - g[idx]) / denom)
    return CheckResult("gradient_check", worst < tol, f"max relative error {worst:.2e} over {n} nets")


def energy_feasibility(config: NetworkConfig, n: int = 500, seed: int = 0, tol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(seed)
    env = MecEnv(config, seed)
    worst_proj = worst_solver = -np.inf
    for i in range(n):
        obs = env.observe()
        raw = rng.random(action_dim(config))
        decision = project_action(raw, obs, config)
        # projection plans on the observed gains, so feasibility is judged there
        rep = evaluate(decision, obs.C_now, obs.h_prev, config)
        worst_proj = max(worst_proj, budget_violation(decision, rep, config))
        assignment = rng.integers(0, config.M, config.K)
        dec_s, rep_s = solve_assignment(assignment, env.current_gains(), obs.C_now, config)
        worst_solver = max(worst_solver, budget_violation(dec_s, rep_s, config))
        env.advance()
    passed = worst_proj <= tol and worst_solver <= tol
    return CheckResult("energy_feasibility", passed,
                       f"max relative budget excess: projection {worst_proj:.2e}, solver {worst_solver:.2e}")


def channel_chain(config: NetworkConfig, steps: int = 100_000, seed: int = 0, tol: float = 0.02) -> CheckResult:
    P = transition_matrix(config.L, config.rho)
    pi = stationary_distribution(P)
    one = config.replace(M=1, K=1)
    env = MecEnv(one, seed)
    states = np.empty(steps + 1, dtype=int)
    levels = np.asarray(one.gain_levels)
    states[0] = int(np.searchsorted(levels, env.current_gains()[0, 0]))
    for t in range(steps):
        env.advance()
        states[t + 1] = int(np.searchsorted(levels, env.current_gains()[0, 0]))
    counts = np.zeros((config.L, config.L))
    np.add.at(counts, (states[:-1], states[1:]), 1)
    emp = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1)
    tv = 0.5 * np.abs(emp - P).sum(axis=1).max()
    hist = np.bincount(states, minlength=config.L) / states.size
    dev = float(np.abs(hist - pi).max())
    return CheckResult("channel_chain", tv < tol and dev < tol,
                       f"max row total variation {tv:.4f}, max stationary deviation {dev:.4f}")


def run_all(config: NetworkConfig, quick: bool = False, seed: int = 0) -> list[CheckResult]:
    scale = 0.1 if quick else 1.0
    return [
        solver_vs_oracle(config, max(10, int(200 * scale)), seed),
        shared_server_residuals(max(10, int(200 * scale)), seed),
        gradient_check(max(5, int(50 * scale)), seed),
        energy_feasibility(config, max(20, int(500 * scale)), seed),
        channel_chain(config, max(10_000, int(100_000 * scale)), seed),
    ]
