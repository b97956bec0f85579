"""Communication/computation rates, per-user delays, energies and the slot reward.

All functions are pure. Scalar inputs take a ``math`` fast path; numpy arrays
are handled elementwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig


class DomainError(ValueError):
    pass


class ContractError(ValueError):
    pass


def _is_array(*xs) -> bool:
    return any(isinstance(x, np.ndarray) for x in xs)


def offload_rate(p_o, gain, B: float, N0: float):
    """Uplink rate B*log2(1 + p_o*gain/N0) in bits/s."""
    if _is_array(p_o, gain):
        p_o, gain = np.asarray(p_o, float), np.asarray(gain, float)
        if (p_o < 0).any() or (gain < 0).any():
            raise DomainError("offload_rate needs p_o >= 0 and gain >= 0")
        return B * np.log1p(p_o * gain / N0) / math.log(2.0)
    if p_o < 0 or gain < 0 or B <= 0 or N0 <= 0:
        raise DomainError(f"offload_rate domain violated: p_o={p_o}, gain={gain}, B={B}, N0={N0}")
    return B * math.log1p(p_o * gain / N0) / math.log(2.0)


def _cpu_rate(p, kappa, D, label):
    if _is_array(p):
        p = np.asarray(p, float)
        if (p < 0).any():
            raise DomainError(f"{label} needs non-negative power")
        return np.cbrt(p / kappa) / D
    if p < 0:
        raise DomainError(f"{label} needs non-negative power, got {p}")
    return (p / kappa) ** (1.0 / 3.0) / D


def local_rate(p_l, kappa_u: float, D_k: float):
    """Local computation rate (p_l/kappa_u)^(1/3) / D_k in bits/s (DVFS)."""
    return _cpu_rate(p_l, kappa_u, D_k, "local_rate")


def mec_rate(p_c, kappa_m: float, D_m: float):
    """MEC computation rate (p_c/kappa_m)^(1/3) / D_m in bits/s."""
    return _cpu_rate(p_c, kappa_m, D_m, "mec_rate")


@dataclass
class ControlDecision:
    alpha: np.ndarray       # (K,) local split ratio
    p_l: np.ndarray         # (K,) local CPU power, W
    p_o: np.ndarray         # (K,) transmit power, W
    p_c: np.ndarray         # (M, K) MEC CPU power, W; nonzero only on the assigned row
    assignment: np.ndarray  # (K,) server index per user

    @property
    def K(self) -> int:
        return len(self.alpha)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "p_l": self.p_l.tolist(),
            "p_o": self.p_o.tolist(),
            "p_c": self.p_c.tolist(),
            "assignment": [int(a) for a in self.assignment],
        }


@dataclass
class DelayReport:
    t_l: np.ndarray
    t_o: np.ndarray
    t_c: np.ndarray
    t_k: np.ndarray
    slot_delay: float
    reward: float

    def to_dict(self) -> dict:
        return {
            "t_l": self.t_l.tolist(), "t_o": self.t_o.tolist(), "t_c": self.t_c.tolist(),
            "t_k": self.t_k.tolist(), "slot_delay": self.slot_delay, "reward": self.reward,
        }


def check_decision(decision: ControlDecision, M: int) -> None:
    K = decision.K
    a = np.asarray(decision.assignment)
    if decision.p_l.shape != (K,) or decision.p_o.shape != (K,) or a.shape != (K,):
        raise ContractError("per-user decision arrays must all have length K")
    if decision.p_c.shape != (M, K):
        raise ContractError(f"p_c must have shape {(M, K)}, got {decision.p_c.shape}")
    if ((a < 0) | (a >= M)).any():
        raise ContractError(f"assignment entries must lie in [0, {M})")
    if ((decision.alpha < 0) | (decision.alpha > 1)).any() or not np.isfinite(decision.alpha).all():
        raise ContractError("alpha must lie in [0, 1]")
    for name in ("p_l", "p_o", "p_c"):
        arr = getattr(decision, name)
        if (arr < 0).any() or not np.isfinite(arr).all():
            raise ContractError(f"{name} must be finite and non-negative")
    off_server = decision.p_c.copy()
    off_server[a, np.arange(K)] = 0.0
    if (off_server != 0).any():
        raise ContractError("p_c may be nonzero only on each user's assigned server")


def _delay(work: np.ndarray, rate: np.ndarray) -> np.ndarray:
    """work/rate with 0/0 -> 0 and positive work at zero rate -> inf."""
    out = np.zeros_like(work)
    busy = work > 0
    ok = busy & (rate > 0)
    out[ok] = work[ok] / rate[ok]
    out[busy & ~ok] = np.inf
    return out


def evaluate(decision: ControlDecision, tasks, gains_now, config: NetworkConfig) -> DelayReport:
    """Per-user delays under the current-slot gains ``gains_now`` (M x K)."""
    check_decision(decision, config.M)
    tasks = np.asarray(tasks, float)
    gains_now = np.asarray(gains_now, float)
    K = decision.K
    if tasks.shape != (K,) or gains_now.shape != (config.M, K):
        raise ContractError("tasks/gains shapes do not match the decision")
    users = np.arange(K)
    a = np.asarray(decision.assignment)
    cap = config.R_cap

    local_bits = decision.alpha * tasks
    off_bits = (1.0 - decision.alpha) * tasks
    r_l = local_rate(decision.p_l, config.kappa_u, config.D_k)
    r_o = offload_rate(decision.p_o, gains_now[a, users], config.B, config.N0)
    r_c = mec_rate(decision.p_c[a, users], config.kappa_m, config.D_m)

    t_l = _delay(local_bits, r_l)
    t_o = _delay(off_bits, r_o)
    t_c = _delay(off_bits, r_c)
    t_k = np.maximum(t_l, t_o + t_c)
    # infinite (zero-rate) terms are reported at the cap
    t_l, t_o, t_c, t_k = (np.where(np.isinf(x), cap, x) for x in (t_l, t_o, t_c, t_k))
    slot = float(t_k.max())
    return DelayReport(t_l=t_l, t_o=t_o, t_c=t_c, t_k=t_k, slot_delay=slot, reward=-min(slot, cap))


def energy_user(decision: ControlDecision, k: int, report: DelayReport) -> float:
    return float(decision.p_l[k] * report.t_l[k] + decision.p_o[k] * report.t_o[k])


def energy_mec(decision: ControlDecision, m: int, report: DelayReport) -> float:
    members = np.flatnonzero(np.asarray(decision.assignment) == m)
    return float(np.sum(decision.p_c[m, members] * report.t_c[members]))


def budget_violation(decision: ControlDecision, report: DelayReport, config: NetworkConfig) -> float:
    """Largest relative excess over any user/server energy budget (<= 0 means feasible)."""
    worst = -np.inf
    for k in range(decision.K):
        worst = max(worst, energy_user(decision, k, report) / config.E_max_user - 1.0)
    for m in range(config.M):
        worst = max(worst, energy_mec(decision, m, report) / config.E_max_mec - 1.0)
    return float(worst)
