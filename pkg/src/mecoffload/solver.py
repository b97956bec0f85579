"""Min-max delay resource allocation for a fixed server assignment.

For one user on one server the allocation alternates three subproblems at
a fixed split ``beta`` of the user's energy between local computing and
transmission:

* local CPU power from the active local-energy constraint,
* transmit power as the largest power whose transmit energy fits its share
  (bisection; the objective is decreasing in power),
* the split ratio alpha from the three-candidate rule (alpha=0, alpha=1, or
  the crossing of the local and offload delay curves),

with the MEC CPU power always taken from its active-budget closed form. A
golden-section search over ``beta`` wraps the alternation. Users sharing a
server are coupled through the equal-finish-time allocation of the server
budget (:func:`solve_shared_mec`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import NetworkConfig
from . import _kernels as kern
from .ratemodel import ContractError, ControlDecision, DelayReport, evaluate

P_O_MAX = 1e3
P_O_MIN = 1e-30
LN2 = math.log(2.0)


class DegenerateInputError(ValueError):
    """A closed form was asked for with no bits on the relevant side."""


class InfeasibleBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    bisection_tol: float = 1e-6
    max_alternations: int = 20
    split_tol: float = 1e-4
    oracle_grid_n: int = 200

    def __post_init__(self):
        for name in ("bisection_tol", "split_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        for name in ("max_alternations", "oracle_grid_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class UserInstance:
    """One user alone on one server: the single-user subproblem's constants."""
    C: float
    gain: float
    E_user: float
    E_mec: float
    B: float
    N0: float
    kappa_u: float
    kappa_m: float
    D_k: float
    D_m: float

    @classmethod
    def from_config(cls, config: NetworkConfig, C: float, gain: float,
                    E_mec: float | None = None) -> "UserInstance":
        return cls(C=float(C), gain=float(gain), E_user=config.E_max_user,
                   E_mec=config.E_max_mec if E_mec is None else float(E_mec),
                   B=config.B, N0=config.N0, kappa_u=config.kappa_u, kappa_m=config.kappa_m,
                   D_k=config.D_k, D_m=config.D_m)

    def packed(self) -> np.ndarray:
        return kern.pack(self.C, self.gain, self.E_user, self.E_mec, self.B, self.N0,
                         self.kappa_u, self.kappa_m, self.D_k, self.D_m)


@dataclass
class UserSolution:
    alpha: float
    p_l: float
    p_o: float
    p_c: float
    t_l: float
    t_o: float
    t_c: float

    @property
    def delay(self) -> float:
        return max(self.t_l, self.t_o + self.t_c)

    @classmethod
    def from_tuple(cls, t) -> "UserSolution":
        return cls(*(float(x) for x in t))


# --- closed forms -----------------------------------------------------------

def mec_power_closed_form(alpha, C, E_budget, kappa_m, D_m):
    """MEC CPU power that spends exactly ``E_budget`` on the offloaded bits."""
    if alpha >= 1.0:
        raise DegenerateInputError("alpha = 1 leaves no bits for the MEC server")
    return (E_budget / ((1.0 - alpha) * C * kappa_m ** (1.0 / 3.0) * D_m)) ** 1.5


def local_power_closed_form(alpha, C, E_residual, kappa_u, D_k):
    """Local CPU power that spends exactly ``E_residual`` on the local bits."""
    if alpha <= 0.0:
        raise DegenerateInputError("alpha = 0 leaves no bits for local computing")
    if E_residual <= 0.0:
        raise InfeasibleBudgetError(f"no residual user energy ({E_residual})")
    return (E_residual / (alpha * C * D_k * kappa_u ** (1.0 / 3.0))) ** 1.5


def transmit_energy(p_o, bits, gain, B, N0):
    """Energy p_o * bits / r_o(p_o) to push ``bits`` at power p_o."""
    if isinstance(p_o, np.ndarray) or isinstance(bits, np.ndarray):
        rate = B * np.log1p(p_o * gain / N0) / LN2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(rate > 0, bits * p_o / rate, np.where(bits > 0, np.inf, 0.0))
    rate = B * math.log1p(p_o * gain / N0) / LN2
    if rate <= 0.0:
        return math.inf if bits > 0 else 0.0
    return bits * p_o / rate


def solve_transmit_power(alpha, C, gain, E_budget, B, N0, tol=1e-9, p_max=P_O_MAX):
    """Largest p_o in [0, p_max] whose transmit energy fits ``E_budget``.

    Transmit energy is increasing in p_o and the transmit delay is decreasing,
    so the answer is the budget-activating power. Returns 0 when no power is
    feasible (the budget is below the minimum energy per offloaded bit) and
    ``p_max`` when even p_max fits. Array inputs are solved elementwise.
    """
    if any(isinstance(x, np.ndarray) for x in (alpha, C, gain, E_budget)):
        return _solve_transmit_power_array(alpha, C, gain, E_budget, B, N0, tol, p_max)
    return kern.transmit_power((1.0 - alpha) * C, gain, E_budget, B, N0, tol, p_max)


def _solve_transmit_power_array(alpha, C, gain, E_budget, B, N0, tol, p_max):
    alpha, C, gain, E_budget = np.broadcast_arrays(*(np.asarray(x, float) for x in (alpha, C, gain, E_budget)))
    bits = np.ascontiguousarray((1.0 - alpha) * C).ravel()
    out = kern.transmit_power_many(bits, np.ascontiguousarray(gain).ravel(),
                                   np.ascontiguousarray(E_budget).ravel(), float(B), float(N0), float(tol), float(p_max))
    return out.reshape(alpha.shape)


# --- split ratio ------------------------------------------------------------

def solve_alpha(a: float, f2: Callable[[float], float], tol: float = 1e-12,
                check_points: int = 5) -> float:
    """Minimise max(a*alpha, f2(alpha)) over alpha in [0, 1].

    ``f2`` must be non-increasing. The minimiser is one of alpha=0, alpha=1,
    or the crossing a*alpha = f2(alpha), found by bisection on the monotone
    difference. Exact ties resolve to the smaller alpha.
    """
    if a < 0:
        raise ContractError(f"local delay slope must be non-negative, got {a}")
    if math.isinf(a):
        return 0.0
    samples = [f2(i / (check_points - 1)) for i in range(check_points)]
    for x, y in zip(samples, samples[1:]):
        if y > x * (1.0 + 1e-12) + 1e-300:
            raise ContractError("f2 must be non-increasing in alpha")
    f0, f1_ = samples[0], samples[-1]
    candidates = [(0.0, f0)]
    if a * 0.0 < f0 and a > f1_:
        lo, hi = 0.0, 1.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if a * mid < f2(mid):
                lo = mid
            else:
                hi = mid
        cross = hi
        candidates.append((cross, max(a * cross, f2(cross))))
    candidates.append((1.0, max(a, f1_)))
    best_alpha, best_val = candidates[0]
    for alpha, val in candidates[1:]:
        if val < best_val:
            best_alpha, best_val = alpha, val
    return best_alpha


# --- single user ------------------------------------------------------------

def solution_at(inst: UserInstance, alpha: float, beta: float, settings: SolverSettings = SolverSettings(),
                cap: float = math.inf) -> UserSolution:
    """Budget-activating powers for a given (alpha, beta) with the resulting delays.

    ``beta`` is the share of the user energy given to local computing.
    """
    return UserSolution.from_tuple(kern.point(inst.packed(), float(alpha), float(beta),
                                              settings.bisection_tol, P_O_MAX, cap))


def alternate_fixed_split(inst: UserInstance, beta: float, settings: SolverSettings = SolverSettings(),
                          alpha0: float = 0.5, cap: float = math.inf) -> UserSolution:
    """Alternate local power, transmit power and alpha at a fixed energy split.

    Stops when alpha moves by less than ``bisection_tol``, reaches a corner,
    or after ``max_alternations`` rounds; returns the best iterate.
    """
    return UserSolution.from_tuple(kern.alternate(inst.packed(), float(beta), float(alpha0),
                                                  settings.bisection_tol, settings.max_alternations,
                                                  P_O_MAX, cap))


def solve_single_user_raw(inst: UserInstance, settings: SolverSettings = SolverSettings(),
                          cap: float = math.inf) -> UserSolution:
    return UserSolution.from_tuple(kern.single_user(inst.packed(), settings.bisection_tol,
                                                    settings.max_alternations, settings.split_tol,
                                                    P_O_MAX, cap))


def decision_from_solutions(solutions: Sequence[UserSolution], assignment, M: int) -> ControlDecision:
    K = len(solutions)
    assignment = np.asarray(assignment, dtype=int)
    p_c = np.zeros((M, K))
    for k, s in enumerate(solutions):
        p_c[assignment[k], k] = s.p_c
    return ControlDecision(
        alpha=np.array([s.alpha for s in solutions]),
        p_l=np.array([s.p_l for s in solutions]),
        p_o=np.array([s.p_o for s in solutions]),
        p_c=p_c,
        assignment=assignment.copy(),
    )


def solve_single_user(inst: UserInstance, settings: SolverSettings = SolverSettings(),
                      cap: float = math.inf) -> ControlDecision:
    """Single-user decision (M=1, K=1 layout)."""
    return decision_from_solutions([solve_single_user_raw(inst, settings, cap)], [0], 1)


# --- shared server ----------------------------------------------------------

def solve_shared_mec(t_o: Sequence[float], A: Sequence[float], E_max_mec: float,
                     rel_tol: float = 1e-14) -> np.ndarray:
    """Equal-finish-time split of one server's energy among its users.

    ``A[k] = (1 - alpha_k) * C_k * D_m * kappa_m^(1/3)``. Finds the common
    finish time T > max(t_o) with sum_k A_k^3 / (T - t_o_k)^2 = E_max_mec and
    returns p_c_k = (A_k / (T - t_o_k))^3.
    """
    t_o = np.asarray(t_o, float)
    A = np.asarray(A, float)
    if A.size == 0:
        return np.zeros(0)
    if (A <= 0).any():
        raise ContractError("solve_shared_mec needs every A_k > 0")
    top = float(t_o.max())
    gaps = top - t_o
    A3 = A ** 3

    def excess(d):  # energy used at T = top + d, minus the budget
        return float(np.sum(A3 / (d + gaps) ** 2)) - E_max_mec

    hi = math.sqrt(A3.sum() / E_max_mec)  # sum at d=hi is <= budget
    lo = hi
    while excess(lo) <= 0.0:
        lo *= 0.5
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return (A / (hi + gaps)) ** 3


def _mec_coeff(alpha, C, config: NetworkConfig):
    return (1.0 - alpha) * C * config.D_m * config.kappa_m ** (1.0 / 3.0)


def _solve_server(members, tasks, gains, config: NetworkConfig, settings: SolverSettings):
    """Alternate per-user solves with the shared-budget allocation on one server."""
    cap = config.R_cap
    n = len(members)
    shares = np.full(n, config.E_max_mec / n)
    best, best_delay = None, math.inf
    for _ in range(settings.max_alternations):
        sols = [solve_single_user_raw(UserInstance.from_config(config, tasks[k], gains[k], shares[i]),
                                      settings, cap) for i, k in enumerate(members)]
        off = [i for i, s in enumerate(sols) if s.alpha < 1.0]
        if off:
            A = [_mec_coeff(sols[i].alpha, tasks[members[i]], config) for i in off]
            p_c = solve_shared_mec([sols[i].t_o for i in off], A, config.E_max_mec)
            new_shares = np.zeros(n)
            for j, i in enumerate(off):
                s = sols[i]
                # A / p_c^(1/3) = t_c; the realised energy is p_c * t_c
                s.p_c = float(p_c[j])
                s.t_c = A[j] / p_c[j] ** (1.0 / 3.0)
                new_shares[i] = s.p_c * s.t_c
        else:
            new_shares = shares
        delay = max(s.delay for s in sols)
        improved = best_delay - delay
        if delay < best_delay:
            best, best_delay = sols, delay
        if improved < settings.bisection_tol * best_delay or not off:
            break
        # users not offloading hand their share to the rest
        shares = np.where(new_shares > 0, new_shares, 0.0)
        shares *= config.E_max_mec / shares.sum()
    return best


def solve_assignment(assignment, gains_now, tasks, config: NetworkConfig,
                     settings: SolverSettings = SolverSettings()) -> tuple[ControlDecision, DelayReport]:
    """Optimise (alpha, p_l, p_o, p_c) for every user under a fixed server assignment."""
    assignment = np.asarray(assignment, dtype=int)
    gains_now = np.asarray(gains_now, float)
    tasks = np.asarray(tasks, float)
    K = config.K
    if assignment.shape != (K,) or ((assignment < 0) | (assignment >= config.M)).any():
        raise ContractError(f"assignment must hold K={K} indices in [0, {config.M})")
    solutions: list[UserSolution | None] = [None] * K
    for m in range(config.M):
        members = [int(k) for k in np.flatnonzero(assignment == m)]
        if not members:
            continue
        if len(members) == 1:
            k = members[0]
            sols = [solve_single_user_raw(UserInstance.from_config(config, tasks[k], gains_now[m, k]),
                                          settings, config.R_cap)]
        else:
            sols = _solve_server(members, tasks, gains_now[m], config, settings)
        for k, s in zip(members, sols):
            solutions[k] = s
    decision = decision_from_solutions(solutions, assignment, config.M)
    return decision, evaluate(decision, tasks, gains_now, config)


# --- brute-force oracle -----------------------------------------------------

def brute_force_oracle(inst: UserInstance, grid_n: int = 200, tol: float = 1e-9,
                       alpha_values=None, cap: float = math.inf):
    """Exhaustive (alpha, beta) grid with budget-activating powers.

    Returns ``(UserSolution, delay)`` of the grid argmin. ``alpha_values``
    overrides the alpha grid (e.g. ``[1.0]`` for the pure-local case).
    """
    alphas = np.linspace(0.0, 1.0, grid_n) if alpha_values is None else np.asarray(alpha_values, float)
    betas = np.linspace(0.0, 1.0, grid_n)
    al, be = np.meshgrid(alphas, betas, indexing="ij")
    E_l = be * inst.E_user
    E_o = inst.E_user - E_l
    loc_bits = al * inst.C
    off_bits = (1.0 - al) * inst.C
    with np.errstate(divide="ignore", invalid="ignore"):
        t_l = np.where(loc_bits > 0,
                       np.where(E_l > 0, (loc_bits * inst.D_k) ** 1.5 * np.sqrt(inst.kappa_u / np.where(E_l > 0, E_l, 1.0)), cap),
                       0.0)
        p_o = solve_transmit_power(al, inst.C, np.full(al.shape, inst.gain), E_o, inst.B, inst.N0, tol)
        rate = inst.B * np.log1p(p_o * inst.gain / inst.N0) / LN2
        t_o = np.where(off_bits > 0, np.where(rate > 0, off_bits / np.where(rate > 0, rate, 1.0), cap), 0.0)
        t_c = (off_bits * inst.D_m) ** 1.5 * math.sqrt(inst.kappa_m / inst.E_mec)
    delay = np.maximum(t_l, t_o + t_c)
    i, j = np.unravel_index(np.argmin(delay), delay.shape)
    a, b = float(alphas[i]), float(betas[j])
    sol = solution_at(inst, a, b, SolverSettings(bisection_tol=tol), cap)
    return sol, float(delay[i, j])
