"""Scalar hot loops of the single-user solver, jit-compiled when numba is present.

A user instance is packed as a float64 vector, see the ``I_*`` indices.
Kernels return plain tuples ``(alpha, p_l, p_o, p_c, t_l, t_o, t_c)``.
"""
import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - pure-python fallback
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

LN2 = math.log(2.0)
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
P_O_MIN = 1e-30
ALPHA_TOL = 1e-12

I_C, I_GAIN, I_EU, I_EM, I_B, I_N0, I_KU, I_KM, I_DK, I_DM = range(10)
N_FIELDS = 10


@njit(cache=True)
def _log_energy_excess(x, shift, c):
    return shift + x - math.log(math.log1p(c * math.exp(x)))


@njit(cache=True)
def transmit_power(bits, gain, E, B, N0, tol, p_max):
    if bits <= 0.0 or gain <= 0.0 or E <= 0.0:
        return 0.0
    c = gain / N0
    k = bits * LN2 / B
    if k * p_max / math.log1p(p_max * c) <= E:
        return p_max
    if k * P_O_MIN / math.log1p(P_O_MIN * c) > E:
        return 0.0
    # safeguarded Newton on log(energy / E), which is increasing in x = log p
    x_lo = math.log(P_O_MIN)
    x_hi = math.log(p_max)
    shift = math.log(k) - math.log(E)
    step_tol = math.log1p(tol)
    x = 0.5 * (x_lo + x_hi)
    for _ in range(400):
        g = _log_energy_excess(x, shift, c)
        if g <= 0.0:
            x_lo = x
        else:
            x_hi = x
        if x_hi - x_lo <= step_tol:
            break
        y = c * math.exp(x)
        dg = 1.0 - y / ((1.0 + y) * math.log1p(y))
        x_new = x - g / dg if dg > 0.0 else 0.5 * (x_lo + x_hi)
        if not (x_lo < x_new < x_hi):
            x_new = 0.5 * (x_lo + x_hi)
        if abs(x_new - x) <= 0.25 * step_tol:
            # root located to well within tol: take the largest feasible nearby point
            done = False
            for off in (0.25, 0.0, -0.25, -0.5, -0.75):
                cand = x_new + off * step_tol
                if x_lo < cand < x_hi and _log_energy_excess(cand, shift, c) <= 0.0:
                    x_lo = cand
                    done = True
                    break
            if done:
                break
            x_new = 0.5 * (x_lo + x_hi)
        x = x_new
    p = math.exp(x_lo)
    # guard against rounding: same expression as the public transmit energy
    while bits * p / (B * math.log1p(p * gain / N0) / LN2) > E:
        p *= 1.0 - tol
    return p


@njit(cache=True)
def transmit_power_many(bits, gain, E, B, N0, tol, p_max):
    out = np.empty(bits.size)
    for i in range(bits.size):
        out[i] = transmit_power(bits[i], gain[i], E[i], B, N0, tol, p_max)
    return out


@njit(cache=True)
def cpu_delay(bits, D, kappa, E, cap):
    if bits <= 0.0:
        return 0.0
    if E <= 0.0:
        return cap
    return (bits * D) ** 1.5 * math.sqrt(kappa / E)


@njit(cache=True)
def alpha_rule(slope, k_o, c_m):
    """Three-candidate minimiser of max(slope*x, k_o*(1-x) + c_m*(1-x)^1.5) on [0, 1]."""
    f0 = k_o + c_m
    best_a = 0.0
    best_v = f0
    if f0 > 0.0 and slope > 0.0:
        lo = 0.0
        hi = 1.0
        while hi - lo > ALPHA_TOL:
            mid = 0.5 * (lo + hi)
            u = 1.0 - mid
            if slope * mid < k_o * u + c_m * u ** 1.5:
                lo = mid
            else:
                hi = mid
        u = 1.0 - hi
        v = max(slope * hi, k_o * u + c_m * u ** 1.5)
        if v < best_v:
            best_a = hi
            best_v = v
    if slope < best_v:
        best_a = 1.0
    return best_a


@njit(cache=True)
def point(inst, alpha, beta, tol, p_max, cap):
    """Budget-activating powers and true delays at a given (alpha, beta)."""
    C = inst[I_C]
    E_l = beta * inst[I_EU]
    E_o = inst[I_EU] - E_l
    loc = alpha * C
    off = (1.0 - alpha) * C
    p_l = 0.0
    t_l = 0.0
    if loc > 0.0:
        if E_l > 0.0:
            p_l = (E_l / (loc * inst[I_DK] * inst[I_KU] ** (1.0 / 3.0))) ** 1.5
        t_l = cpu_delay(loc, inst[I_DK], inst[I_KU], E_l, cap)
    p_o = 0.0
    p_c = 0.0
    t_o = 0.0
    t_c = 0.0
    if off > 0.0:
        p_o = transmit_power(off, inst[I_GAIN], E_o, inst[I_B], inst[I_N0], tol, p_max)
        p_c = (inst[I_EM] / (off * inst[I_KM] ** (1.0 / 3.0) * inst[I_DM])) ** 1.5
        if p_o > 0.0:
            t_o = off * LN2 / (inst[I_B] * math.log1p(p_o * inst[I_GAIN] / inst[I_N0]))
        else:
            t_o = cap
        t_c = cpu_delay(off, inst[I_DM], inst[I_KM], inst[I_EM], cap)
    return alpha, p_l, p_o, p_c, t_l, t_o, t_c


@njit(cache=True)
def delay_of(sol):
    return max(sol[4], sol[5] + sol[6])


@njit(cache=True)
def alternate(inst, beta, alpha0, tol, max_alt, p_max, cap):
    """Alternate local power, transmit power and alpha at a fixed energy split."""
    C = inst[I_C]
    c_m = (C * inst[I_DM]) ** 1.5 * math.sqrt(inst[I_KM] / inst[I_EM])
    alpha = min(max(alpha0, 1e-6), 1.0 - 1e-6)
    sol = point(inst, alpha, beta, tol, p_max, cap)
    best = sol
    best_d = delay_of(sol)
    for _ in range(max_alt):
        p_l = sol[1]
        p_o = sol[2]
        if p_o <= 0.0 or p_l <= 0.0:
            break
        r_l = (p_l / inst[I_KU]) ** (1.0 / 3.0) / inst[I_DK]
        r_o = inst[I_B] * math.log1p(p_o * inst[I_GAIN] / inst[I_N0]) / LN2
        new_alpha = alpha_rule(C / r_l, C / r_o, c_m)
        converged = abs(new_alpha - alpha) <= tol
        alpha = new_alpha
        sol = point(inst, alpha, beta, tol, p_max, cap)
        d = delay_of(sol)
        if d < best_d:
            best = sol
            best_d = d
        if converged or alpha <= 0.0 or alpha >= 1.0:
            break
    return best


@njit(cache=True)
def single_user(inst, tol, max_alt, split_tol, p_max, cap):
    """Best of the two corners and a golden-section search over the energy split."""
    best = point(inst, 1.0, 1.0, tol, p_max, cap)
    off = point(inst, 0.0, 0.0, tol, p_max, cap)
    if delay_of(off) < delay_of(best):
        best = off
    if inst[I_GAIN] <= 0.0:
        return best
    warm = 0.5
    a = 0.0
    b = 1.0
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    sc = alternate(inst, c, warm, tol, max_alt, p_max, cap)
    if 0.0 < sc[0] < 1.0:
        warm = sc[0]
    sd = alternate(inst, d, warm, tol, max_alt, p_max, cap)
    if 0.0 < sd[0] < 1.0:
        warm = sd[0]
    fc = delay_of(sc)
    fd = delay_of(sd)
    if fc < delay_of(best):
        best = sc
    if fd < delay_of(best):
        best = sd
    while b - a > split_tol:
        if fc <= fd:
            b = d
            d = c
            fd = fc
            c = b - INV_PHI * (b - a)
            s = alternate(inst, c, warm, tol, max_alt, p_max, cap)
            fc = delay_of(s)
        else:
            a = c
            c = d
            fc = fd
            d = a + INV_PHI * (b - a)
            s = alternate(inst, d, warm, tol, max_alt, p_max, cap)
            fd = delay_of(s)
        if 0.0 < s[0] < 1.0:
            warm = s[0]
        if delay_of(s) < delay_of(best):
            best = s
    return best


def pack(C, gain, E_user, E_mec, B, N0, kappa_u, kappa_m, D_k, D_m) -> np.ndarray:
    return np.array([C, gain, E_user, E_mec, B, N0, kappa_u, kappa_m, D_k, D_m], dtype=np.float64)
