"""Power allocation across beams: water-filling and sensing-aware allocation.

The sensing-aware problem minimises the summed angle+distance bound

    sum_k sum_m w_km / (p_k * lam_km + 1)

subject to a sum-rate floor, a full power budget and p >= 0. It is convex
and separable once the rate multiplier ``nu`` and the budget multiplier
``eta`` are fixed, so the solver nests three one-dimensional searches:
``nu`` outermost, ``eta`` for the budget, and a per-vehicle root in ``p_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .array_channel import sum_rate
from .pcrb import AllocationProblem

LN2 = math.log(2.0)


class InfeasibleAllocation(ValueError):
    """The rate floor exceeds what any allocation of the budget can reach."""

    def __init__(self, required: float, max_rate: float):
        super().__init__(
            f"rate threshold {required:.6g} exceeds the maximum achievable "
            f"sum-rate {max_rate:.6g} bits/s/Hz")
        self.required = required
        self.max_rate = max_rate


@dataclass
class PowerAllocation:
    p: np.ndarray
    objective: float
    achieved_rate: float
    kkt_residual: float = 0.0
    info: dict = field(default_factory=dict)


# --- water-filling -----------------------------------------------------------

def water_fill(rho, P_T: float, tol: float = 1e-10) -> PowerAllocation:
    """Rate-maximising allocation p_k = (gamma - 1/rho_k)^+ with sum P_T."""
    rho = np.asarray(rho, dtype=float)
    if not P_T > 0:
        raise ValueError(f"P_T must be positive, got {P_T}")
    if np.any(rho < 0):
        raise ValueError("channel gains must be nonnegative")
    with np.errstate(divide="ignore"):
        floor = np.where(rho > 0, 1.0 / rho, np.inf)
    if not np.any(np.isfinite(floor)):
        raise ValueError("at least one channel gain must be positive")
    lo = float(np.min(floor))
    hi = lo + P_T
    for _ in range(200):
        gamma = 0.5 * (lo + hi)
        total = np.sum(np.maximum(gamma - floor, 0.0))
        if abs(total - P_T) <= 0.1 * tol * P_T:
            break
        if total > P_T:
            hi = gamma
        else:
            lo = gamma
    # close out exactly on the active set found by bisection
    active = gamma > floor
    gamma_exact = (P_T + np.sum(floor[active])) / np.count_nonzero(active)
    if np.array_equal(gamma_exact > floor, active):
        gamma = gamma_exact
    p = np.maximum(gamma - floor, 0.0)
    return PowerAllocation(p, math.nan, sum_rate(p, rho), 0.0, {"gamma": gamma})


# --- sensing-aware allocation -----------------------------------------------

def _benefit(p, lam, w, rho, nu):
    """Marginal decrease of the Lagrangian per unit power, and its slope.

    D_k(p) = sum_m w lam/(p lam + 1)^2 + nu rho/((1 + rho p) ln 2) is
    positive, decreasing and convex in p.
    """
    den = p[:, None] * lam + 1.0
    wl = w * lam
    r = 1.0 + rho * p
    q = wl / (den * den)
    D = q.sum(axis=1) + nu * rho / (r * LN2)
    dD = -2.0 * (q * lam / den).sum(axis=1) - nu * rho * rho / (r * r * LN2)
    return D, dD


def _powers_given_eta(eta, lam, w, rho, nu, s1, x0=None):
    """Per-vehicle p_k solving D_k(p_k) = eta (zero where D_k(0) <= eta).

    Newton runs on D^(-1/2), which is exactly linear in p for a single
    term and close to linear otherwise; a bracket guards every step.
    """
    K = rho.shape[0]
    D0 = (w * lam).sum(axis=1) + nu * rho / LN2
    on = D0 > eta
    p = np.zeros(K)
    if not on.any():
        return p
    lam, w, rho, s1 = lam[on], w[on], rho[on], s1[on]
    # D(p) <= s1/p^2 + nu/(p ln2), so this p_hi satisfies D(p_hi) <= eta
    hi = np.maximum(np.sqrt(2.0 * s1 / eta), 2.0 * nu / (eta * LN2)) * 1.01 + 1e-300
    lo = np.zeros(hi.shape)
    x = np.zeros(hi.shape) if x0 is None else np.clip(x0[on], 0.0, hi)
    target = eta ** -0.5
    done = np.zeros(hi.shape, dtype=bool)
    for _ in range(100):
        D, dD = _benefit(x, lam, w, rho, nu)
        f = D ** -0.5 - target
        neg = f < 0
        lo = np.where(neg, x, lo)
        hi = np.where(neg, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x + 2.0 * f * D ** 1.5 / dD
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        x_new = np.where(bad, 0.5 * (lo + hi), step)
        done = (np.abs(f) <= 1e-14 * target) | (hi - lo <= 1e-15 * hi)
        x = np.where(done, x, x_new)
        if done.all():
            break
    p[on] = x
    return p


def _solve_fixed_nu(prob: AllocationProblem, nu: float, eta_hint=None):
    """Minimise objective - nu*rate over the budget simplex."""
    lam, w, rho, P_T = prob.lambdas, prob.weights, prob.rho, prob.P_T
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = np.sum(np.where(lam > 0, w / lam, 0.0), axis=1)
    D0, _ = _benefit(np.zeros(prob.K), lam, w, rho, nu)
    eta_hi = float(np.max(D0))
    if eta_hi <= 0:
        raise ValueError("degenerate allocation problem: no vehicle benefits from power")

    last = [None]

    def excess(log_eta):
        eta = math.exp(log_eta)
        p = _powers_given_eta(eta, lam, w, rho, nu, s1, last[0])
        last[0] = p
        on = p > 0
        slope = 0.0
        if np.any(on):
            # dp_k/d(log eta) = eta / D_k'(p_k) on the vehicles with power
            _, dD = _benefit(p[on], lam[on], w[on], rho[on], nu)
            slope = float(np.sum(eta / dD))
        return float(np.sum(p)) - P_T, slope

    # safeguarded Newton on log(eta); excess is decreasing and excess = -P_T
    # from log(eta_hi) up, so the root lies in (lo, hi) with lo unknown at first
    lo, hi = -math.inf, math.log(eta_hi)
    c = hi - 1.0 if eta_hint is None else min(math.log(eta_hint), hi - 1e-9)
    width = 1.0
    for _ in range(300):
        fc, sc = excess(c)
        if fc > 0:
            lo = c
        else:
            hi = c
        if abs(fc) <= 1e-13 * P_T or hi - lo <= 1e-15 * max(1.0, abs(c)):
            break
        step = c - fc / sc if sc < 0 else -math.inf
        if not math.isfinite(lo):
            # no lower bracket yet: move down by at most a doubling width
            step = max(step, hi - width)
            width *= 2.0
        elif not (lo < step < hi):
            step = 0.5 * (lo + hi)
        c = step
        if c < -1400:
            raise ValueError("could not bracket the budget multiplier")
    eta = math.exp(c)
    p = last[0]
    total = p.sum()
    if total > 0:
        p *= P_T / total
    return p, eta


def _rate_of(prob, p):
    return float(np.sum(np.log2(1.0 + prob.rho * p)))


def _rate_slope(prob, p, nu):
    """dR/d(log nu) along the fixed-nu solutions, by implicit differentiation.

    On the vehicles with power D_k(p_k) = eta and sum p = P_T; perturbing nu
    moves each p_k by (d eta - g_k d nu) / D_k' with g_k the rate gradient.
    """
    on = p > 0
    if not np.any(on):
        return 0.0
    _, dD = _benefit(p[on], prob.lambdas[on], prob.weights[on], prob.rho[on], nu)
    g = prob.rho[on] / ((1.0 + prob.rho[on] * p[on]) * LN2)
    inv = 1.0 / dD
    d_eta = np.sum(g * inv) / np.sum(inv)
    dp = (d_eta - g) * inv
    return float(nu * np.sum(g * dp))


def pcrb_allocate(problem: AllocationProblem, max_outer: int = 200,
                  warm_start: dict | None = None) -> PowerAllocation:
    """Minimise the summed angle+distance bound under rate and budget constraints.

    ``warm_start`` may carry the ``info`` of a previous solution of a
    similar problem; its multipliers seed the searches.

    Raises :class:`InfeasibleAllocation` when the rate floor is above the
    water-filling rate.
    """
    prob = problem
    wf = water_fill(prob.rho, prob.P_T)
    r_max = wf.achieved_rate
    scale = max(1.0, abs(r_max))
    if prob.R_t > r_max + 1e-12 * scale:
        raise InfeasibleAllocation(prob.R_t, r_max)

    def finish(p, nu, eta, how):
        p = np.maximum(p, 0.0)
        out = PowerAllocation(p, prob.objective(p), _rate_of(prob, p), 0.0,
                              {"nu": nu, "eta": eta, "r_max": r_max, "route": how})
        out.kkt_residual = verify_kkt(prob, p).residual
        return out

    if prob.R_t >= r_max - 1e-12 * scale:
        return finish(wf.p, math.inf, math.nan, "water_fill")

    obj_scale = float(np.max(np.sum(prob.weights * prob.lambdas, axis=1)))
    if obj_scale > 0:
        p, eta = _solve_fixed_nu(prob, 0.0)
        if _rate_of(prob, p) >= prob.R_t:
            return finish(p, 0.0, eta, "rate_inactive")
        # a rate weight too small to move the solution; its rate is that
        # of nu = 0, so it serves as the infeasible lower end below
        nu_floor = 1e-12 * eta * LN2 / float(np.max(prob.rho))
    else:
        nu_floor = 1.0
        p, eta = _solve_fixed_nu(prob, nu_floor)
        if _rate_of(prob, p) >= prob.R_t:
            return finish(p, nu_floor, eta, "rate_inactive")

    # rate(p(nu)) is nondecreasing in nu; search log(nu) by safeguarded
    # Newton, starting from the warm start or from a rate weight whose
    # marginal value matches the budget multiplier
    a, fa = math.log(nu_floor), _rate_of(prob, p) - prob.R_t
    hint = (warm_start or {}).get("nu", math.nan)
    eta_h = (warm_start or {}).get("eta") if math.isfinite(hint) else eta
    if not (math.isfinite(hint) and hint > nu_floor):
        g = prob.rho / ((1.0 + prob.rho * p) * LN2)
        hint = max(eta / float(np.max(g)), nu_floor * 2.0)
    c = math.log(hint)
    b, fb, p_hi, eta_hi = math.inf, math.inf, None, None
    width = math.log(4.0)
    c_max = math.log(1e15 * max(obj_scale, 1.0))
    for _ in range(max_outer):
        p_c, eta_c = _solve_fixed_nu(prob, math.exp(c), eta_h)
        eta_h = eta_c
        fc = _rate_of(prob, p_c) - prob.R_t
        if fc >= 0:
            b, fb, p_hi, eta_hi = c, fc, p_c, eta_c
        else:
            a, fa = c, fc
        if math.isfinite(b) and (fb <= 1e-12 * scale or b - a <= 1e-10):
            break
        if -1e-10 * scale <= fc < 0:
            # converged from below: the floor is missed by rounding only
            b, fb, p_hi, eta_hi = c, fc, p_c, eta_c
            break
        slope = _rate_slope(prob, p_c, math.exp(c))
        step = c - fc / slope if slope > 0 else math.nan
        if fc < 0 and math.isfinite(step):
            # overshoot a little so the iterates end on the feasible side
            step = c + (step - c) * (1.0 + 1e-3)
        if not math.isfinite(b):
            # no feasible point yet: climb by at most a growing width
            step = c + width if not math.isfinite(step) else min(max(step, c), c + width)
            width *= 2.0
            if step > c_max:
                return finish(wf.p, math.inf, math.nan, "water_fill")
        elif not (a < step < b):
            step = 0.5 * (a + b)
        c = step
    if p_hi is None:
        return finish(wf.p, math.inf, math.nan, "water_fill")
    return finish(p_hi, math.exp(b), eta_hi, "rate_active")


# --- optimality certificate ---------------------------------------------------

@dataclass
class KKTReport:
    residual: float
    stationarity: float
    dual_feasibility: float
    complementarity: float
    primal: float
    nu: float
    eta: float


def verify_kkt(problem: AllocationProblem, p, active_tol: float = 1e-9) -> KKTReport:
    """Fit multipliers to ``p`` and report scaled KKT violations.

    Stationarity for each vehicle reads
    ``df/dp_k - nu dR/dp_k + eta - mu_k = 0`` with ``nu, mu >= 0``.
    Multipliers are fitted by least squares on the vehicles with positive
    power; all residuals are divided by the largest gradient magnitude so
    the report does not depend on the units of the objective.
    """
    prob = problem
    p = np.asarray(p, dtype=float)
    den = p[:, None] * prob.lambdas + 1.0
    df = -np.sum(prob.weights * prob.lambdas / den**2, axis=1)
    dr = prob.rho / ((1.0 + prob.rho * p) * LN2)
    rate = _rate_of(prob, p)
    rscale = max(1.0, abs(prob.R_t))
    free = p > active_tol * prob.P_T
    tight = rate - prob.R_t <= 1e-9 * rscale

    def violations(nu, eta):
        g = df - nu * dr + eta
        stat = np.max(np.abs(g[free])) if np.any(free) else 0.0
        dual = np.max(np.maximum(-g[~free], 0.0)) if np.any(~free) else 0.0
        return stat, dual

    if not np.any(free):
        nu, eta = 0.0, float(np.max(-df))
    elif tight:
        A = np.column_stack([-dr[free], np.ones(np.count_nonzero(free))])
        nu, eta = np.linalg.lstsq(A, -df[free], rcond=None)[0]
        if np.count_nonzero(free) == 1 or nu < 0:
            # one free vehicle leaves a line of multipliers; search nu >= 0
            j = np.flatnonzero(free)[0] if np.count_nonzero(free) == 1 else None
            cands = [0.0, max(nu, 0.0)]
            if j is not None:
                for k in np.flatnonzero(~free):
                    if dr[j] != dr[k]:
                        cands.append(max((df[j] - df[k]) / (dr[j] - dr[k]), 0.0))
            best = None
            for c in cands:
                e = float(np.mean(-df[free] + c * dr[free]))
                s, dv = violations(c, e)
                if best is None or max(s, dv) < best[0]:
                    best = (max(s, dv), c, e)
            nu, eta = best[1], best[2]
    else:
        nu, eta = 0.0, float(np.mean(-df[free]))

    stat, dual = violations(nu, eta)
    gscale = max(np.max(np.abs(df)), nu * np.max(dr), abs(eta), 1e-300)
    comp = nu * max(rate - prob.R_t, 0.0) * float(np.max(dr)) / gscale / rscale
    primal = max(max(prob.R_t - rate, 0.0) / rscale,
                 abs(p.sum() - prob.P_T) / prob.P_T,
                 max(-p.min(), 0.0) / prob.P_T)
    stat /= gscale
    dual /= gscale
    return KKTReport(max(stat, dual, comp, primal), stat, dual, comp, primal,
                     float(nu), float(eta))


def uniform_allocation(K: int, P_T: float) -> np.ndarray:
    return np.full(K, P_T / K)
