"""Vehicle motion: exact geometric recursion and its linearised approximation.

The road runs parallel to the RSU array at a fixed lateral offset. The
vehicle moves in the direction that makes the angle grow: it approaches
from a small angle, passes broadside (90 deg) and leaves towards 180 deg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class VehicleTruth:
    theta: float
    d: float
    v: float
    beta: complex
    rcs: complex

    @classmethod
    def from_beta(cls, theta: float, d: float, v: float, beta: complex):
        """Build a state whose RCS is consistent with ``beta`` at ``d``."""
        return cls(theta, d, v, complex(beta), complex(beta) * 2.0 * d)

    def as_vector(self) -> np.ndarray:
        return np.array([self.theta, self.d, self.v,
                         self.beta.real, self.beta.imag])


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    n_slots: int
    initial: VehicleTruth
    process_noise_on: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")


def evolve_exact(state: VehicleTruth, dt: float) -> VehicleTruth:
    """Advance one slot using the law of cosines and the law of sines."""
    step = state.v * dt
    if not state.d > 0 or state.v < 0:
        raise ValueError(f"invalid state: d={state.d}, v={state.v}")
    if step >= state.d:
        raise ValueError(
            f"vehicle would pass the RSU within one slot (v*dt={step} >= d={state.d})")
    if step == 0:
        return state
    d_new = math.sqrt(state.d**2 + step**2 - 2.0 * state.d * step * math.cos(state.theta))
    s = min(1.0, step * math.sin(state.theta) / d_new)
    theta_new = state.theta + math.asin(s)
    return replace(state, theta=theta_new, d=d_new,
                   beta=state.rcs / (2.0 * d_new))


def evolve_approx(state: VehicleTruth, dt: float, noise=None) -> VehicleTruth:
    """First-order state evolution; ``noise`` is an optional additive
    (w_theta, w_d, w_v, w_beta) tuple, w_beta may be complex."""
    if not state.d > 0:
        raise ValueError(f"distance must be positive, got {state.d}")
    w_th, w_d, w_v, w_b = (0.0, 0.0, 0.0, 0.0) if noise is None else noise
    step = state.v * dt
    c, s = math.cos(state.theta), math.sin(state.theta)
    return replace(
        state,
        theta=state.theta + step * s / state.d + w_th,
        d=state.d - step * c + w_d,
        v=state.v + w_v,
        beta=state.beta * (1.0 + step * c / state.d) + w_b,
    )


def trajectory(cfg: TrajectoryConfig, exact: bool = True, rng=None,
               state_sigmas=None) -> list[VehicleTruth]:
    """States for slots 0..n_slots (inclusive of the initial state)."""
    out = [cfg.initial]
    state = cfg.initial
    for _ in range(cfg.n_slots):
        state = evolve_exact(state, cfg.dt) if exact else evolve_approx(state, cfg.dt)
        if cfg.process_noise_on:
            state = perturb(state, rng, state_sigmas)
        out.append(state)
    return out


def perturb(state: VehicleTruth, rng, state_sigmas) -> VehicleTruth:
    """Add Gaussian state noise; the RCS follows so beta = rcs/(2d) holds."""
    s_th, s_d, s_v, s_b = state_sigmas
    w = rng.standard_normal(5)
    d = max(state.d + s_d * w[1], 1e-3)
    beta = state.beta + s_b / math.sqrt(2) * complex(w[3], w[4])
    return VehicleTruth(state.theta + s_th * w[0], d,
                        max(state.v + s_v * w[2], 0.0), beta, beta * 2.0 * d)


def approximation_error(initial: VehicleTruth, dt: float, n_slots: int,
                        anchored: bool = False):
    """Per-slot |d_exact - d_approx| and |theta_exact - theta_approx|.

    Free-running (default): both recursions start from ``initial`` and run
    noise-free. ``anchored``: every approximate step starts from the exact
    state of the previous slot, which isolates the one-step error.
    Returns two arrays of length ``n_slots`` (slot 1 .. n_slots).
    """
    cfg = TrajectoryConfig(dt, n_slots, initial)
    exact = trajectory(cfg, exact=True)
    if anchored:
        approx = [evolve_approx(s, dt) for s in exact[:-1]]
    else:
        approx = trajectory(cfg, exact=False)[1:]
    ex = exact[1:]
    d_err = np.array([abs(a.d - b.d) for a, b in zip(ex, approx)])
    th_err = np.array([abs(a.theta - b.theta) for a, b in zip(ex, approx)])
    return d_err, th_err


def to_cartesian(theta: float, d: float):
    """RSU at the origin, array along x."""
    return d * math.cos(theta), d * math.sin(theta)


def from_cartesian(x: float, y: float):
    return math.atan2(y, x), math.hypot(x, y)
