"""Post-matched-filter radar observations and the feedback-pilot baseline.

Waveforms are never synthesised: each observation is the noiseless model
output plus Gaussian noise with the variances the noise model prescribes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .array_channel import (
    ArrayConfig,
    NoiseModel,
    measurement_variances,
    steering,
    steering_tx,
    vehicle_steering,
)


@dataclass(frozen=True)
class Measurement:
    """One epoch's radar observation for one beam."""

    r_tilde: np.ndarray
    tau: float
    mu: float

    def as_real(self) -> np.ndarray:
        """Stacked (Re r, Im r, tau, mu) real vector used by the filter."""
        r = np.asarray(self.r_tilde)
        return np.concatenate([r.real, r.imag, [self.tau, self.mu]])


@dataclass(frozen=True)
class FeedbackMeasurement:
    """Baseline observation: one combined pilot sample plus delay/Doppler.

    ``c`` includes the sqrt(p) amplitude, as received by the vehicle.
    """

    c: complex
    tau: float
    mu: float
    p: float

    def as_real(self) -> np.ndarray:
        cn = self.c / math.sqrt(self.p)
        return np.array([cn.real, cn.imag, self.tau, self.mu])


def make_rng(seed):
    """Accepts an int, a SeedSequence, a sequence of ints or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (list, tuple)):
        seed = np.random.SeedSequence(list(seed))
    return np.random.default_rng(seed)


def epoch_seed(master_seed: int, trial: int, vehicle_id: int, epoch: int):
    """Independent, reproducible stream per (trial, vehicle, epoch)."""
    return np.random.SeedSequence([int(master_seed), int(trial), int(vehicle_id), int(epoch)])


def _unpack(state):
    x = state.as_vector() if hasattr(state, "as_vector") else np.asarray(state, float)
    if x.shape[0] == 5:
        return x[0], x[1], x[2], complex(x[3], x[4])
    theta, d, v, beta = state
    return float(theta), float(d), float(v), complex(beta)


def h_of(state, theta_pred: float, array: ArrayConfig) -> Measurement:
    """Noiseless observation of ``state`` with the beam steered to ``theta_pred``."""
    theta, d, v, beta = _unpack(state)
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    off = array.orientation_offset
    delta = np.vdot(steering_tx(theta + off, array.n_tx),
                    steering_tx(theta_pred + off, array.n_tx))
    r = array.kappa * beta * delta * steering(theta + off, array.n_rx)
    tau = 2.0 * d / array.light_speed
    mu = 2.0 * v * math.cos(theta) * array.carrier_hz / array.light_speed
    return Measurement(r, tau, mu)


def true_beam_gain(theta: float, theta_pred: float, array: ArrayConfig) -> complex:
    off = array.orientation_offset
    return complex(np.vdot(steering_tx(theta + off, array.n_tx),
                           steering_tx(theta_pred + off, array.n_tx)))


def sample(state, theta_pred: float, p: float, noise: NoiseModel,
           array: ArrayConfig, rng_seed=None) -> Measurement:
    """Noisy observation; variances use the true beta and beam gain."""
    if not p > 0:
        raise ValueError(f"transmit power must be positive, got {p}")
    theta, _, _, beta = _unpack(state)
    clean = h_of(state, theta_pred, array)
    delta = true_beam_gain(theta, theta_pred, array)
    s1, s2, s3 = measurement_variances(p, beta, delta, noise, array)
    rng = make_rng(rng_seed)
    n = array.n_rx
    z = rng.standard_normal((2, n)) * math.sqrt(s1 / 2)
    return Measurement(
        clean.r_tilde + z[0] + 1j * z[1],
        clean.tau + math.sqrt(s2) * rng.standard_normal(),
        clean.mu + math.sqrt(s3) * rng.standard_normal(),
    )


def feedback_gain(theta: float, theta_pred_1step: float, theta_pred_2step: float,
                  array: ArrayConfig) -> complex:
    """Combined receive/transmit beam gain w^H u(theta) a^H(theta) f."""
    off = array.orientation_offset
    rx = np.vdot(vehicle_steering(theta_pred_2step, array.m_veh),
                 vehicle_steering(theta, array.m_veh))
    tx = np.vdot(steering_tx(theta + off, array.n_tx),
                 steering_tx(theta_pred_1step + off, array.n_tx))
    return complex(rx * tx)


def feedback_h_of(state, theta_pred_1step: float, theta_pred_2step: float,
                  alpha: complex, array: ArrayConfig) -> np.ndarray:
    """Noiseless power-normalised baseline observation as a real 4-vector."""
    theta, d, v, _ = _unpack(state)
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    c = array.kappa_comm * alpha * feedback_gain(theta, theta_pred_1step,
                                                 theta_pred_2step, array)
    return np.array([c.real, c.imag, 2.0 * d / array.light_speed,
                     2.0 * v * math.cos(theta) * array.carrier_hz / array.light_speed])


def feedback_variances(p: float, alpha: complex, gain: complex,
                       noise: NoiseModel, array: ArrayConfig):
    """Baseline variances: single pilot, so matched-filter gain 1.

    The first entry is the variance of the power-normalised pilot sample.
    """
    s1 = noise.a1**2 * noise.sigma2_c / p
    _, s2, s3 = measurement_variances(p, alpha, gain, noise, array,
                                      g_mf=1.0, kappa=array.kappa_comm)
    return s1, s2, s3


def feedback_pilot_sample(state, theta_pred_1step: float, theta_pred_2step: float,
                          alpha: complex, p: float, noise: NoiseModel,
                          array: ArrayConfig, rng_seed=None) -> FeedbackMeasurement:
    if not p > 0:
        raise ValueError(f"transmit power must be positive, got {p}")
    theta = _unpack(state)[0]
    clean = feedback_h_of(state, theta_pred_1step, theta_pred_2step, alpha, array)
    gain = feedback_gain(theta, theta_pred_1step, theta_pred_2step, array)
    s1, s2, s3 = feedback_variances(p, alpha, gain, noise, array)
    rng = make_rng(rng_seed)
    z = rng.standard_normal(4)
    sp = math.sqrt(p)
    # pilot noise is not normalised by p: c = sqrt(p)*signal + z
    c = sp * complex(clean[0], clean[1]) + sp * math.sqrt(s1 / 2) * complex(z[0], z[1])
    return FeedbackMeasurement(c, clean[2] + math.sqrt(s2) * z[2],
                               clean[3] + math.sqrt(s3) * z[3], p)


def _refine_cos(r: np.ndarray, u0: float, n_grid: int = 64) -> float:
    """Peak of |b(u)^H r| near u0, where u = cos(theta) and b has phases -pi*i*u."""
    n = r.size
    idx = np.arange(n)
    half = 4.0 / n  # a few beamwidths either side of the lag estimate
    u = u0 + np.linspace(-half, half, n_grid)
    power = np.abs(np.exp(1j * np.pi * np.outer(u, idx)) @ r) ** 2
    j = int(np.argmax(power))
    if 0 < j < n_grid - 1:
        a, b, c = power[j - 1], power[j], power[j + 1]
        den = a - 2.0 * b + c
        shift = 0.5 * (a - c) / den if den < 0 else 0.0
        return float(u[j] + shift * (u[1] - u[0]))
    return float(u[j])


def coarse_estimate(y: Measurement, array: ArrayConfig, theta_ref=None) -> np.ndarray:
    """Direct (theta, d, v, |beta|) read-out of one observation.

    Angle from the matched-filter peak across the receive array (seeded by
    the phase step between neighbouring elements), distance from the delay,
    speed from the Doppler, and reflection strength from the echo energy
    assuming unit beam gain. Used only to label beams.

    Near endfire the phase step is close to +-pi and noise can wrap it, so
    cos(theta) is only known modulo 2. With ``theta_ref`` (angles the beams
    were steered to) the alias closest to any reference is taken.
    """
    r = np.asarray(y.r_tilde)
    if r.size >= 2:
        lag = np.vdot(r[:-1], r[1:])
        u = _refine_cos(r, -np.angle(lag) / np.pi)
        u = (u + 1.0) % 2.0 - 1.0
        cands = [u, u + 2.0 if u < 0 else u - 2.0] if theta_ref is not None else [u]
        thetas = [math.acos(float(np.clip(c, -1.0, 1.0))) - array.orientation_offset
                  for c in cands]
        if theta_ref is not None:
            ref = np.atleast_1d(np.asarray(theta_ref, dtype=float))
            theta = min(thetas, key=lambda t: float(np.min(np.abs(ref - t))))
        else:
            theta = thetas[0]
    else:
        theta = math.nan
    d = y.tau * array.light_speed / 2.0
    cos_road = math.cos(theta) if np.isfinite(theta) else math.nan
    v = y.mu * array.light_speed / (2.0 * array.carrier_hz * cos_road) \
        if abs(cos_road) > 1e-3 else math.nan
    beta_abs = float(np.linalg.norm(r)) / array.kappa
    return np.array([theta, d, v, beta_abs])
