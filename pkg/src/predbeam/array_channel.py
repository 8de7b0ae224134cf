"""ULA steering vectors and the radar/communication signal models.

Angles are radians everywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LIGHT_SPEED = 3.0e8


@dataclass(frozen=True)
class ArrayConfig:
    """Antenna counts and carrier for the RSU and the vehicles.

    ``orientation_offset`` is a fixed angle (rad) added to every angle that
    enters the model, for arrays not exactly parallel to the road.
    """

    n_tx: int = 64
    n_rx: int = 64
    m_veh: int = 32
    carrier_hz: float = 30e9
    light_speed: float = LIGHT_SPEED
    orientation_offset: float = 0.0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "m_veh"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.carrier_hz > 0:
            raise ValueError(f"carrier_hz must be positive, got {self.carrier_hz}")

    @property
    def kappa(self) -> float:
        """Radar array gain sqrt(N_t N_r)."""
        return math.sqrt(self.n_tx * self.n_rx)

    @property
    def kappa_comm(self) -> float:
        """Communication array gain sqrt(N_t M)."""
        return math.sqrt(self.n_tx * self.m_veh)


@dataclass(frozen=True)
class NoiseModel:
    """Measurement and state noise parameters.

    ``state_sigmas`` holds the per-slot standard deviations of the state
    evolution noise as (angle [rad], distance [m], speed [m/s], reflection
    coefficient).
    """

    sigma2: float = 1.0
    sigma2_c: float = 1.0
    a1: float = 1.0
    a2: float = 6.7e-7
    a3: float = 2e4
    g_mf: float = 10.0
    state_sigmas: tuple = field(
        default=(math.radians(0.02), 0.2, 0.5, 0.1))

    def __post_init__(self):
        for name in ("sigma2", "sigma2_c", "a1", "a2", "a3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.g_mf >= 1:
            raise ValueError(f"g_mf must be >= 1, got {self.g_mf}")
        if len(self.state_sigmas) != 4 or min(self.state_sigmas) <= 0:
            raise ValueError("state_sigmas must be four positive numbers")

    def state_covariance(self) -> np.ndarray:
        """Q_s for the real 5-state (theta, d, v, Re beta, Im beta)."""
        s_th, s_d, s_v, s_b = self.state_sigmas
        return np.diag([s_th**2, s_d**2, s_v**2, s_b**2 / 2, s_b**2 / 2])


def steering(theta, n: int) -> np.ndarray:
    """Half-wavelength ULA steering vector, unit norm.

    Element ``i`` is ``exp(-1j*pi*i*cos(theta)) / sqrt(n)``.
    """
    idx = np.arange(n)
    return np.exp(-1j * np.pi * idx * np.cos(theta)) / np.sqrt(n)


def steering_tx(theta, n: int) -> np.ndarray:
    return steering(theta, n)


def receive_steering(theta, n_rx: int) -> np.ndarray:
    return steering(theta, n_rx)


def vehicle_steering(theta, m_veh: int) -> np.ndarray:
    return steering(theta, m_veh)


def steering_derivative(theta, n: int) -> np.ndarray:
    """d/dtheta of :func:`steering`."""
    idx = np.arange(n)
    return steering(theta, n) * (1j * np.pi * idx * np.sin(theta))


def beam_gain(theta, theta_hat, n: int) -> complex:
    """Beamforming gain factor a(theta)^H a(theta_hat)."""
    return complex(np.vdot(steering(theta, n), steering(theta_hat, n)))


def reflection_coeff(rcs: complex, d: float) -> complex:
    """Reflection coefficient of a target with complex RCS at distance d."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return complex(rcs) / (2.0 * d)


def delay_of(d: float, light_speed: float = LIGHT_SPEED) -> float:
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 2.0 * d / light_speed


def doppler_of(v: float, theta: float, carrier_hz: float,
               light_speed: float = LIGHT_SPEED) -> float:
    return 2.0 * v * math.cos(theta) * carrier_hz / light_speed


def measurement_variances(p: float, beta: complex, delta: complex,
                          noise: NoiseModel, array: ArrayConfig,
                          g_mf: float | None = None,
                          kappa: float | None = None):
    """Noise variances (angle, delay, Doppler) of one radar observation.

    The angle-vector variance depends on power and matched-filter gain only;
    delay and Doppler variances also scale with the echo strength
    ``kappa^2 |beta|^2 |delta|^2``.
    """
    if not p > 0:
        raise ValueError(f"transmit power must be positive, got {p}")
    strength = abs(beta) ** 2 * abs(delta) ** 2
    if strength == 0:
        raise ValueError("zero echo strength gives infinite variance")
    g = noise.g_mf if g_mf is None else g_mf
    k2 = (array.kappa if kappa is None else kappa) ** 2
    s1 = noise.a1**2 * noise.sigma2 / (g * p)
    s2 = noise.a2**2 * noise.sigma2 / (g * k2 * strength * p)
    s3 = noise.a3**2 * noise.sigma2 / (g * k2 * strength * p)
    return s1, s2, s3


def predicted_measurement_variances(p: float, beta_pred: complex,
                                    noise: NoiseModel, array: ArrayConfig):
    """Variances the RSU can actually compute: predicted beta, unit beam gain."""
    return measurement_variances(p, beta_pred, 1.0, noise, array)


def comm_gain_rho(theta_true: float, theta_pred_1step: float,
                  theta_pred_2step: float, alpha: complex,
                  array: ArrayConfig, sigma2_c: float) -> float:
    """Effective downlink gain rho so that SNR = p * rho."""
    rx_gain = np.vdot(vehicle_steering(theta_pred_2step, array.m_veh),
                      vehicle_steering(theta_true, array.m_veh))
    off = array.orientation_offset
    tx_gain = np.vdot(steering_tx(theta_true + off, array.n_tx),
                      steering_tx(theta_pred_1step + off, array.n_tx))
    amp = array.kappa_comm * alpha * rx_gain * tx_gain
    return float(abs(amp) ** 2 / sigma2_c)


def sum_rate(p, rho) -> float:
    """Sum of log2(1 + p_k rho_k) in bits/s/Hz."""
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if p.shape != rho.shape:
        raise ValueError(f"power and gain shapes differ: {p.shape} vs {rho.shape}")
    return float(np.sum(np.log2(1.0 + p * rho)))


def los_channel(d: float, tilde_alpha: float, carrier_hz: float,
                light_speed: float = LIGHT_SPEED) -> complex:
    """LoS coefficient with 1/d path loss and propagation phase."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    # reduce in cycles, not radians, to keep the phase accurate at large f_c*d
    cycles = carrier_hz * d / light_speed
    phase = 2.0 * math.pi * (cycles - math.floor(cycles))
    return tilde_alpha / d * complex(math.cos(phase), math.sin(phase))
