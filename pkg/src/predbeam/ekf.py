"""Extended Kalman filter over the real state (theta, d, v, Re beta, Im beta).

The complex reflection coefficient is split into real and imaginary parts
and the complex angle observation into stacked real and imaginary rows, so
every matrix here is real and Hermitian transposes become transposes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .array_channel import ArrayConfig, steering, steering_derivative
from .measurement import FeedbackMeasurement, Measurement, feedback_h_of

log = logging.getLogger(__name__)

THETA_MIN = math.radians(0.1)
THETA_MAX = math.radians(179.9)
D_MIN = 0.1


@dataclass
class Belief:
    x_hat: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.x_hat = np.asarray(self.x_hat, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if self.x_hat.shape != (5,) or self.M.shape != (5, 5):
            raise ValueError("belief must be a 5-vector with a 5x5 MSE matrix")


@dataclass
class PredictedBelief:
    x_pred_1: np.ndarray
    x_pred_2: np.ndarray
    M_pred: np.ndarray


def g(x, dt: float) -> np.ndarray:
    """Noise-free state evolution for one slot."""
    theta, d, v, br, bi = x
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    step = v * dt
    c, s = math.cos(theta), math.sin(theta)
    scale = 1.0 + step * c / d
    return np.array([theta + step * s / d, d - step * c, v, br * scale, bi * scale])


def jacobian_g(x, dt: float) -> np.ndarray:
    theta, d, v, br, bi = x
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    c, s = math.cos(theta), math.sin(theta)
    vt = v * dt
    scale = 1.0 + vt * c / d
    G = np.eye(5)
    G[0, :3] = [1.0 + vt * c / d, -vt * s / d**2, dt * s / d]
    G[1, :3] = [vt * s, 1.0, -dt * c]
    # beta rows: d(beta*scale)/d(theta, d, v), shared by Re and Im parts
    common = np.array([-vt * s / d, -vt * c / d**2, dt * c / d])
    G[3, :3] = br * common
    G[4, :3] = bi * common
    G[3, 3] = G[4, 4] = scale
    return G


def h_real(x, theta_pred: float, array: ArrayConfig) -> np.ndarray:
    """Noiseless observation as the stacked real vector (Re r, Im r, tau, mu)."""
    theta, d, v, br, bi = x
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    off = array.orientation_offset
    a_true = steering(theta + off, array.n_tx)
    delta = np.vdot(a_true, steering(theta_pred + off, array.n_tx))
    r = array.kappa * complex(br, bi) * delta * steering(theta + off, array.n_rx)
    return np.concatenate([
        r.real, r.imag,
        [2.0 * d / array.light_speed,
         2.0 * v * math.cos(theta) * array.carrier_hz / array.light_speed],
    ])


def jacobian_h(x, theta_pred: float, array: ArrayConfig) -> np.ndarray:
    """(2 N_r + 2) x 5 Jacobian of :func:`h_real`.

    The angle derivative is the product rule on b(theta) a(theta)^H a(theta_hat);
    it does not assume N_t = N_r.
    """
    theta, d, v, br, bi = x
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    off = array.orientation_offset
    n_rx = array.n_rx
    t = theta + off
    a_hat = steering(theta_pred + off, array.n_tx)
    delta = np.vdot(steering(t, array.n_tx), a_hat)
    d_delta = np.vdot(steering_derivative(t, array.n_tx), a_hat)
    b = steering(t, n_rx)
    db = steering_derivative(t, n_rx)
    beta = complex(br, bi)
    k = array.kappa
    d_theta = k * beta * (db * delta + b * d_delta)
    d_beta = k * b * delta  # d/d(Re beta); d/d(Im beta) is 1j times this

    H = np.zeros((2 * n_rx + 2, 5))
    H[:n_rx, 0] = d_theta.real
    H[n_rx:2 * n_rx, 0] = d_theta.imag
    H[:n_rx, 3] = d_beta.real
    H[n_rx:2 * n_rx, 3] = d_beta.imag
    H[:n_rx, 4] = -d_beta.imag
    H[n_rx:2 * n_rx, 4] = d_beta.real
    c_l, fc = array.light_speed, array.carrier_hz
    H[-2, 1] = 2.0 / c_l
    H[-1, 0] = -2.0 * v * math.sin(theta) * fc / c_l
    H[-1, 2] = 2.0 * fc * math.cos(theta) / c_l
    return H


def measurement_covariance(s1: float, s2: float, s3: float, n_rx: int) -> np.ndarray:
    """Diagonal of Q_m in the real parameterisation.

    ``s1`` is the total variance of each complex angle entry, split evenly
    over its real and imaginary rows.
    """
    return np.concatenate([np.full(2 * n_rx, s1 / 2.0), [s2, s3]])


def predict(belief: Belief, dt: float, Q_s: np.ndarray) -> PredictedBelief:
    """One- and two-step predictions; both are kept inside the valid region."""
    x1 = _clamp(g(belief.x_hat, dt))
    x2 = _clamp(g(x1, dt))
    G = jacobian_g(belief.x_hat, dt)
    M_pred = G @ belief.M @ G.T + Q_s
    return PredictedBelief(x1, x2, 0.5 * (M_pred + M_pred.T))


def _as_diag(q_m, m: int) -> np.ndarray:
    q = np.asarray(q_m, dtype=float)
    if q.ndim == 2:
        if np.count_nonzero(q - np.diag(np.diagonal(q))):
            raise ValueError("only diagonal measurement covariances are supported")
        q = np.diagonal(q)
    if q.shape != (m,):
        raise ValueError(f"Q_m has {q.shape[0]} entries, measurement has {m}")
    if np.any(q <= 0) or not np.all(np.isfinite(q)):
        raise ValueError("Q_m must be positive definite")
    return q


def kalman_update(x_pred: np.ndarray, M_pred: np.ndarray, innovation: np.ndarray,
                  H: np.ndarray, q_m, form: str = "gain"):
    """Gain, state and MSE update given a linearised measurement.

    ``form="gain"`` solves the innovation covariance Q_m + H M H^T directly.
    ``form="woodbury"`` evaluates the same gain through the matrix inversion
    lemma (K = (M^-1 + H^T Q^-1 H)^-1 H^T Q^-1), which only needs 5x5
    inverses and is much cheaper for large arrays.
    Both whiten rows by Q_m^(-1/2) first; delay and Doppler rows are many
    orders of magnitude apart in scale.
    """
    q = _as_diag(q_m, H.shape[0])
    w = 1.0 / np.sqrt(q)
    Hw = H * w[:, None]
    ew = innovation * w
    n = M_pred.shape[0]
    if form == "gain":
        S = np.eye(H.shape[0]) + Hw @ M_pred @ Hw.T
        try:
            cf = sla.cho_factor(S, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "innovation covariance is not positive definite") from exc
        # K_w = M H_w^T S^-1, computed as (S^-1 H_w M)^T
        K = sla.cho_solve(cf, Hw @ M_pred, check_finite=False).T
    elif form == "woodbury":
        # S^-1 = I - H_w (M^-1 + H_w^T H_w)^-1 H_w^T
        info = np.linalg.inv(M_pred) + Hw.T @ Hw
        M = np.linalg.inv(0.5 * (info + info.T))
        K = M @ Hw.T
    else:
        raise ValueError(f"unknown update form {form!r}")
    x = x_pred + K @ ew
    if form == "gain":
        M = (np.eye(n) - K @ Hw) @ M_pred
    return x, 0.5 * (M + M.T)


def _clamp(x: np.ndarray) -> np.ndarray:
    if not THETA_MIN <= x[0] <= THETA_MAX:
        log.info("clamping angle estimate %.4f deg", math.degrees(x[0]))
        x[0] = min(max(x[0], THETA_MIN), THETA_MAX)
    if x[1] < D_MIN:
        log.info("clamping distance estimate %.4f m", x[1])
        x[1] = D_MIN
    return x


def update(pred: PredictedBelief, y: Measurement, Q_m, array: ArrayConfig,
           form: str = "gain") -> Belief:
    """Measurement update at the one-step prediction.

    ``Q_m`` is the real-parameterisation covariance (diagonal vector or
    matrix, see :func:`measurement_covariance`).
    """
    x1 = pred.x_pred_1
    theta_beam = x1[0]
    H = jacobian_h(x1, theta_beam, array)
    innov = y.as_real() - h_real(x1, theta_beam, array)
    x, M = kalman_update(x1, pred.M_pred, innov, H, Q_m, form)
    return Belief(_clamp(x), M)


# --- feedback baseline ----------------------------------------------------

def feedback_jacobian_h(x, theta_pred_1step: float, theta_pred_2step: float,
                        alpha: complex, array: ArrayConfig) -> np.ndarray:
    """4 x 5 Jacobian of the power-normalised pilot observation.

    The channel coefficient is treated as known, so the beta columns are zero.
    """
    theta, d, v, _, _ = x
    off = array.orientation_offset
    m = array.m_veh
    w = steering(theta_pred_2step, m)
    rx = np.vdot(w, steering(theta, m))
    d_rx = np.vdot(w, steering_derivative(theta, m))
    f = steering(theta_pred_1step + off, array.n_tx)
    tx = np.vdot(steering(theta + off, array.n_tx), f)
    d_tx = np.vdot(steering_derivative(theta + off, array.n_tx), f)
    dc = array.kappa_comm * alpha * (d_rx * tx + rx * d_tx)
    H = np.zeros((4, 5))
    H[0, 0], H[1, 0] = dc.real, dc.imag
    c_l, fc = array.light_speed, array.carrier_hz
    H[2, 1] = 2.0 / c_l
    H[3, 0] = -2.0 * v * math.sin(theta) * fc / c_l
    H[3, 2] = 2.0 * fc * math.cos(theta) / c_l
    return H


def update_feedback(pred: PredictedBelief, y: FeedbackMeasurement, Q_m,
                    theta_pred_2step: float, alpha: complex,
                    array: ArrayConfig, form: str = "gain") -> Belief:
    x1 = pred.x_pred_1
    H = feedback_jacobian_h(x1, x1[0], theta_pred_2step, alpha, array)
    innov = y.as_real() - feedback_h_of(x1, x1[0], theta_pred_2step, alpha, array)
    x, M = kalman_update(x1, pred.M_pred, innov, H, Q_m, form)
    return Belief(_clamp(x), M)
