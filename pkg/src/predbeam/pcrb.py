"""Predicted posterior Fisher information and its power-separable form.

For one vehicle the predicted FIM is ``p*A + B`` where ``A`` is the
measurement information at unit power and ``B`` the prior information.
A symmetric square root of ``B`` whitens the pencil so that the bound on
every state component is a sum of ``weight / (p * lambda + 1)`` terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .array_channel import ArrayConfig, NoiseModel, measurement_variances
from .ekf import PredictedBelief, jacobian_h, kalman_update, measurement_covariance

BETA_FLOOR = 1e-12


@dataclass(frozen=True)
class FimDecomposition:
    lambdas: np.ndarray
    b_tilde: np.ndarray

    def crb(self, p: float) -> np.ndarray:
        """Full bound matrix (p A + B)^-1."""
        return (self.b_tilde / (p * self.lambdas + 1.0)) @ self.b_tilde.T

    @property
    def weights(self) -> np.ndarray:
        """Per-mode weight |b_1m|^2 + |b_2m|^2 on the angle+distance bound."""
        return self.b_tilde[0] ** 2 + self.b_tilde[1] ** 2


@dataclass
class AllocationProblem:
    """Per-vehicle PCRB coefficients and rate gains for one epoch.

    Row ``k`` of ``lambdas`` and ``weights`` describes vehicle ``k``.
    """

    lambdas: np.ndarray
    weights: np.ndarray
    rho: np.ndarray
    P_T: float
    R_t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lambdas = np.atleast_2d(np.asarray(self.lambdas, dtype=float))
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.rho = np.asarray(self.rho, dtype=float).ravel()
        k = self.rho.shape[0]
        if self.lambdas.shape != self.weights.shape or self.lambdas.shape[0] != k:
            raise ValueError("lambdas, weights and rho must agree on the vehicle count")
        if np.any(self.lambdas < 0) or np.any(self.weights < 0) or np.any(self.rho < 0):
            raise ValueError("allocation coefficients must be nonnegative")
        if not self.P_T > 0:
            raise ValueError(f"P_T must be positive, got {self.P_T}")

    @property
    def K(self) -> int:
        return self.rho.shape[0]

    def objective(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(np.sum(self.weights / (p[:, None] * self.lambdas + 1.0)))

    @classmethod
    def from_decompositions(cls, decomps, rho, P_T, R_t=0.0):
        # rounding can leave eigenvalues of a PSD matrix slightly negative
        return cls(np.array([np.maximum(dc.lambdas, 0.0) for dc in decomps]),
                   np.array([dc.weights for dc in decomps]), rho, P_T, R_t)


def unit_power_covariance(beta_pred: complex, noise: NoiseModel,
                          array: ArrayConfig) -> np.ndarray:
    """Diagonal of Q_m at p = 1 with predicted beta and unit beam gain."""
    beta = beta_pred if abs(beta_pred) > BETA_FLOOR else BETA_FLOOR
    s1, s2, s3 = measurement_variances(1.0, beta, 1.0, noise, array)
    return measurement_covariance(s1, s2, s3, array.n_rx)


def fim_parts(pred: PredictedBelief, noise: NoiseModel, array: ArrayConfig):
    """Measurement information at unit power ``A`` and prior information ``B``."""
    x1 = pred.x_pred_1
    H = jacobian_h(x1, x1[0], array)
    q = unit_power_covariance(complex(x1[3], x1[4]), noise, array)
    Hw = H / np.sqrt(q)[:, None]
    A = Hw.T @ Hw
    try:
        B = np.linalg.inv(pred.M_pred)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("predicted MSE matrix is singular") from exc
    return 0.5 * (A + A.T), 0.5 * (B + B.T)


def decompose(A: np.ndarray, B: np.ndarray) -> FimDecomposition:
    """Eigen-decompose B^-1/2 A B^-1/2 with the symmetric square root of B."""
    w, V = np.linalg.eigh(B)
    if w.min() <= 0:
        raise np.linalg.LinAlgError("prior information matrix is not positive definite")
    B_mhalf = (V / np.sqrt(w)) @ V.T
    W = B_mhalf @ A @ B_mhalf
    lam, U = np.linalg.eigh(0.5 * (W + W.T))
    return FimDecomposition(lam, B_mhalf @ U)


def pcrb_theta_d(decomp: FimDecomposition, p: float):
    """Predicted bounds on angle and distance MSE at power ``p``."""
    if p < 0:
        raise ValueError(f"power must be nonnegative, got {p}")
    den = p * decomp.lambdas + 1.0
    c11 = float(np.sum(decomp.b_tilde[0] ** 2 / den))
    c22 = float(np.sum(decomp.b_tilde[1] ** 2 / den))
    return c11, c22


def predicted_decomposition(pred: PredictedBelief, noise: NoiseModel,
                            array: ArrayConfig) -> FimDecomposition:
    return decompose(*fim_parts(pred, noise, array))


def theorem1_check(pred: PredictedBelief, p: float, noise: NoiseModel,
                   array: ArrayConfig) -> float:
    """Relative gap between the predicted bound and the filter's MSE update.

    The update runs the direct gain form at the one-step prediction with
    Q_m = Q_m(p=1) / p; the bound comes from the eigen-decomposition.
    """
    decomp = predicted_decomposition(pred, noise, array)
    C = decomp.crb(p)
    if p == 0:
        M_n = pred.M_pred
    else:
        x1 = pred.x_pred_1
        H = jacobian_h(x1, x1[0], array)
        q = unit_power_covariance(complex(x1[3], x1[4]), noise, array) / p
        _, M_n = kalman_update(x1, pred.M_pred, np.zeros(H.shape[0]), H, q, "gain")
    return float(np.linalg.norm(C - M_n) / np.linalg.norm(M_n))
