"""Beam-to-vehicle association by nearest weighted state distance.

Each beam's estimate at the current epoch is matched to the vehicle whose
previous state is closest. Components are scaled before the Euclidean norm
because angle, distance and speed live in different units.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .array_channel import NoiseModel

log = logging.getLogger(__name__)

OPTIMAL_MAX_K = 16


@dataclass(frozen=True)
class AssociationResult:
    """``mapping[i]`` is the vehicle id (0-based) assigned to beam ``i``."""

    mapping: np.ndarray
    min_margin: float
    tied: bool = False
    method: str = "nearest"


def default_weights(noise: NoiseModel | None = None) -> np.ndarray:
    """1/sigma per compared component (theta, d, v, |beta|)."""
    noise = noise or NoiseModel()
    s_theta, s_d, s_v, s_beta = noise.state_sigmas
    return 1.0 / np.array([s_theta, s_d, s_v, s_beta])


def _as_vector(s) -> np.ndarray:
    if hasattr(s, "x_hat"):
        s = s.x_hat
    elif hasattr(s, "as_vector"):
        s = s.as_vector()
    return np.asarray(s, dtype=float)


def features(s, full_state: bool = False) -> np.ndarray:
    """Comparable feature vector of a belief, truth or raw state.

    A 5-vector (theta, d, v, Re beta, Im beta) is reduced to
    (theta, d, v, |beta|) unless ``full_state``; a 4-vector is taken as
    already reduced.
    """
    x = _as_vector(s)
    if x.shape == (5,):
        return x.copy() if full_state else np.array([x[0], x[1], x[2], math.hypot(x[3], x[4])])
    if x.shape == (4,) and not full_state:
        return x.copy()
    raise ValueError(f"cannot compare a state of shape {x.shape}")


def distance_matrix(prev_states, new_estimates, weights=None,
                    full_state_distance: bool = False) -> np.ndarray:
    """D[i, j]: weighted distance from new estimate i to previous state j.

    ``weights`` is one scale per component, or a (K, F) array with a row
    per previous state (useful when the tracks differ in precision).

    NaN components (e.g. an unresolvable speed) are left out of the sum.
    """
    prev = np.array([features(s, full_state_distance) for s in prev_states])
    new = np.array([features(s, full_state_distance) for s in new_estimates])
    if weights is None:
        w = np.ones(prev.shape[1]) if full_state_distance else default_weights()
    else:
        w = np.asarray(weights, dtype=float)
    if w.shape not in ((prev.shape[1],), prev.shape):
        raise ValueError(f"expected {prev.shape[1]} weights (or one row per previous "
                         f"state), got shape {w.shape}")
    # a 2-D weight array gives every previous state its own scaling
    diff = (new[:, None, :] - prev[None, :, :]) * w
    return np.sqrt(np.nansum(diff**2, axis=2))


def _margins(D: np.ndarray) -> np.ndarray:
    if D.shape[1] < 2:
        return np.full(D.shape[0], math.inf)
    part = np.sort(D, axis=1)
    best, second = part[:, 0], part[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        m = second / best
    m[(best == 0) & (second == 0)] = 1.0
    return m


def associate(prev_states, new_estimates, weights=None,
              full_state_distance: bool = False) -> AssociationResult:
    """Assign every new estimate to one previous vehicle.

    Each estimate takes its nearest vehicle; when two estimates claim the
    same vehicle the assignment minimising total distance is used instead
    (exact for up to 16 vehicles, greedy by increasing distance beyond).
    """
    prev_states = list(prev_states)
    new_estimates = list(new_estimates)
    K = len(prev_states)
    if K < 1 or len(new_estimates) != K:
        raise ValueError(
            f"need equal, nonempty lists; got {K} previous and {len(new_estimates)} new states")
    if K == 1:
        return AssociationResult(np.zeros(1, dtype=int), math.inf)

    D = distance_matrix(prev_states, new_estimates, weights, full_state_distance)
    margins = _margins(D)
    min_margin = float(np.min(margins))
    tied = bool(min_margin <= 1.0 + 1e-12)
    if tied:
        log.warning("association tie: two vehicles are equally close to one beam")

    nearest = np.argmin(D, axis=1)
    if np.unique(nearest).size == K:
        return AssociationResult(nearest, min_margin, tied, "nearest")

    if K <= OPTIMAL_MAX_K:
        _, cols = linear_sum_assignment(D)
        return AssociationResult(cols.astype(int), min_margin, tied, "optimal")

    log.warning("association conflict with %d vehicles resolved greedily", K)
    mapping = np.full(K, -1)
    taken = np.zeros(K, dtype=bool)
    for flat in np.argsort(D, axis=None, kind="stable"):
        i, j = divmod(int(flat), K)
        if mapping[i] < 0 and not taken[j]:
            mapping[i] = j
            taken[j] = True
    return AssociationResult(mapping, min_margin, tied, "greedy")
