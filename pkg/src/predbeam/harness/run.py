"""The per-epoch tracking loop and Monte-Carlo trials."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..allocation import InfeasibleAllocation, pcrb_allocate, uniform_allocation, water_fill
from ..array_channel import comm_gain_rho, los_channel
from ..association import associate
from ..ekf import Belief, PredictedBelief, predict, update, update_feedback
from ..kinematics import VehicleTruth, evolve_exact, perturb
from ..measurement import (
    coarse_estimate,
    epoch_seed,
    feedback_h_of,
    feedback_pilot_sample,
    feedback_variances,
    FeedbackMeasurement,
    h_of,
    make_rng,
    sample,
)
from ..pcrb import AllocationProblem, fim_parts, pcrb_theta_d, predicted_decomposition, unit_power_covariance
from .config import ScenarioConfig

log = logging.getLogger(__name__)

# epochs count from 1, so epoch 0 seeds the initial belief; the beam
# shuffle gets a vehicle id no real vehicle uses
_INIT_EPOCH = 0
_SHUFFLE_STREAM = 2**32 - 1
# an MSE entry beyond this marks a diverged track
MAX_MSE = 1e12


class UnrecoverableAllocation(RuntimeError):
    """Neither the configured allocator nor the water-filling fallback worked."""


@dataclass
class EpochRecord:
    """Everything observed and predicted at one epoch of one trial.

    Per-vehicle arrays are indexed by vehicle id. ``x_*`` rows are
    (theta, d, v, Re beta, Im beta); ``beam_of[k]`` is the beam that carried
    vehicle k's echo and ``assigned[k]`` the track that beam was given to.
    """

    trial: int
    epoch: int
    truth: np.ndarray
    x_pred: np.ndarray
    x_pred_2: np.ndarray
    x_est: np.ndarray
    p: np.ndarray
    rho_pred: np.ndarray
    rate: np.ndarray
    rate_pred: np.ndarray
    c11: np.ndarray
    c22: np.ndarray
    thm1_gap: np.ndarray
    beam_of: np.ndarray
    assigned: np.ndarray
    min_margin: float
    r_t: float
    r_max: float
    fallback: bool
    route: str
    lost: np.ndarray = None
    # summed bound this epoch would have had under water-filling
    objective_wf: float = math.nan

    @property
    def K(self) -> int:
        return self.truth.shape[0]

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rate))

    @property
    def objective(self) -> float:
        """Summed predicted angle+distance bound."""
        return float(np.sum(self.c11 + self.c22))

    @property
    def sq_err_theta(self) -> np.ndarray:
        return (self.x_est[:, 0] - self.truth[:, 0]) ** 2

    @property
    def sq_err_d(self) -> np.ndarray:
        return (self.x_est[:, 1] - self.truth[:, 1]) ** 2

    @property
    def assoc_ok(self) -> np.ndarray:
        return self.assigned == np.arange(self.K)


def _allocate(cfg: ScenarioConfig, decomps, rho_pred, P_T, warm=None):
    """Returns (p, R_t, R_max, fallback, route, solver info)."""
    K = len(decomps)
    try:
        wf = water_fill(rho_pred, P_T)
    except ValueError as exc:
        raise UnrecoverableAllocation(f"water-filling failed: {exc}") from exc
    r_max = wf.achieved_rate
    r_t = cfg.rate_threshold_frac * r_max
    if cfg.allocator == "uniform":
        return uniform_allocation(K, P_T), r_t, r_max, False, "uniform", None
    if cfg.allocator == "water_fill":
        return wf.p, r_t, r_max, False, "water_fill", None
    if any(dc is None for dc in decomps):
        log.warning("no bound available for a diverged track; falling back to water-filling")
        return wf.p, r_t, r_max, True, "fallback", None
    prob = AllocationProblem.from_decompositions(decomps, rho_pred, P_T, r_t)
    try:
        res = pcrb_allocate(prob, warm_start=warm)
    except (InfeasibleAllocation, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("allocation failed (%s); falling back to water-filling", exc)
        return wf.p, r_t, r_max, True, "fallback", None
    return res.p, r_t, r_max, False, res.info.get("route", ""), res.info


def _guarded(step, *args):
    """Run an update; a numerical failure yields a belief that reads as diverged."""
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return step(*args)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        return Belief(np.full(5, np.nan), np.full((5, 5), np.nan))


def _healthy(b: Belief) -> bool:
    return bool(np.all(np.isfinite(b.x_hat)) and np.all(np.isfinite(b.M))
                and np.max(np.abs(b.M)) < MAX_MSE)


def _safe_decomposition(pred, noise, arr):
    """Bound decomposition, or None once a diverged track's MSE matrix is unusable."""
    if not np.all(np.isfinite(pred.M_pred)):
        return None
    try:
        return predicted_decomposition(pred, noise, arr)
    except np.linalg.LinAlgError:
        return None


def association_weights(pred: PredictedBelief, p: float, noise, arr) -> np.ndarray:
    """Per-track scaling of (theta, d, v, |beta|) for beam association.

    A beam's read-out is compared with the track's one-step prediction, so
    each component is scaled by the inverse standard deviation of their
    difference: single-echo Fisher bound at this track's power plus the
    predicted MSE.
    """
    A, _ = fim_parts(pred, noise, arr)
    C = np.linalg.pinv(p * A) + pred.M_pred
    x = pred.x_pred_1
    b = math.hypot(x[3], x[4])
    u = np.array([x[3], x[4]]) / b if b > 0 else np.array([1.0, 0.0])
    var = np.array([C[0, 0], C[1, 1], C[2, 2], u @ C[3:, 3:] @ u])
    return 1.0 / np.sqrt(np.maximum(var, 1e-300))


def _initial_beliefs(cfg: ScenarioConfig, trial: int):
    sig = cfg.noise.state_sigmas
    M0 = np.diag([sig[0]**2, sig[1]**2, sig[2]**2, sig[3]**2 / 2, sig[3]**2 / 2])
    beliefs = []
    for k, veh in enumerate(cfg.vehicles):
        if cfg.noise_free:
            x0 = veh.as_vector()
        else:
            rng = make_rng(epoch_seed(cfg.master_seed, trial, k, _INIT_EPOCH))
            x0 = perturb(veh, rng, sig).as_vector()
        beliefs.append(Belief(x0, M0.copy()))
    return beliefs


def _measure_dfrc(cfg, truth: VehicleTruth, theta_beam, p, seed):
    if cfg.noise_free:
        return h_of(truth, theta_beam, cfg.array)
    return sample(truth, theta_beam, p, cfg.noise, cfg.array, seed)


def _measure_feedback(cfg, truth, th1, th2, alpha, p, seed):
    if cfg.noise_free:
        clean = feedback_h_of(truth, th1, th2, alpha, cfg.array)
        c = math.sqrt(p) * complex(clean[0], clean[1])
        return FeedbackMeasurement(c, clean[2], clean[3], p)
    return feedback_pilot_sample(truth, th1, th2, alpha, p, cfg.noise, cfg.array, seed)


def run_trial(cfg: ScenarioConfig, trial: int) -> list:
    """One Monte-Carlo run; returns one :class:`EpochRecord` per epoch."""
    arr, noise = cfg.array, cfg.noise
    K = cfg.K
    Q_s = noise.state_covariance()
    P_T = cfg.power_budget()
    truths = list(cfg.vehicles)
    beliefs = _initial_beliefs(cfg, trial)
    rx_beam = [None] * K  # two-step angle signalled to each vehicle last epoch
    # the raw, unscaled norm is kept as the literal nearest-state rule;
    # otherwise weights are set per track and epoch
    weights = np.ones(4) if cfg.full_state_distance else None
    records = []
    warm = None  # previous epoch's allocator multipliers
    lost = np.zeros(K, dtype=bool)

    for n in range(1, cfg.n_slots + 1):
        # a lost track is frozen: its beam stays where it last pointed
        preds = [PredictedBelief(b.x_hat, b.x_hat, b.M) if lost[k] else predict(b, cfg.dt, Q_s)
                 for k, b in enumerate(beliefs)]
        th1 = np.array([pr.x_pred_1[0] for pr in preds])
        th2 = np.array([th1[k] if rx_beam[k] is None else rx_beam[k] for k in range(K)])
        decomps = [None if lost[k] else _safe_decomposition(pr, noise, arr)
                   for k, pr in enumerate(preds)]

        # predicted downlink gain: perfect alignment, LoS magnitude at d_hat
        d_hat = np.array([max(pr.x_pred_1[1], 1e-3) for pr in preds])
        rho_pred = arr.n_tx * arr.m_veh * (cfg.tilde_alpha / d_hat) ** 2 / noise.sigma2_c
        p, r_t, r_max, fallback, route, warm = _allocate(cfg, decomps, rho_pred, P_T, warm)
        p = np.maximum(p, 0.0)

        truths = [evolve_exact(t, cfg.dt) for t in truths]
        alpha = [los_channel(t.d, cfg.tilde_alpha, arr.carrier_hz, arr.light_speed)
                 for t in truths]

        # beams may be unlabeled, so the echo of vehicle k arrives on beam_of[k]
        if K > 1 and cfg.shuffle_beams:
            perm = make_rng(epoch_seed(cfg.master_seed, trial, _SHUFFLE_STREAM, n)).permutation(K)
        else:
            perm = np.arange(K)
        beam_of = np.empty(K, dtype=int)
        beam_of[perm] = np.arange(K)  # perm[i] is the vehicle on beam i

        # a beam with no power produces no echo and its track coasts;
        # echoes of lost tracks are ignored
        powered = (p > 0) & ~lost
        new_beliefs = list(beliefs)
        assigned = np.arange(K)
        min_margin = math.inf
        if cfg.baseline == "dfrc":
            ys = [None] * K
            for k in range(K):
                if powered[k]:
                    ys[beam_of[k]] = _measure_dfrc(
                        cfg, truths[k], th1[k], p[k],
                        epoch_seed(cfg.master_seed, trial, k, n))
            live = [i for i in range(K) if ys[i] is not None]
            tracks = [k for k in range(K) if powered[k]]
            if len(live) > 1:
                est = [coarse_estimate(ys[i], arr, th1[tracks]) for i in live]
                ref = [preds[k].x_pred_1 for k in tracks]
                w = weights if weights is not None else np.array(
                    [association_weights(preds[k], p[k], noise, arr) for k in tracks])
                res = associate(ref, est, w)
                min_margin = res.min_margin
                track_of_beam = {live[i]: tracks[res.mapping[i]] for i in range(len(live))}
            else:
                track_of_beam = {i: tracks[0] for i in live}
            for k in range(K):
                if powered[k]:
                    assigned[k] = track_of_beam[beam_of[k]]
            for i in live:
                k = track_of_beam[i]
                q = unit_power_covariance(complex(*preds[k].x_pred_1[3:]), noise, arr) / p[k]
                new_beliefs[k] = _guarded(update, preds[k], ys[i], q, arr, cfg.kalman_form)
        else:
            for k in range(K):
                if not powered[k]:
                    continue
                y = _measure_feedback(cfg, truths[k], th1[k], th2[k], alpha[k], p[k],
                                      epoch_seed(cfg.master_seed, trial, k, n))
                s1, s2, s3 = feedback_variances(p[k], alpha[k], 1.0, noise, arr)
                q = np.array([s1 / 2, s1 / 2, s2, s3])
                new_beliefs[k] = _guarded(update_feedback, preds[k], y, q, th2[k], alpha[k],
                                          arr, cfg.kalman_form)
        for k in range(K):
            if not powered[k] and not lost[k]:
                new_beliefs[k] = Belief(preds[k].x_pred_1, preds[k].M_pred)
            if not lost[k] and not _healthy(new_beliefs[k]):
                log.info("trial %d epoch %d: track %d diverged and is frozen", trial, n, k)
                lost[k] = True
                new_beliefs[k] = beliefs[k]
        beliefs = new_beliefs

        c = np.array([pcrb_theta_d(dc, pk) if dc is not None else (math.nan, math.nan)
                      for dc, pk in zip(decomps, p)])
        gap = np.array([
            np.linalg.norm(dc.crb(pk) - b.M) / np.linalg.norm(b.M) if dc is not None else math.nan
            for dc, pk, b in zip(decomps, p, beliefs)])
        obj_wf = math.nan
        if all(dc is not None for dc in decomps):
            wf_p = water_fill(rho_pred, P_T).p
            obj_wf = float(sum(sum(pcrb_theta_d(dc, pk)) for dc, pk in zip(decomps, wf_p)))
        rho_true = np.array([
            comm_gain_rho(t.theta, th1[k], th2[k], alpha[k], arr, noise.sigma2_c)
            for k, t in enumerate(truths)])
        records.append(EpochRecord(
            trial=trial, epoch=n,
            truth=np.array([t.as_vector() for t in truths]),
            x_pred=np.array([pr.x_pred_1 for pr in preds]),
            x_pred_2=np.array([pr.x_pred_2 for pr in preds]),
            x_est=np.array([b.x_hat for b in beliefs]),
            p=p, rho_pred=rho_pred,
            rate=np.log2(1.0 + p * rho_true),
            rate_pred=np.log2(1.0 + p * rho_pred),
            c11=c[:, 0], c22=c[:, 1], thm1_gap=gap,
            beam_of=beam_of, assigned=assigned, min_margin=min_margin,
            r_t=r_t, r_max=r_max, fallback=fallback, route=route, lost=lost.copy(),
            objective_wf=obj_wf))
        rx_beam = [pr.x_pred_2[0] for pr in preds]
    return records


def run_scenario(cfg: ScenarioConfig, trials: int | None = None,
                 progress=None) -> list:
    """Run ``trials`` (default ``cfg.monte_carlo``) independent trials.

    Returns a list with one list of :class:`EpochRecord` per trial. Trial
    ``t`` only depends on ``(cfg, t)``.
    """
    n = cfg.monte_carlo if trials is None else int(trials)
    if n < 1:
        raise ValueError(f"need at least one trial, got {n}")
    out = []
    for t in range(n):
        out.append(run_trial(cfg, t))
        if progress is not None:
            progress(t + 1, n)
    return out
