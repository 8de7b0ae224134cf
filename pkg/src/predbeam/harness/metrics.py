"""Monte-Carlo summaries: per-epoch RMSE, rates and the rate CDF."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np


def stack(traces, name: str) -> np.ndarray:
    """Array of shape (trials, epochs, ...) of one :class:`EpochRecord` field."""
    if not traces or not traces[0]:
        raise ValueError("need at least one trial with at least one epoch")
    return np.array([[getattr(rec, name) for rec in tr] for tr in traces])


def rmse(sq_err: np.ndarray) -> np.ndarray:
    """Root of the mean over trials (axis 0) of squared errors."""
    return np.sqrt(np.mean(sq_err, axis=0))


def rate_cdf(rates) -> tuple:
    """Empirical CDF over all samples: sorted values and F at each."""
    x = np.sort(np.asarray(rates, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("no rate samples")
    return x, np.arange(1, x.size + 1) / x.size


@dataclass
class Metrics:
    """Per-(epoch, vehicle) tables plus scalar summaries.

    Table arrays have shape (epochs, K). Angles are in degrees.
    """

    epochs: np.ndarray
    rmse_theta_deg: np.ndarray
    rmse_d_m: np.ndarray
    pcrb_rmse_theta_deg: np.ndarray
    pcrb_rmse_d_m: np.ndarray
    mean_rate: np.ndarray
    mean_p: np.ndarray
    theta_true_deg: np.ndarray
    mean_sum_rate: np.ndarray
    mean_objective: np.ndarray
    scalars: dict = field(default_factory=dict)
    cdf_x: np.ndarray = None
    cdf_f: np.ndarray = None

    TABLE_COLUMNS = ("epoch", "vehicle_id", "theta_true_deg", "rmse_theta_deg",
                     "rmse_d_m", "pcrb_rmse_theta_deg", "pcrb_rmse_d_m",
                     "mean_rate_bpshz", "mean_p", "mean_sum_rate_bpshz",
                     "mean_objective")

    def rows(self):
        E, K = self.rmse_theta_deg.shape
        for i in range(E):
            for k in range(K):
                yield (int(self.epochs[i]), k, self.theta_true_deg[i, k],
                       self.rmse_theta_deg[i, k], self.rmse_d_m[i, k],
                       self.pcrb_rmse_theta_deg[i, k], self.pcrb_rmse_d_m[i, k],
                       self.mean_rate[i, k], self.mean_p[i, k],
                       self.mean_sum_rate[i], self.mean_objective[i])


def _nanmean(a, axis=None):
    # all-NaN slices (diverged tracks) are expected and stay NaN
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(a, axis=axis)


def summarize(traces, rate_slack: float = 0.05) -> Metrics:
    """Metrics over trials.

    ``rate_slack`` sets the tolerance of the rate-floor check: an epoch
    counts as meeting the floor when its sum-rate is at least
    ``(1 - rate_slack) * R_t``.
    """
    truth = stack(traces, "truth")          # (T, E, K, 5)
    x_est = stack(traces, "x_est")
    sq_th = (x_est[..., 0] - truth[..., 0]) ** 2
    sq_d = (x_est[..., 1] - truth[..., 1]) ** 2
    c11, c22 = stack(traces, "c11"), stack(traces, "c22")
    rate, p = stack(traces, "rate"), stack(traces, "p")
    r_t = stack(traces, "r_t")
    sum_rate = rate.sum(axis=2)
    objective = (c11 + c22).sum(axis=2)
    epochs = np.array([rec.epoch for rec in traces[0]])

    rmse_th = np.degrees(rmse(sq_th))
    cdf_x, cdf_f = rate_cdf(rate)
    assigned = stack(traces, "assigned")
    lost = stack(traces, "lost")
    fallback = stack(traces, "fallback")
    gap = stack(traces, "thm1_gap")
    mean_rate_v0 = rate[:, :, 0].mean(axis=0)

    scalars = {
        "trials": int(truth.shape[0]),
        "epochs": int(truth.shape[1]),
        "vehicles": int(truth.shape[2]),
        "mean_sum_rate_bpshz": float(sum_rate.mean()),
        "median_rmse_theta_deg": float(np.median(rmse_th)),
        "median_rmse_d_m": float(np.median(rmse(sq_d))),
        "mean_objective": float(_nanmean(objective)),
        "frac_epochs_rate_ok": float(np.mean(sum_rate >= (1.0 - rate_slack) * r_t)),
        "rate_p5_bpshz": float(np.percentile(rate, 5)),
        "max_thm1_gap": float(np.nanmax(gap)) if np.any(np.isfinite(gap)) else math.nan,
        "fallback_epochs": int(fallback.sum()),
        "association_error_epochs": int(np.sum(np.any(
            assigned != np.arange(truth.shape[2]), axis=2))),
        "lost_tracks": int(np.sum(lost[:, -1, :])),
        "peak_epoch_vehicle0": int(epochs[int(np.argmax(mean_rate_v0))]),
    }
    return Metrics(
        epochs=epochs,
        rmse_theta_deg=rmse_th,
        rmse_d_m=rmse(sq_d),
        pcrb_rmse_theta_deg=np.degrees(np.sqrt(_nanmean(c11, axis=0))),
        pcrb_rmse_d_m=np.sqrt(_nanmean(c22, axis=0)),
        mean_rate=rate.mean(axis=0),
        mean_p=p.mean(axis=0),
        theta_true_deg=np.degrees(truth[..., 0].mean(axis=0)),
        mean_sum_rate=sum_rate.mean(axis=0),
        mean_objective=_nanmean(objective, axis=0),
        scalars=scalars, cdf_x=cdf_x, cdf_f=cdf_f)
