"""CSV data behind each figure, regenerated from built-in scenarios."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np

from ..kinematics import TrajectoryConfig, VehicleTruth, trajectory
from .config import comparison_config, multi_vehicle_config, single_vehicle_config
from .metrics import rate_cdf, stack, summarize
from .output import EmitError
from .run import run_scenario

log = logging.getLogger(__name__)

FIGURES = ("fig3", "fig4", "fig5_6", "fig7_8", "fig9", "fig10", "fig11")
FIG4_ANTENNAS = (16, 32, 64, 128)
FIG7_ANTENNAS = (64, 128)
MULTI_SNRS = (-3.0, 10.0)
ALLOCATORS = ("water_fill", "pcrb_min")


def _write(path: Path, comment: str, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in row])
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def fig3(out: Path, **_):
    """Exact and approximate trajectories, 54 km/h, 100 ms slots."""
    init = VehicleTruth.from_beta(math.radians(18.0), 40.0, 15.0, 1.0)
    cfg = TrajectoryConfig(0.1, 20, init)
    exact, approx = trajectory(cfg, exact=True), trajectory(cfg, exact=False)
    rows = [(n, e.d, a.d, math.degrees(e.theta), math.degrees(a.theta))
            for n, (e, a) in enumerate(zip(exact, approx))]
    return [_write(out / "fig3.csv", "exact vs approximate state recursion",
                   ("slot", "d_exact_m", "d_approx_m", "theta_exact_deg", "theta_approx_deg"),
                   rows)]


def fig4(out: Path, trials=None, n_slots=None, **_):
    """Single-vehicle rate against epoch for several RSU array sizes."""
    rows = []
    for n in FIG4_ANTENNAS:
        cfg = single_vehicle_config(n)
        if n_slots:
            cfg = cfg.replace(n_slots=n_slots)
        m = summarize(run_scenario(cfg, trials))
        rows += [(n, int(e), m.theta_true_deg[i, 0], m.mean_rate[i, 0])
                 for i, e in enumerate(m.epochs)]
    return [_write(out / "fig4.csv", "mean rate over trials per epoch and array size",
                   ("n_antennas", "epoch", "theta_true_deg", "mean_rate_bpshz"), rows)]


def fig5_6(out: Path, trials=None, n_slots=None, **_):
    """Single-vehicle angle and distance RMSE against the predicted bound."""
    cfg = single_vehicle_config(64)
    if n_slots:
        cfg = cfg.replace(n_slots=n_slots)
    m = summarize(run_scenario(cfg, trials))
    rows = [(int(e), m.theta_true_deg[i, 0], m.rmse_theta_deg[i, 0], m.pcrb_rmse_theta_deg[i, 0],
             m.rmse_d_m[i, 0], m.pcrb_rmse_d_m[i, 0]) for i, e in enumerate(m.epochs)]
    return [_write(out / "fig5_6.csv", "RMSE and predicted bound per epoch, N = 64",
                   ("epoch", "theta_true_deg", "rmse_theta_deg", "pcrb_rmse_theta_deg",
                    "rmse_d_m", "pcrb_rmse_d_m"), rows)]


def fig7_8(out: Path, trials=None, n_slots=None, **_):
    """DFRC tracking against the feedback baseline: angle RMSE and rate."""
    rows = []
    for n in FIG7_ANTENNAS:
        for baseline in ("dfrc", "feedback"):
            cfg = comparison_config(n, baseline=baseline)
            if n_slots:
                cfg = cfg.replace(n_slots=n_slots)
            m = summarize(run_scenario(cfg, trials))
            rows += [(n, baseline, int(e), m.theta_true_deg[i, 0], m.rmse_theta_deg[i, 0],
                      m.mean_rate[i, 0]) for i, e in enumerate(m.epochs)]
    return [_write(out / "fig7_8.csv", "angle RMSE and mean rate, DFRC vs feedback",
                   ("n_antennas", "method", "epoch", "theta_true_deg", "rmse_theta_deg",
                    "mean_rate_bpshz"), rows)]


class _MultiRuns:
    """Five-vehicle runs shared by the allocator figures."""

    def __init__(self, trials, n_slots):
        self.trials, self.n_slots = trials, n_slots
        self._cache = {}

    def get(self, snr_db, allocator):
        key = (snr_db, allocator)
        if key not in self._cache:
            cfg = multi_vehicle_config(snr_db, allocator)
            if self.n_slots:
                cfg = cfg.replace(n_slots=self.n_slots)
            self._cache[key] = run_scenario(cfg, self.trials)
        return self._cache[key]


def fig9(out: Path, runs: _MultiRuns, **_):
    rows = []
    for snr in MULTI_SNRS:
        for alloc in ALLOCATORS:
            tr = runs.get(snr, alloc)
            sum_rate = stack(tr, "rate").sum(axis=2).mean(axis=0)
            r_t = stack(tr, "r_t").mean(axis=0)
            epochs = [rec.epoch for rec in tr[0]]
            rows += [(snr, alloc, e, sum_rate[i], r_t[i]) for i, e in enumerate(epochs)]
    return [_write(out / "fig9.csv", "mean realised sum-rate and rate floor per epoch",
                   ("snr_db", "allocator", "epoch", "mean_sum_rate_bpshz", "mean_r_t"), rows)]


def fig10(out: Path, runs: _MultiRuns, n_points: int = 201, **_):
    rows = []
    probs = np.linspace(0.0, 1.0, n_points)
    for snr in MULTI_SNRS:
        for alloc in ALLOCATORS:
            x, _ = rate_cdf(stack(runs.get(snr, alloc), "rate"))
            q = np.quantile(x, probs)
            rows += [(snr, alloc, q[i], probs[i]) for i in range(n_points)]
    return [_write(out / "fig10.csv", "empirical CDF of per-vehicle rates (quantile grid)",
                   ("snr_db", "allocator", "rate_bpshz", "cdf"), rows)]


def fig11(out: Path, runs: _MultiRuns, **_):
    rows = []
    for snr in MULTI_SNRS:
        for alloc in ALLOCATORS:
            m = summarize(runs.get(snr, alloc))
            for i, e in enumerate(m.epochs):
                for k in range(m.pcrb_rmse_theta_deg.shape[1]):
                    rows.append((snr, alloc, int(e), k, m.pcrb_rmse_theta_deg[i, k],
                                 m.pcrb_rmse_d_m[i, k], m.mean_p[i, k]))
    return [_write(out / "fig11.csv", "predicted RMSE per vehicle and epoch",
                   ("snr_db", "allocator", "epoch", "vehicle_id", "pcrb_rmse_theta_deg",
                    "pcrb_rmse_d_m", "mean_p"), rows)]


_BUILDERS = {"fig3": fig3, "fig4": fig4, "fig5_6": fig5_6, "fig7_8": fig7_8,
             "fig9": fig9, "fig10": fig10, "fig11": fig11}


def make_figures(out_dir, names=FIGURES, trials=None, n_slots=None, progress=None) -> list:
    """Write the CSV of every named figure into ``out_dir``; returns the paths.

    ``trials`` and ``n_slots`` override the built-in scenario defaults.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EmitError(f"cannot create {out}: {exc.strerror or exc}") from exc
    unknown = [n for n in names if n not in _BUILDERS]
    if unknown:
        raise ValueError(f"unknown figure(s): {', '.join(unknown)}")
    runs = _MultiRuns(trials, n_slots)
    paths = []
    for name in names:
        if progress is not None:
            progress(name)
        paths += _BUILDERS[name](out, trials=trials, n_slots=n_slots, runs=runs)
    return paths
