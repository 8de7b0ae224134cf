"""CSV and JSON output of a scenario run."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .metrics import Metrics

TRACE_COLUMNS = (
    ("trial", "Monte-Carlo trial index"),
    ("epoch", "epoch index, 1 = first slot after the initial state"),
    ("vehicle_id", "vehicle index in the configuration"),
    ("theta_true_deg", "true angle"),
    ("theta_pred_deg", "one-step predicted angle (transmit beam direction)"),
    ("theta_est_deg", "updated angle estimate"),
    ("d_true_m", "true distance"),
    ("d_pred_m", "one-step predicted distance"),
    ("d_est_m", "updated distance estimate"),
    ("v_true_mps", "true speed"),
    ("v_est_mps", "updated speed estimate"),
    ("p_alloc", "transmit power of this vehicle's beam"),
    ("rho_pred", "predicted downlink gain used by the allocator"),
    ("rate_bpshz", "realised rate with the true angles, bits/s/Hz"),
    ("rate_pred_bpshz", "rate predicted with perfect alignment"),
    ("c11", "predicted angle bound, rad^2"),
    ("c22", "predicted distance bound, m^2"),
    ("sq_err_theta_rad2", "squared angle error of the update"),
    ("sq_err_d_m2", "squared distance error of the update"),
    ("thm1_gap", "relative gap between the predicted bound and the filter MSE"),
    ("sum_rate_bpshz", "realised sum-rate of the epoch"),
    ("r_t", "rate floor of the epoch"),
    ("r_max", "water-filling rate on the predicted gains"),
    ("beam", "beam that carried this vehicle's echo"),
    ("assigned_track", "track that beam was associated with"),
    ("min_margin", "smallest second-best/best distance ratio of the association"),
    ("fallback", "1 if the allocator fell back to water-filling"),
    ("lost", "1 once the track has diverged and is frozen"),
)


class EmitError(OSError):
    """Writing results failed; the message names the path."""


def trace_rows(traces):
    for tr in traces:
        for rec in tr:
            sum_rate = rec.sum_rate
            lost = rec.lost if rec.lost is not None else np.zeros(rec.K, dtype=bool)
            for k in range(rec.K):
                t, xp, xe = rec.truth[k], rec.x_pred[k], rec.x_est[k]
                yield (rec.trial, rec.epoch, k,
                       math.degrees(t[0]), math.degrees(xp[0]), math.degrees(xe[0]),
                       t[1], xp[1], xe[1], t[2], xe[2],
                       rec.p[k], rec.rho_pred[k], rec.rate[k], rec.rate_pred[k],
                       rec.c11[k], rec.c22[k],
                       (xe[0] - t[0]) ** 2, (xe[1] - t[1]) ** 2, rec.thm1_gap[k],
                       sum_rate, rec.r_t, rec.r_max,
                       int(rec.beam_of[k]), int(rec.assigned[k]), rec.min_margin,
                       int(rec.fallback), int(lost[k]))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_trace(path: Path, traces):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# one row per (trial, epoch, vehicle); columns:\n")
        for name, desc in TRACE_COLUMNS:
            fh.write(f"#   {name}: {desc}\n")
        w = csv.writer(fh)
        w.writerow([c for c, _ in TRACE_COLUMNS])
        for row in trace_rows(traces):
            w.writerow([_fmt(v) for v in row])


def write_metrics(path: Path, metrics: Metrics):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# per (epoch, vehicle) averages over trials; angles in degrees\n")
        w = csv.writer(fh)
        w.writerow(Metrics.TABLE_COLUMNS)
        for row in metrics.rows():
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def cdf_quantiles(metrics: Metrics, n: int = 101) -> dict:
    probs = np.linspace(0.0, 1.0, n)
    return {"prob": probs, "rate_bpshz": np.quantile(metrics.cdf_x, probs)}


def emit(traces, metrics: Metrics, cfg: ScenarioConfig, out_dir, trials: int | None = None,
         extra: dict | None = None) -> dict:
    """Write trace.csv, metrics.csv, config_echo.json and summary.json.

    ``config_echo.json`` is the resolved configuration with the trial count
    actually run, so re-running it reproduces ``trace.csv`` exactly.
    Returns the paths written.
    """
    out = Path(out_dir)
    echo = cfg.to_dict()
    if trials is not None:
        echo["monte_carlo"] = int(trials)
    summary = {"scalars": metrics.scalars, "rate_cdf": cdf_quantiles(metrics)}
    if extra:
        summary.update(extra)
    paths = {name: out / name for name in
             ("trace.csv", "metrics.csv", "config_echo.json", "summary.json")}
    current = out
    try:
        out.mkdir(parents=True, exist_ok=True)
        current = paths["trace.csv"]
        write_trace(current, traces)
        current = paths["metrics.csv"]
        write_metrics(current, metrics)
        current = paths["config_echo.json"]
        current.write_text(json.dumps(_jsonable(echo), indent=2) + "\n", encoding="utf-8")
        current = paths["summary.json"]
        current.write_text(json.dumps(_jsonable(summary), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise EmitError(f"cannot write {current}: {exc.strerror or exc}") from exc
    return paths
