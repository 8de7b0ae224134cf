"""Scenario configuration and its JSON form.

The JSON file mirrors :class:`ScenarioConfig` field for field; ``array`` and
``noise`` are nested objects with the fields of :class:`ArrayConfig` and
:class:`NoiseModel`. Vehicles are written as
``{"theta_deg": .., "d": .., "v": .., "beta": [re, im]}`` (or ``"theta"``
in radians) where ``beta`` is the initial reflection coefficient. Unknown
keys are rejected at every level.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..array_channel import ArrayConfig, NoiseModel
from ..kinematics import VehicleTruth

ALLOCATORS = ("uniform", "water_fill", "pcrb_min")
BASELINES = ("dfrc", "feedback")
SNR_MODES = ("auto", "per_beam", "total")
KALMAN_FORMS = ("gain", "woodbury")


class ConfigError(ValueError):
    """Invalid or unreadable scenario configuration."""


@dataclass
class ScenarioConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    dt: float = 0.02
    n_slots: int = 1000
    vehicles: list = field(default_factory=lambda: [single_vehicle()])
    tilde_alpha: float = 1.0
    snr_db: float = 10.0
    # per_beam: every beam gets p = 10^(snr/10) sigma^2;
    # total: the budget P_T = 10^(snr/10) sigma^2 is split by the allocator
    snr_mode: str = "auto"
    allocator: str = "uniform"
    rate_threshold_frac: float = 0.9
    baseline: str = "dfrc"
    monte_carlo: int = 50
    master_seed: int = 0
    kalman_form: str = "gain"
    full_state_distance: bool = False
    shuffle_beams: bool = True
    # noiseless truth, measurements and initial belief; the filter still
    # uses the model covariances
    noise_free: bool = False

    def __post_init__(self):
        if self.n_slots < 1:
            raise ConfigError(f"n_slots must be at least 1, got {self.n_slots}")
        if not self.vehicles:
            raise ConfigError("at least one vehicle is required")
        if not 0.0 <= self.rate_threshold_frac <= 1.0:
            raise ConfigError(
                f"rate_threshold_frac must lie in [0, 1], got {self.rate_threshold_frac}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.monte_carlo < 1:
            raise ConfigError(f"monte_carlo must be at least 1, got {self.monte_carlo}")
        if not math.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")
        for name, value, allowed in (("allocator", self.allocator, ALLOCATORS),
                                     ("baseline", self.baseline, BASELINES),
                                     ("snr_mode", self.snr_mode, SNR_MODES),
                                     ("kalman_form", self.kalman_form, KALMAN_FORMS)):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
        if self.snr_mode == "auto":
            self.snr_mode = "per_beam" if len(self.vehicles) == 1 else "total"
        for veh in self.vehicles:
            if not (0.0 < veh.theta < math.pi and veh.d > 0):
                raise ConfigError(f"vehicle state out of range: {veh}")

    @property
    def K(self) -> int:
        return len(self.vehicles)

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def power_budget(self) -> float:
        """Total transmit power summed over the beams."""
        p = self.snr_linear * self.noise.sigma2
        return p * self.K if self.snr_mode == "per_beam" else p

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # --- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if f.name in ("array", "noise"):
                val = dataclasses.asdict(val)
                if "state_sigmas" in val:
                    val["state_sigmas"] = list(val["state_sigmas"])
            elif f.name == "vehicles":
                val = [vehicle_to_dict(v) for v in val]
            out[f.name] = val
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, "config")
        kw = dict(data)
        try:
            if "array" in kw:
                _reject_unknown(kw["array"], _field_names(ArrayConfig), "array")
                kw["array"] = ArrayConfig(**kw["array"])
            if "noise" in kw:
                _reject_unknown(kw["noise"], _field_names(NoiseModel), "noise")
                noise = dict(kw["noise"])
                if "state_sigmas" in noise:
                    noise["state_sigmas"] = tuple(float(s) for s in noise["state_sigmas"])
                kw["noise"] = NoiseModel(**noise)
            if "vehicles" in kw:
                kw["vehicles"] = [vehicle_from_dict(v) for v in kw["vehicles"]]
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _field_names(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


def _reject_unknown(data, allowed: set, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def vehicle_to_dict(v: VehicleTruth) -> dict:
    # radians, so that reading the echo back is exact
    return {"theta": v.theta, "d": v.d, "v": v.v, "beta": [v.beta.real, v.beta.imag]}


def vehicle_from_dict(data) -> VehicleTruth:
    _reject_unknown(data, {"theta", "theta_deg", "d", "v", "beta"}, "vehicle")
    if ("theta" in data) == ("theta_deg" in data):
        raise ConfigError("vehicle needs exactly one of theta (rad) or theta_deg")
    missing = {"d", "v", "beta"} - set(data)
    if missing:
        raise ConfigError(f"vehicle is missing {', '.join(sorted(missing))}")
    beta = data["beta"]
    if not (isinstance(beta, (list, tuple)) and len(beta) == 2):
        raise ConfigError("vehicle beta must be a [real, imag] pair")
    theta = float(data["theta"]) if "theta" in data else math.radians(float(data["theta_deg"]))
    return VehicleTruth.from_beta(theta, float(data["d"]), float(data["v"]),
                                  complex(float(beta[0]), float(beta[1])))


def load_config(path) -> ScenarioConfig:
    """Read a JSON config; OSError propagates, bad content raises ConfigError."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return ScenarioConfig.from_dict(data)


# --- built-in scenarios ------------------------------------------------------

TABLE_I = (
    # theta (deg), d (m), v (m/s), initial reflection coefficient
    (7.66, 30.0, 20.0, 2 + 2j),
    (6.56, 35.0, 18.0, 1 + 1j),
    (5.74, 40.0, 16.0, 0.5 + 0.5j),
    (5.10, 45.0, 12.0, 0.3 + 0.3j),
    (4.59, 50.0, 10.0, 0.2 + 0.2j),
)


def single_vehicle(v: float = 20.0, beta: complex = 0.5 + 0.5j) -> VehicleTruth:
    return VehicleTruth.from_beta(math.radians(9.2), 25.0, v, beta)


def table_i_vehicles() -> list:
    return [VehicleTruth.from_beta(math.radians(t), d, v, b) for t, d, v, b in TABLE_I]


def single_vehicle_config(n_antennas: int = 64, **kw) -> ScenarioConfig:
    """One vehicle from 9.2 deg, 25 m, 20 m/s, M = 32, 10 dB per beam."""
    array = ArrayConfig(n_tx=n_antennas, n_rx=n_antennas, m_veh=32)
    base = dict(array=array, vehicles=[single_vehicle()], snr_db=10.0,
                snr_mode="per_beam", allocator="uniform")
    base.update(kw)
    return ScenarioConfig(**base)


def comparison_config(n_antennas: int = 128, baseline: str = "dfrc", **kw) -> ScenarioConfig:
    """DFRC versus feedback: 18 m/s, tilde alpha = 25, N_t = N_r = M."""
    array = ArrayConfig(n_tx=n_antennas, n_rx=n_antennas, m_veh=n_antennas)
    s = math.sqrt(2.0) / 2.0
    base = dict(array=array, vehicles=[single_vehicle(18.0, complex(s, s))],
                tilde_alpha=25.0, snr_db=10.0, snr_mode="per_beam",
                allocator="uniform", baseline=baseline)
    base.update(kw)
    return ScenarioConfig(**base)


def multi_vehicle_config(snr_db: float = -3.0, allocator: str = "pcrb_min", **kw) -> ScenarioConfig:
    """Five vehicles of the multi-vehicle table, N_t = N_r = 128, M = 32."""
    array = ArrayConfig(n_tx=128, n_rx=128, m_veh=32)
    base = dict(array=array, vehicles=table_i_vehicles(), snr_db=snr_db,
                snr_mode="total", allocator=allocator, rate_threshold_frac=0.9,
                kalman_form="woodbury", n_slots=100)
    base.update(kw)
    return ScenarioConfig(**base)
