import math

import numpy as np
import pytest

from predbeam.array_channel import ArrayConfig, NoiseModel, measurement_variances
from predbeam.harness.config import table_i_vehicles
from predbeam.kinematics import VehicleTruth
from predbeam.measurement import (
    coarse_estimate,
    epoch_seed,
    feedback_h_of,
    feedback_pilot_sample,
    feedback_variances,
    h_of,
    make_rng,
    sample,
)

ARR = ArrayConfig(n_tx=32, n_rx=32, m_veh=16)


def test_noiseless_observation_aligned_beam():
    s = VehicleTruth.from_beta(1.0, 30.0, 15.0, 0.3 - 0.2j)
    y = h_of(s, 1.0, ARR)
    assert np.linalg.norm(y.r_tilde) == pytest.approx(ARR.kappa * abs(s.beta), rel=1e-12)
    assert y.tau == pytest.approx(2 * 30.0 / ARR.light_speed)
    assert y.mu == pytest.approx(2 * 15.0 * math.cos(1.0) * ARR.carrier_hz / ARR.light_speed)


def test_sample_noise_variances():
    s = VehicleTruth.from_beta(1.0, 30.0, 15.0, 0.5 + 0.5j)
    noise = NoiseModel()
    clean = h_of(s, 1.0, ARR)
    p = 0.7
    ys = [sample(s, 1.0, p, noise, ARR, [0, 0, 0, n]) for n in range(2000)]
    s1, s2, s3 = measurement_variances(p, s.beta, 1.0, noise, ARR)
    r_err = np.array([y.r_tilde - clean.r_tilde for y in ys])
    assert np.mean(np.abs(r_err) ** 2) == pytest.approx(s1, rel=0.05)
    assert np.var([y.tau for y in ys]) == pytest.approx(s2, rel=0.1)
    assert np.var([y.mu for y in ys]) == pytest.approx(s3, rel=0.1)


def test_seeded_streams_are_reproducible_and_distinct():
    s = VehicleTruth.from_beta(1.0, 30.0, 15.0, 1.0)
    a = sample(s, 1.0, 1.0, NoiseModel(), ARR, epoch_seed(7, 1, 2, 3))
    b = sample(s, 1.0, 1.0, NoiseModel(), ARR, epoch_seed(7, 1, 2, 3))
    c = sample(s, 1.0, 1.0, NoiseModel(), ARR, epoch_seed(7, 1, 2, 4))
    np.testing.assert_array_equal(a.r_tilde, b.r_tilde)
    assert a.tau == b.tau
    assert not np.array_equal(a.r_tilde, c.r_tilde)
    g = np.random.default_rng(0)
    assert make_rng(g) is g


def test_sample_rejects_zero_power():
    with pytest.raises(ValueError):
        sample(VehicleTruth.from_beta(1.0, 30.0, 15.0, 1.0), 1.0, 0.0, NoiseModel(), ARR)


@pytest.mark.parametrize("theta_deg", [4.59, 30.0, 90.0, 150.0])
def test_coarse_estimate_noiseless(theta_deg):
    arr = ArrayConfig(n_tx=128, n_rx=128, m_veh=32)
    s = VehicleTruth.from_beta(math.radians(theta_deg), 42.0, 12.0, 0.3 + 0.3j)
    est = coarse_estimate(h_of(s, s.theta, arr), arr, [s.theta])
    assert est[0] == pytest.approx(s.theta, abs=1e-6)
    assert est[1] == pytest.approx(42.0, rel=1e-12)
    if abs(math.cos(s.theta)) > 1e-3:
        assert est[2] == pytest.approx(12.0, rel=1e-6)
    else:
        # Doppler carries no speed information broadside
        assert math.isnan(est[2])
    assert est[3] == pytest.approx(abs(s.beta), rel=1e-12)


def test_coarse_estimate_resolves_endfire_wrap():
    # near endfire the phase step sits at -pi; noise that wraps it must not
    # turn a 5 degree echo into a 175 degree one
    arr = ArrayConfig(n_tx=128, n_rx=128, m_veh=32)
    veh = table_i_vehicles()[4]
    refs = [v.theta for v in table_i_vehicles()]
    errs = []
    for n in range(200):
        y = sample(veh, veh.theta, 0.05, NoiseModel(), arr, [1, n])
        errs.append(abs(coarse_estimate(y, arr, refs)[0] - veh.theta))
    assert max(errs) < math.radians(2.0)


def test_feedback_observation_and_variances():
    s = VehicleTruth.from_beta(1.0, 30.0, 15.0, 1.0)
    alpha = 0.5 + 0.1j
    clean = feedback_h_of(s, 1.0, 1.0, alpha, ARR)
    assert abs(complex(clean[0], clean[1])) == pytest.approx(ARR.kappa_comm * abs(alpha))
    s1, s2, s3 = feedback_variances(2.0, alpha, 1.0, NoiseModel(), ARR)
    assert s1 == pytest.approx(NoiseModel().a1**2 / 2.0)
    y = feedback_pilot_sample(s, 1.0, 1.0, alpha, 2.0, NoiseModel(), ARR, [0])
    assert y.as_real().shape == (4,)
