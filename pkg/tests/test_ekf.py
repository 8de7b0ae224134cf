import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predbeam.array_channel import ArrayConfig, NoiseModel
from predbeam.checks import _fd_jacobian, jacobian_error, random_state
from predbeam.ekf import (
    Belief,
    feedback_jacobian_h,
    g,
    h_real,
    jacobian_g,
    jacobian_h,
    kalman_update,
    measurement_covariance,
    predict,
    update,
)
from predbeam.measurement import feedback_h_of, h_of
from predbeam.pcrb import unit_power_covariance


@pytest.mark.parametrize("arr", [
    ArrayConfig(n_tx=16, n_rx=16),
    ArrayConfig(n_tx=24, n_rx=8),
    ArrayConfig(n_tx=16, n_rx=16, orientation_offset=0.05),
])
def test_jacobian_h_matches_central_differences(arr):
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = random_state(rng)
        th = x[0] + rng.normal(scale=0.02)
        fd = _fd_jacobian(lambda s: h_real(s, th, arr), x, 1e-6)
        assert jacobian_error(jacobian_h(x, th, arr), fd) < 1e-4


def test_jacobian_g_matches_central_differences():
    rng = np.random.default_rng(12)
    for _ in range(50):
        x = random_state(rng)
        fd = _fd_jacobian(lambda s: g(s, 0.05), x, 1e-6)
        assert jacobian_error(jacobian_g(x, 0.05), fd) < 1e-6


def test_feedback_jacobian_matches_central_differences():
    arr = ArrayConfig(n_tx=16, n_rx=16, m_veh=16)
    rng = np.random.default_rng(13)
    for _ in range(20):
        x = random_state(rng)
        th1, th2 = x[0] + 0.01, x[0] - 0.01
        fd = _fd_jacobian(lambda s: feedback_h_of(s, th1, th2, 0.4 + 0.2j, arr), x, 1e-6)
        J = feedback_jacobian_h(x, th1, th2, 0.4 + 0.2j, arr)
        np.testing.assert_allclose(J[:, :3], fd[:, :3], rtol=1e-4, atol=1e-9 * np.abs(fd).max())


def test_h_real_matches_measurement_model():
    arr = ArrayConfig(n_tx=16, n_rx=16)
    x = np.array([0.8, 30.0, 12.0, 0.4, -0.1])
    y = h_of(x, 0.81, arr)
    np.testing.assert_allclose(h_real(x, 0.81, arr), y.as_real(), rtol=1e-14)


@pytest.mark.parametrize("form", ["gain", "woodbury"])
def test_scalar_kalman_oracle(form):
    # textbook scalar filter
    m, h, q, e, x0 = 2.0, 3.0, 0.5, 0.4, 1.0
    k = m * h / (h * h * m + q)
    x, M = kalman_update(np.array([x0]), np.array([[m]]), np.array([e]),
                         np.array([[h]]), np.array([q]), form)
    assert x[0] == pytest.approx(x0 + k * e, rel=1e-13)
    assert M[0, 0] == pytest.approx((1 - k * h) * m, rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_gain_and_woodbury_forms_agree(seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(5, 5))
    M = L @ L.T + 0.1 * np.eye(5)
    H = rng.normal(size=(7, 5))
    q = rng.uniform(0.1, 2.0, 7)
    e = rng.normal(size=7)
    xa, Ma = kalman_update(np.zeros(5), M, e, H, q, "gain")
    xb, Mb = kalman_update(np.zeros(5), M, e, H, q, "woodbury")
    np.testing.assert_allclose(xa, xb, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(Ma, Mb, rtol=1e-8, atol=1e-10)
    np.testing.assert_array_equal(Ma, Ma.T)
    assert np.all(np.linalg.eigvalsh(Ma) > 0)
    # the update never increases uncertainty
    assert np.all(np.linalg.eigvalsh(M - Ma) > -1e-10)


def test_kalman_update_rejects_bad_inputs():
    with pytest.raises(ValueError):
        kalman_update(np.zeros(1), np.eye(1), np.zeros(1), np.ones((1, 1)), [0.0])
    with pytest.raises(ValueError):
        kalman_update(np.zeros(1), np.eye(1), np.zeros(1), np.ones((1, 1)), [1.0], "joseph")


def test_predict_one_and_two_steps():
    x = np.array([0.5, 30.0, 15.0, 0.3, 0.3])
    pred = predict(Belief(x, np.eye(5) * 0.01), 0.02, NoiseModel().state_covariance())
    np.testing.assert_allclose(pred.x_pred_1, g(x, 0.02))
    np.testing.assert_allclose(pred.x_pred_2, g(g(x, 0.02), 0.02))
    np.testing.assert_array_equal(pred.M_pred, pred.M_pred.T)


def test_predict_clamps_into_valid_region():
    x = np.array([math.radians(179.95), 0.05, 0.0, 0.3, 0.3])
    pred = predict(Belief(x, np.eye(5)), 0.02, np.eye(5) * 1e-4)
    assert pred.x_pred_1[0] <= math.radians(179.9)
    assert pred.x_pred_1[1] >= 0.1


def test_update_with_exact_measurement_keeps_state():
    arr = ArrayConfig(n_tx=32, n_rx=32)
    x = np.array([0.6, 25.0, 18.0, 0.5, 0.5])
    pred = predict(Belief(x, np.eye(5) * 1e-4), 0.02, NoiseModel().state_covariance())
    y = h_of(pred.x_pred_1, pred.x_pred_1[0], arr)
    q = unit_power_covariance(complex(*pred.x_pred_1[3:]), NoiseModel(), arr)
    b = update(pred, y, q, arr)
    np.testing.assert_allclose(b.x_hat, pred.x_pred_1, rtol=1e-12)
    assert np.trace(b.M) < np.trace(pred.M_pred)


def test_measurement_covariance_layout():
    q = measurement_covariance(2.0, 3.0, 4.0, 3)
    np.testing.assert_array_equal(q, [1, 1, 1, 1, 1, 1, 3, 4])


def test_belief_shape_checked():
    with pytest.raises(ValueError):
        Belief(np.zeros(4), np.eye(4))
