import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predbeam.array_channel import (
    ArrayConfig,
    NoiseModel,
    beam_gain,
    comm_gain_rho,
    doppler_of,
    los_channel,
    measurement_variances,
    steering,
    steering_derivative,
    sum_rate,
)

angles = st.floats(min_value=0.01, max_value=math.pi - 0.01)


def test_steering_elements_and_norm():
    a = steering(math.radians(30.0), 8)
    expected = [cmath.exp(-1j * math.pi * i * math.cos(math.radians(30.0))) / math.sqrt(8)
                for i in range(8)]
    np.testing.assert_allclose(a, expected, rtol=0, atol=1e-15)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-15)


@given(angles, st.integers(min_value=1, max_value=256))
def test_steering_unit_norm(theta, n):
    assert np.linalg.norm(steering(theta, n)) == pytest.approx(1.0, abs=1e-12)


@given(angles, angles, st.integers(min_value=2, max_value=128))
def test_beam_gain_bounded_and_one_when_aligned(theta, theta_hat, n):
    assert abs(beam_gain(theta, theta_hat, n)) <= 1.0 + 1e-12
    assert beam_gain(theta, theta, n) == pytest.approx(1.0, abs=1e-12)


def test_beam_gain_closed_form():
    # |sum_i exp(j pi i x)| / n with x = cos(th) - cos(th_hat) (Dirichlet kernel)
    n, th, th_hat = 16, 1.1, 1.13
    x = math.cos(th) - math.cos(th_hat)
    dirichlet = abs(math.sin(n * math.pi * x / 2) / math.sin(math.pi * x / 2)) / n
    assert abs(beam_gain(th, th_hat, n)) == pytest.approx(dirichlet, rel=1e-12)


def test_steering_derivative_fd():
    th, n, h = 0.7, 32, 1e-7
    fd = (steering(th + h, n) - steering(th - h, n)) / (2 * h)
    np.testing.assert_allclose(steering_derivative(th, n), fd, atol=1e-7)


def test_comm_gain_brute_force():
    arr = ArrayConfig(n_tx=16, n_rx=16, m_veh=8)
    th, th1, th2 = 0.9, 0.905, 0.91
    alpha = 0.3 * cmath.exp(0.4j)
    # explicit sums over the elements
    u = lambda t, n: [cmath.exp(-1j * math.pi * i * math.cos(t)) / math.sqrt(n) for i in range(n)]
    rx = sum(w.conjugate() * a for w, a in zip(u(th2, 8), u(th, 8)))
    tx = sum(a.conjugate() * f for a, f in zip(u(th, 16), u(th1, 16)))
    expected = abs(math.sqrt(16 * 8) * alpha * rx * tx) ** 2 / 2.0
    assert comm_gain_rho(th, th1, th2, alpha, arr, 2.0) == pytest.approx(expected, rel=1e-12)


def test_comm_gain_perfect_alignment():
    arr = ArrayConfig(n_tx=64, n_rx=64, m_veh=32)
    rho = comm_gain_rho(1.0, 1.0, 1.0, 0.5, arr, 1.0)
    assert rho == pytest.approx(64 * 32 * 0.25, rel=1e-12)


def test_measurement_variances_formula():
    noise = NoiseModel(sigma2=2.0, a1=1.5, a2=1e-6, a3=3e4, g_mf=10.0)
    arr = ArrayConfig(n_tx=16, n_rx=8)
    beta, delta, p = 0.3 + 0.4j, 0.8, 2.0
    s1, s2, s3 = measurement_variances(p, beta, delta, noise, arr)
    strength = 16 * 8 * 0.25 * 0.64
    assert s1 == pytest.approx(1.5**2 * 2.0 / (10 * 2.0))
    assert s2 == pytest.approx(1e-12 * 2.0 / (10 * strength * 2.0))
    assert s3 == pytest.approx(9e8 * 2.0 / (10 * strength * 2.0))


@pytest.mark.parametrize("p, beta", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_measurement_variances_rejects(p, beta):
    with pytest.raises(ValueError):
        measurement_variances(p, beta, 1.0, NoiseModel(), ArrayConfig())


def test_los_channel_magnitude_and_phase():
    a = los_channel(30.0, 25.0, 30e9)
    assert abs(a) == pytest.approx(25.0 / 30.0, rel=1e-12)
    b = los_channel(30.0 + 0.01, 25.0, 30e9)  # one wavelength further
    assert cmath.phase(b / a) == pytest.approx(0.0, abs=1e-6)


def test_doppler_sign():
    assert doppler_of(20.0, 0.2, 30e9) > 0
    assert doppler_of(20.0, math.pi / 2, 30e9) == pytest.approx(0.0, abs=1e-9)


def test_sum_rate():
    assert sum_rate([1.0, 3.0], [1.0, 1.0]) == pytest.approx(1.0 + 2.0)
    with pytest.raises(ValueError):
        sum_rate([1.0], [1.0, 2.0])


def test_config_validation():
    with pytest.raises(ValueError):
        ArrayConfig(n_tx=0)
    with pytest.raises(ValueError):
        NoiseModel(g_mf=0.5)
    with pytest.raises(ValueError):
        NoiseModel(state_sigmas=(1.0, 1.0, 1.0))
