import math

import numpy as np
import pytest

from predbeam.association import associate, default_weights, distance_matrix, features
from predbeam.harness.config import table_i_vehicles
from predbeam.kinematics import evolve_exact


def test_table_vehicles_recovered_after_shuffle():
    prev = table_i_vehicles()
    new = [evolve_exact(v, 0.02) for v in prev]
    rng = np.random.default_rng(0)
    for _ in range(50):
        perm = rng.permutation(len(prev))
        res = associate(prev, [new[j] for j in perm])
        np.testing.assert_array_equal(res.mapping, perm)
        assert not res.tied


def test_separated_states_always_recovered():
    # nearest-neighbour labelling is exact when every displacement is below
    # half the smallest pairwise separation; draw with a factor of three
    rng = np.random.default_rng(1)
    w = np.ones(4)
    for _ in range(1000):
        K = int(rng.integers(2, 9))
        prev = rng.normal(scale=10.0, size=(K, 4))
        sep = min(np.linalg.norm(prev[i] - prev[j]) for i in range(K) for j in range(i))
        delta = sep / 3.0
        step = rng.normal(size=(K, 4))
        step *= (rng.uniform(0, delta, K) / np.linalg.norm(step, axis=1))[:, None]
        perm = rng.permutation(K)
        new = (prev + step)[perm]
        res = associate(list(prev), list(new), w)
        np.testing.assert_array_equal(res.mapping, perm)
        assert res.min_margin > 1.0


def test_common_rescaling_does_not_change_labels():
    rng = np.random.default_rng(2)
    prev = list(rng.normal(size=(5, 4)))
    new = [p + rng.normal(scale=0.05, size=4) for p in prev][::-1]
    w = default_weights()
    a = associate(prev, new, w)
    b = associate(prev, new, 7.5 * w)
    np.testing.assert_array_equal(a.mapping, b.mapping)
    assert a.min_margin == pytest.approx(b.min_margin)


def test_tie_is_reported():
    prev = [np.array([0.0, 0.0, 0.0, 1.0]), np.array([2.0, 0.0, 0.0, 1.0])]
    new = [np.array([1.0, 0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0, 1.0])]
    res = associate(prev, new, np.ones(4))
    assert res.tied
    assert res.min_margin == pytest.approx(1.0)
    assert sorted(res.mapping) == [0, 1]


def test_conflict_uses_optimal_assignment():
    prev = [np.array([0.0, 0, 0, 0]), np.array([10.0, 0, 0, 0])]
    new = [np.array([4.0, 0, 0, 0]), np.array([3.0, 0, 0, 0])]
    res = associate(prev, new, np.ones(4))
    assert res.method == "optimal"
    assert sorted(res.mapping) == [0, 1]


def test_count_mismatch_and_single_vehicle():
    prev = table_i_vehicles()
    with pytest.raises(ValueError):
        associate(prev, prev[:-1])
    with pytest.raises(ValueError):
        associate([], [])
    res = associate(prev[:1], prev[1:2])
    np.testing.assert_array_equal(res.mapping, [0])
    assert math.isinf(res.min_margin)


def test_per_track_weights_and_nan_components():
    prev = [np.array([0.0, 0, 0, 0]), np.array([1.0, 1, 0, 0])]
    new = [np.array([0.0, 1, math.nan, 0])]
    W = np.array([[1.0, 1, 1, 1], [1.0, 10, 1, 1]])
    D = distance_matrix(prev, new, W)
    assert D[0, 0] == pytest.approx(1.0)
    assert D[0, 1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        distance_matrix(prev, new, np.ones(3))


def test_features_reduce_complex_gain():
    x = np.array([0.5, 30.0, 15.0, 0.3, 0.4])
    np.testing.assert_allclose(features(x), [0.5, 30.0, 15.0, 0.5])
    np.testing.assert_array_equal(features(x, full_state=True), x)
    with pytest.raises(ValueError):
        features(np.zeros(3))
