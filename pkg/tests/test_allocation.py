import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predbeam.allocation import (
    InfeasibleAllocation,
    pcrb_allocate,
    uniform_allocation,
    verify_kkt,
    water_fill,
)
from predbeam.array_channel import sum_rate
from predbeam.checks import random_feasible, random_problem
from predbeam.pcrb import AllocationProblem


def test_water_fill_worked_examples():
    # gamma - 1 + gamma - 1/4 = 1  ->  gamma = 1.125
    np.testing.assert_allclose(water_fill([1.0, 4.0], 1.0).p, [0.125, 0.875], atol=1e-12)
    # the weak channel stays off: gamma = 0.5 + 0.001 < 1
    p = water_fill([1.0, 1000.0], 0.5).p
    assert p[0] == 0.0
    assert p[1] == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 1e3), min_size=1, max_size=8), st.floats(0.01, 100.0))
def test_water_fill_is_rate_optimal(rho, P_T):
    rho = np.array(rho)
    wf = water_fill(rho, P_T)
    assert wf.p.sum() == pytest.approx(P_T, rel=1e-9)
    assert np.all(wf.p >= 0)
    rng = np.random.default_rng(0)
    for q in rng.dirichlet(np.ones(len(rho)), 50) * P_T:
        assert sum_rate(q, rho) <= wf.achieved_rate + 1e-9


def test_water_fill_rejects_bad_input():
    with pytest.raises(ValueError):
        water_fill([1.0], 0.0)
    with pytest.raises(ValueError):
        water_fill([0.0, 0.0], 1.0)


def test_two_vehicle_grid_oracle():
    rng = np.random.default_rng(21)
    for _ in range(20):
        prob = random_problem(rng, K=2)
        res = pcrb_allocate(prob)
        grid = np.linspace(0.0, prob.P_T, 20001)
        ps = np.column_stack([grid, prob.P_T - grid])
        rates = np.array([sum_rate(p, prob.rho) for p in ps])
        ok = rates >= prob.R_t - 1e-12
        best = min(prob.objective(p) for p in ps[ok])
        assert res.objective <= best * (1 + 1e-9) + 1e-15
        assert res.achieved_rate >= prob.R_t * (1 - 1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1_000_000))
def test_allocation_kkt_and_feasibility(seed):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng)
    res = pcrb_allocate(prob)
    assert res.p.sum() == pytest.approx(prob.P_T, rel=1e-9)
    assert np.all(res.p >= 0)
    assert res.achieved_rate >= prob.R_t - 1e-9 * max(1.0, prob.R_t)
    assert verify_kkt(prob, res.p).residual < 1e-6
    for q in random_feasible(prob, rng, 20):
        assert res.objective <= prob.objective(q) * (1 + 1e-9)


def test_infeasible_rate_floor():
    prob = random_problem(np.random.default_rng(1), K=3, rate_frac=0.5)
    prob.R_t = water_fill(prob.rho, prob.P_T).achieved_rate * 1.01
    with pytest.raises(InfeasibleAllocation) as info:
        pcrb_allocate(prob)
    assert info.value.required == prob.R_t


def test_rate_floor_at_maximum_gives_water_filling():
    prob = random_problem(np.random.default_rng(2), K=3, rate_frac=0.5)
    wf = water_fill(prob.rho, prob.P_T)
    prob.R_t = wf.achieved_rate
    res = pcrb_allocate(prob)
    np.testing.assert_allclose(res.p, wf.p, atol=1e-9 * prob.P_T)


def test_warm_start_reaches_same_solution():
    rng = np.random.default_rng(3)
    for _ in range(10):
        prob = random_problem(rng, rate_frac=0.9)
        cold = pcrb_allocate(prob)
        warm = pcrb_allocate(prob, warm_start=cold.info)
        np.testing.assert_allclose(warm.p, cold.p, rtol=1e-6, atol=1e-9 * prob.P_T)


def test_zero_information_problem_still_allocates():
    prob = AllocationProblem(np.zeros((2, 5)), np.ones((2, 5)), [1.0, 10.0], 1.0, R_t=0.5)
    res = pcrb_allocate(prob)
    assert res.p.sum() == pytest.approx(1.0)
    assert res.achieved_rate >= 0.5 - 1e-9


def test_uniform_allocation():
    np.testing.assert_array_equal(uniform_allocation(4, 2.0), [0.5] * 4)
