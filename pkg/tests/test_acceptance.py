"""One test per acceptance criterion; each prints a single PASS/FAIL line.

The scenario criteria (7 to 10) run the full Monte-Carlo studies and take
several minutes together.
"""

import pytest

from predbeam import checks

CRITERIA = [
    (1, checks.check_theorem1),
    (2, checks.check_jacobians),
    (3, checks.check_kinematics),
    (4, checks.check_water_filling),
    (5, checks.check_allocator),
    (6, checks.check_convexity),
    (7, checks.check_rate_peak),
    (8, checks.check_dfrc_vs_feedback),
    (9, checks.check_tradeoff),
    (10, checks.check_fairness),
]


@pytest.mark.parametrize("number, check", CRITERIA, ids=[f"criterion_{n:02d}" for n, _ in CRITERIA])
def test_criterion(number, check, capsys):
    res = check()
    with capsys.disabled():
        print(f"\ncriterion {number:2d} {res.line()}")
    assert res.passed, res.detail
    assert res.in_time, f"took {res.seconds:.1f}s, limit {res.time_limit:.0f}s"
