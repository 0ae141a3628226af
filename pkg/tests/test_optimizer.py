import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsidiff.errors import LineSearchFailure
from fsidiff.workbench.optimizer import bfgs_optimize


def rosenbrock(x):
    f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
    return f, g


def test_convex_quadratic_in_four_variables():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(4, 4))
    A = M @ M.T + 4 * np.eye(4)
    b = rng.normal(size=4)
    res = bfgs_optimize(lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b), np.zeros(4), max_iters=20,
                        gtol=1e-10, ftol=0.0)
    assert res.iterations <= 20
    assert np.max(np.abs(res.theta - np.linalg.solve(A, b))) < 1e-8


def test_rosenbrock_from_the_standard_start():
    res = bfgs_optimize(rosenbrock, np.array([-1.2, 1.0]), max_iters=200, ftol=0.0)
    assert np.max(np.abs(res.theta - 1.0)) < 1e-6


def test_bounds_are_respected_and_the_constrained_optimum_found():
    res = bfgs_optimize(rosenbrock, np.array([-1.2, 0.2]), bounds=[(-2, 0.5), (-1, 2)], max_iters=200, ftol=0.0)
    assert np.allclose(res.theta, [0.5, 0.25], atol=1e-6)
    assert all(-2 <= t <= 2 for t in np.concatenate(res.theta_history))


@settings(max_examples=15, deadline=None)
@given(x0=st.floats(-2, 2), y0=st.floats(-1, 3))
def test_accepted_losses_never_increase(x0, y0):
    res = bfgs_optimize(rosenbrock, np.array([x0, y0]), max_iters=30)
    assert np.all(np.diff(res.loss_history) <= 0)


def test_failed_trial_points_are_rejected():
    def fun(x):
        if x[0] < 0.2:
            raise ValueError("outside the admissible region")
        return float((x[0] - 0.1) ** 2), np.array([2 * (x[0] - 0.1)])

    res = bfgs_optimize(fun, np.array([1.0]), max_iters=40)
    assert res.theta[0] >= 0.2
    assert res.loss <= res.loss_history[0]


def test_line_search_failure_is_flagged_or_raised():
    wrong = lambda x: (float(x @ x), -2 * x)          # gradient points uphill
    res = bfgs_optimize(wrong, np.array([1.0, 1.0]), max_iters=5)
    assert res.line_search_failed and np.array_equal(res.theta, [1.0, 1.0])
    with pytest.raises(LineSearchFailure):
        bfgs_optimize(wrong, np.array([1.0, 1.0]), max_iters=5, raise_on_failure=True)


def test_start_outside_bounds_is_an_error():
    with pytest.raises(ValueError):
        bfgs_optimize(rosenbrock, np.array([3.0, 0.0]), bounds=[(-1, 1), (-1, 1)])
