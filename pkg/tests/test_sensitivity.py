import numpy as np
import pytest

from fsidiff.bodies import CylinderBody, CylinderParams, GaitParams, TailBody
from fsidiff.errors import StaleFactorization
from fsidiff.fsi import fsi_step, simulate
from fsidiff.grid import DomainBoundaryConditions, FluidState, GridSpec, build_operators, sample_velocity
from fsidiff.navier_stokes import FluidConfig
from fsidiff.sensitivity import (ObjectiveSpec, RolloutProblem, SensitivityState, finite_difference_check,
                                 ift_step, objective_thrust)


def _uniform(ops):
    return FluidState(sample_velocity(ops, lambda x, y: (np.ones_like(x), np.zeros_like(x))), np.zeros(ops.n_f))


@pytest.fixture
def cylinder_setup():
    grid = GridSpec.from_extent(32, 32, (0.0, 8.0), (0.0, 8.0))
    ops = build_operators(grid, DomainBoundaryConditions.freestream(1.0))
    body = CylinderBody.for_grid(CylinderParams((3.0, 4.0), 1.0), grid, ("center_x", "center_y", "diameter"))
    cfg = FluidConfig(Re=40.0, dt=0.1, newton_tol=1e-12, newton_max_iters=20)
    return ops, body, cfg


@pytest.fixture
def tail_setup():
    grid = GridSpec.from_extent(32, 32, (-0.5, 1.5), (-1.0, 1.0))
    ops = build_operators(grid, DomainBoundaryConditions.freestream(1.0))
    body = TailBody((0.1, -0.05, 0.0, 0.0), GaitParams.traveling_wave(1.0), parameters=TailBody.SHAPE + ("frequency",),
                    spacing=grid.hx)
    cfg = FluidConfig(Re=320.0, dt=0.05, newton_tol=1e-11, newton_max_iters=20)
    return ops, body, cfg


def _one_step(ops, body, cfg, theta, state):
    return fsi_step(state, body.mesh(theta, state.t + cfg.dt), ops, cfg, factorize_at_solution=True)


@pytest.mark.parametrize("which", ["cylinder_setup", "tail_setup"])
def test_single_step_sensitivities_match_finite_differences(which, request):
    ops, body, cfg = request.getfixturevalue(which)
    theta = body.theta0()
    s0 = _uniform(ops)
    res = _one_step(ops, body, cfg, theta, s0)
    sens = ift_step(res, SensitivityState.zeros(ops.n_u, ops.n_f, theta.size), theta, body, ops, cfg, s0.u)
    for k in range(theta.size):
        h = 1e-6 * max(abs(theta[k]), 1.0)
        e = np.zeros_like(theta)
        e[k] = h
        up = _one_step(ops, body, cfg, theta + e, s0)
        dn = _one_step(ops, body, cfg, theta - e, s0)
        fd_u = (up.state.u - dn.state.u) / (2 * h)
        fd_f = (up.f_tilde - dn.f_tilde) / (2 * h)
        scale_u = max(np.max(np.abs(fd_u)), 1e-12)
        scale_f = max(np.max(np.abs(fd_f)), 1e-12)
        assert np.max(np.abs(sens.du[:, k] - fd_u)) / scale_u < 1e-4
        assert np.max(np.abs(sens.df[:, k] - fd_f)) / scale_f < 1e-4


def test_sensitivities_need_the_step_factorization(cylinder_setup):
    ops, body, cfg = cylinder_setup
    theta = body.theta0()
    s0 = _uniform(ops)
    res = fsi_step(s0, body.mesh(theta), ops, cfg)
    with pytest.raises(StaleFactorization):
        ift_step(res, SensitivityState.zeros(ops.n_u, ops.n_f, 3), theta, body, ops, cfg, s0.u)
    kept = fsi_step(s0, body.mesh(theta), ops, cfg, factorize_at_solution=True)
    other = fsi_step(kept.state, body.mesh(theta), ops, cfg)
    kept.state = other.state
    with pytest.raises(StaleFactorization):
        ift_step(kept, SensitivityState.zeros(ops.n_u, ops.n_f, 3), theta, body, ops, cfg, s0.u)


def test_objective_is_minus_the_integrated_streamwise_body_force(cylinder_setup):
    ops, body, cfg = cylinder_setup
    traj = simulate(_uniform(ops), body, body.theta0(), 3, ops, cfg)
    spec = ObjectiveSpec(dt=cfg.dt)
    expected = -sum(step.body_force(cfg, ops)[0] for step in traj.steps) * cfg.dt
    assert objective_thrust(traj, spec, cfg, ops.grid) == pytest.approx(expected, rel=1e-12)
    # drag on a cylinder means the body pushes the fluid upstream: positive loss
    assert expected > 0
    assert objective_thrust(traj, ObjectiveSpec(dt=cfg.dt, horizon=1), cfg, ops.grid) < expected


def test_rollout_gradient_of_the_cylinder_centre_and_diameter(cylinder_setup):
    ops, body, cfg = cylinder_setup
    problem = RolloutProblem(body, ops, cfg, _uniform(ops), 3)
    report = finite_difference_check(body.theta0(), problem)
    assert report.max_relative_error < 1e-3
    # the geometry is mirror symmetric about the centre line, so y-shifts do not change drag at first order
    assert abs(report.analytic[1]) < 1e-6 * abs(report.analytic[2])


def test_dropping_the_quadrature_weight_term_breaks_shape_gradients(tail_setup):
    ops, body, cfg = tail_setup
    body = TailBody(body.coefficients, body.motion, parameters=("c0",), spacing=body.spacing)
    full = RolloutProblem(body, ops, cfg, _uniform(ops), 2, ObjectiveSpec(dt=cfg.dt))
    partial = RolloutProblem(body, ops, cfg, _uniform(ops), 2,
                             ObjectiveSpec(dt=cfg.dt, include_quadrature_ds=False))
    theta = body.theta0()
    assert finite_difference_check(theta, full).max_relative_error < 1e-4
    assert finite_difference_check(theta, partial).max_relative_error > 1e-2


def test_finite_difference_check_on_a_known_function():
    fun = lambda th: (float(th @ th + np.sin(th[0])), 2 * th + np.array([np.cos(th[0]), 0.0, 0.0]))
    report = finite_difference_check(np.array([0.3, -1.2, 2.0]), fun)
    assert report.max_relative_error < 1e-8
    bad = lambda th: (float(th @ th), 3 * th)
    assert finite_difference_check(np.array([0.3, -1.2]), bad).max_relative_error > 0.4
    with pytest.raises(ValueError):
        finite_difference_check(np.zeros(2), fun, eps=1e-2)


def test_rollout_timing_is_recorded(tail_setup):
    ops, body, cfg = tail_setup
    problem = RolloutProblem(body, ops, cfg, _uniform(ops), 2, record=True)
    loss, grad = problem(body.theta0())
    assert grad.shape == (5,) and np.isfinite(loss)
    assert set(problem.last["timing"]) == {"step", "sensitivity"}
    assert len(problem.last["sensitivities"]) == 2
