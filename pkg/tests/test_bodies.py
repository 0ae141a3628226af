import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsidiff.bodies import (AngleTrajectory, CubicProfile, CylinderBody, CylinderParams, GaitParams, LinkChain,
                            TailBody, boundary_jacobian, cylinder_boundary, gait_angles,
                            gait_frequency_derivative, tail_forward_kinematics)
from fsidiff.errors import BodyTooLargeForDomain
from fsidiff.grid import GridSpec


def _fd_jacobian(body, theta, t, eps=1e-6):
    cols_x, cols_u, cols_s = [], [], []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = eps
        mp, mm = body.mesh(theta + e, t), body.mesh(theta - e, t)
        cols_x.append((np.concatenate([mp.positions[:, 0], mp.positions[:, 1]])
                       - np.concatenate([mm.positions[:, 0], mm.positions[:, 1]])) / (2 * eps))
        cols_u.append((mp.ub - mm.ub) / (2 * eps))
        cols_s.append((mp.s - mm.s) / (2 * eps))
    return np.column_stack(cols_x), np.column_stack(cols_u), np.column_stack(cols_s)


def test_cylinder_nodes_and_quadrature():
    mesh = cylinder_boundary(CylinderParams((1.0, 2.0), 0.8), target_spacing=0.05)
    assert mesh.n_nodes == round(np.pi * 0.8 / 0.05)
    r = np.hypot(mesh.positions[:, 0] - 1.0, mesh.positions[:, 1] - 2.0)
    assert np.allclose(r, 0.4)
    assert mesh.s.sum() == pytest.approx(np.pi * 0.8)
    assert np.all(mesh.velocities == 0.0)


def test_cylinder_must_fit_in_the_grid():
    grid = GridSpec.from_extent(20, 20, (0, 2), (0, 2))
    with pytest.raises(BodyTooLargeForDomain):
        cylinder_boundary(CylinderParams((1.0, 1.0), 1.8), grid)
    with pytest.raises(ValueError):
        CylinderParams((0, 0), -1.0)


def test_cylinder_jacobian_matches_finite_differences():
    body = CylinderBody(CylinderParams((0.3, -0.2), 1.1), 40, ("center_x", "center_y", "diameter"))
    theta = body.theta0()
    jac = body.boundary_jacobian(theta)
    dx, du, ds = _fd_jacobian(body, theta, 0.0)
    assert np.allclose(jac.dx, dx, atol=1e-8)
    assert np.allclose(jac.du, du, atol=1e-8)
    assert np.allclose(jac.ds, ds, atol=1e-8)


def test_straight_chain_joint_positions():
    chain = LinkChain.uniform(CubicProfile((0.1, 0.0, 0.0, 0.0)), length=2.0, n_links=4, base=(1.0, 1.0),
                              heading=np.pi / 2)
    J = chain.joint_positions(np.zeros(4))
    assert np.allclose(J[:, 0], 1.0)
    assert np.allclose(J[:, 1], 1.0 + np.arange(5) * 0.5)


@settings(max_examples=30, deadline=None)
@given(angles=st.lists(st.floats(-0.6, 0.6), min_size=6, max_size=6))
def test_joint_motion_preserves_link_lengths(angles):
    chain = LinkChain.uniform(CubicProfile((0.1, -0.05, 0.0, 0.0)), length=1.2, n_links=6)
    J = chain.joint_positions(np.array(angles))
    assert np.allclose(np.linalg.norm(np.diff(J, axis=0), axis=1), 0.2, atol=1e-14)


def test_rotating_the_base_heading_rotates_the_outline():
    prof = CubicProfile((0.08, -0.03, 0.0, 0.0))
    angles, rates = np.linspace(-0.1, 0.2, 10), np.linspace(0.3, -0.2, 10)
    a = tail_forward_kinematics(LinkChain.uniform(prof, heading=0.0), angles, rates, spacing=0.05)
    b = tail_forward_kinematics(LinkChain.uniform(prof, heading=0.7), angles, rates, spacing=0.05)
    R = np.array([[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]])
    assert np.allclose(a.positions @ R.T, b.positions, atol=1e-14)
    assert np.allclose(a.velocities @ R.T, b.velocities, atol=1e-14)


def test_tail_node_velocities_are_time_derivatives_of_positions():
    gait = GaitParams.traveling_wave(1.3, 10, 0.2)
    body = TailBody((0.1, -0.05, 0.0, 0.0), gait, spacing=0.04)
    t, eps = 0.37, 1e-6
    fd = (body.mesh(None, t + eps).positions - body.mesh(None, t - eps).positions) / (2 * eps)
    assert np.allclose(body.mesh(None, t).velocities, fd, atol=1e-7)


def test_tail_outline_is_closed_and_node_spacing_is_bounded():
    body = TailBody((0.1, -0.05, 0.0, 0.0), GaitParams.traveling_wave(1.0), spacing=0.05)
    mesh = body.mesh(None, 0.2)
    seg = np.linalg.norm(np.roll(mesh.positions, -1, axis=0) - mesh.positions, axis=1)
    # the fin is a single line of nodes, so one segment returns from its tip to the other side
    assert np.sort(seg)[-2] < 1.6 * 0.05
    assert seg.max() < 0.1 + 2 * 0.05 + 0.05
    assert seg.min() > 0.3 * 0.05
    assert mesh.s.sum() == pytest.approx(seg.sum())


@pytest.mark.parametrize("params", [TailBody.SHAPE, TailBody.SHAPE + ("frequency",)])
def test_tail_jacobian_matches_finite_differences(params):
    body = TailBody((0.1, -0.05, 0.02, -0.01), GaitParams.traveling_wave(1.0), parameters=params, spacing=0.05)
    theta = body.theta0()
    for t in (0.0, 0.31):
        jac = boundary_jacobian(body, theta, t)
        dx, du, ds = _fd_jacobian(body, theta, t)
        assert np.allclose(jac.dx, dx, atol=1e-7)
        assert np.allclose(jac.du, du, atol=1e-7)
        assert np.allclose(jac.ds, ds, atol=1e-7)


def test_tail_profile_floor_is_enforced():
    with pytest.raises(ValueError):
        TailBody((0.02, -0.05, 0.0, 0.0), GaitParams.traveling_wave(1.0))
    body = TailBody((0.1, -0.05, 0.0, 0.0), GaitParams.traveling_wave(1.0), w_min=0.03)
    with pytest.raises(ValueError):
        body.mesh(np.array([0.1, -0.08, 0.0, 0.0]))


def test_gait_rates_and_frequency_derivative():
    gait = GaitParams(1.7, (0.1, 0.2, 0.3), (0.0, 0.5, 1.0), (0.0, 0.1, 0.0))
    t, eps = 0.43, 1e-6
    a0, r0 = gait_angles(gait, t)
    ap, _ = gait_angles(gait, t + eps)
    am, _ = gait_angles(gait, t - eps)
    assert np.allclose(r0, (ap - am) / (2 * eps), atol=1e-8)
    up = GaitParams(1.7 + eps, gait.amplitudes, gait.phases, gait.offsets)
    dn = GaitParams(1.7 - eps, gait.amplitudes, gait.phases, gait.offsets)
    da, dr = gait_frequency_derivative(gait, t)
    assert np.allclose(da, (gait_angles(up, t)[0] - gait_angles(dn, t)[0]) / (2 * eps), atol=1e-8)
    assert np.allclose(dr, (gait_angles(up, t)[1] - gait_angles(dn, t)[1]) / (2 * eps), atol=1e-7)
    with pytest.raises(ValueError):
        GaitParams(0.0, (0.1,), (0.0,))


def test_angle_trajectory_is_periodic_and_scaled(tmp_path):
    t = np.linspace(0.0, 0.5, 31)
    th = np.column_stack([0.1 * np.sin(4 * np.pi * t), 0.2 * np.cos(4 * np.pi * t)])
    path = tmp_path / "angles.txt"
    np.savetxt(path, np.column_stack([t, th]))
    traj = AngleTrajectory.load(path, time_scale=0.5)
    assert traj.periodic and traj.n_joints == 2
    # nondimensional time 1.0 is 0.5 s, one full table period later
    a0, r0 = traj(0.0)
    a1, r1 = traj(1.0)
    assert np.allclose(a0, a1, atol=1e-12)
    ang, rate = traj(0.2)
    assert np.allclose(ang, [0.1 * np.sin(0.4 * np.pi), 0.2 * np.cos(0.4 * np.pi)], atol=2e-4)
    assert rate[0] == pytest.approx(0.5 * 0.1 * 4 * np.pi * np.cos(0.4 * np.pi), rel=1e-2)
    with pytest.raises(ValueError):
        AngleTrajectory(t[::-1], th)


def test_supplied_angle_table_drives_ten_joints_at_three_hertz():
    from importlib.resources import files
    traj = AngleTrajectory.load(files("fsidiff") / "data" / "tail_3hz_angles.txt")
    assert traj.n_joints == 10 and traj.periodic
    a0, _ = traj(0.0)
    assert np.allclose(traj(1.0 / 3.0)[0], a0, atol=1e-8)
