import numpy as np
import pytest

from fsidiff.bodies import CylinderBody, CylinderParams, GaitParams, TailBody
from fsidiff.errors import NodeOutsideDomain
from fsidiff.fsi import fsi_step, simulate
from fsidiff.grid import DomainBoundaryConditions, FluidState, GridSpec, build_operators, sample_velocity
from fsidiff.immersed import BoundaryMesh, interpolation_matrix
from fsidiff.navier_stokes import FluidConfig, ns_step


def _uniform(ops, ux=1.0, uy=0.0):
    return FluidState(sample_velocity(ops, lambda x, y: (np.full_like(x, ux), np.full_like(x, uy))),
                      np.zeros(ops.n_f))


@pytest.fixture
def channel():
    grid = GridSpec.from_extent(32, 24, (0.0, 8.0), (-3.0, 3.0))
    return build_operators(grid, DomainBoundaryConditions.freestream(1.0))


def test_without_a_body_the_step_is_the_plain_fluid_step(channel):
    cfg = FluidConfig(Re=50.0, dt=0.1)
    s0 = FluidState.from_field(channel, lambda x, y: (1.0 + 0.1 * np.sin(x) * np.cos(y), 0.05 * np.cos(x)))
    plain, _ = ns_step(s0, channel, cfg)
    coupled = fsi_step(s0, BoundaryMesh.empty(), channel, cfg)
    assert np.array_equal(plain.u, coupled.state.u)
    assert np.array_equal(plain.p, coupled.state.p)
    assert coupled.f_tilde.size == 0


def test_body_moving_with_the_stream_leaves_it_untouched(channel):
    ang = 2 * np.pi * np.arange(24) / 24
    pos = np.column_stack([3.0 + 0.5 * np.cos(ang), 0.5 * np.sin(ang)])
    mesh = BoundaryMesh(pos, np.tile([1.0, 0.0], (24, 1)), np.pi / 24)
    s0 = _uniform(channel)
    res = fsi_step(s0, mesh, channel, FluidConfig(Re=40.0, dt=0.1))
    assert np.max(np.abs(res.state.u - s0.u)) < 1e-12
    assert np.max(np.abs(res.f_tilde)) < 1e-10


def test_stationary_cylinder_in_a_box_at_rest_stays_at_rest():
    ops = build_operators(GridSpec.from_extent(16, 16, (0, 4), (0, 4)), DomainBoundaryConditions.cavity())
    mesh = CylinderBody.for_grid(CylinderParams((2.0, 2.0), 1.0), ops.grid).mesh()
    res = fsi_step(FluidState.rest(ops), mesh, ops, FluidConfig(Re=10.0, dt=0.1))
    assert np.all(res.state.u == 0.0) and np.all(res.f_tilde == 0.0)


def test_constraints_hold_and_drag_is_positive_with_no_lift(channel):
    cfg = FluidConfig(Re=20.0, dt=0.1)
    body = CylinderBody.for_grid(CylinderParams((3.0, 0.0), 1.0), channel.grid)
    mesh = body.mesh()
    E = interpolation_matrix(mesh, channel)
    s = _uniform(channel)
    f = None
    for k in range(5):
        res = fsi_step(s, mesh, channel, cfg, f, E=E)
        s, f = res.state, res.f_tilde
        assert np.max(np.abs(E @ s.u - mesh.ub)) < 1e-8
        assert s.divergence_residual(channel) < 1e-8
    F = res.hydrodynamic_force(cfg, channel)
    assert F[0] > 0
    assert abs(F[1]) < 1e-8 * abs(F[0])


def test_force_on_the_fluid_equals_the_spread_multipliers(channel):
    cfg = FluidConfig(Re=20.0, dt=0.1)
    mesh = CylinderBody.for_grid(CylinderParams((3.0, 0.0), 1.0), channel.grid).mesh()
    res = fsi_step(_uniform(channel), mesh, channel, cfg)
    g = channel.grid
    spread = -g.hx * g.hy * (res.E.T @ res.f_tilde)
    n_ux = channel.layout.n_ux
    assert np.allclose(res.body_force(cfg, channel), [spread[:n_ux].sum(), spread[n_ux:].sum()], rtol=1e-12)


def test_simulate_rolls_out_a_moving_tail_and_reports_each_step():
    grid = GridSpec.from_extent(32, 32, (-0.5, 1.5), (-1.0, 1.0))
    ops = build_operators(grid, DomainBoundaryConditions.freestream(1.0))
    body = TailBody((0.1, -0.05, 0.0, 0.0), GaitParams.traveling_wave(1.0), spacing=grid.hx)
    cfg = FluidConfig(Re=320.0, dt=0.05)
    seen = []
    traj = simulate(_uniform(ops), body, body.theta0(), 4, ops, cfg, callback=lambda k, r: seen.append(k))
    assert seen == [0, 1, 2, 3]
    assert np.allclose(traj.times(), [0.05, 0.1, 0.15, 0.2])
    for step in traj.steps:
        E = interpolation_matrix(step.mesh, ops)
        assert np.max(np.abs(E @ step.state.u - step.mesh.ub)) < 1e-8
    short = simulate(_uniform(ops), body, body.theta0(), 2, ops, cfg, keep_states=False)
    assert len(short) == 1 and short.final.t == pytest.approx(0.1)


def test_body_leaving_the_domain_is_reported():
    grid = GridSpec.from_extent(16, 16, (-0.2, 0.8), (-0.5, 0.5))
    ops = build_operators(grid, DomainBoundaryConditions.freestream(1.0))
    body = TailBody((0.1, -0.05, 0.0, 0.0), GaitParams.traveling_wave(1.0), spacing=grid.hx)
    with pytest.raises(NodeOutsideDomain):
        simulate(_uniform(ops), body, body.theta0(), 1, ops, FluidConfig(Re=100.0, dt=0.05))
