import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsidiff.errors import GridTooSmall
from fsidiff.grid import (DomainBoundaryConditions, EdgeCondition, FluidState, GridSpec, build_operators,
                          cell_centered, convect, convect_jacobian, face_coordinates, sample_velocity,
                          velocity_from_streamfunction, vorticity_field)

from conftest import random_bc


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(3, 14), ny=st.integers(3, 14), hx=st.floats(0.05, 2.0), hy=st.floats(0.05, 2.0),
       seed=st.integers(0, 2 ** 31 - 1))
def test_divergence_is_exactly_minus_gradient_transpose(nx, ny, hx, hy, seed):
    ops = build_operators(GridSpec(nx, ny, hx, hy), random_bc(np.random.default_rng(seed)))
    assert abs(ops.D + ops.G.T).max() == 0.0


def test_grid_needs_three_cells_each_way():
    with pytest.raises(GridTooSmall):
        GridSpec(2, 5, 0.1, 0.1)
    with pytest.raises(TypeError):
        GridSpec(4.5, 5, 0.1, 0.1)


def test_interior_laplacian_row_is_five_point():
    grid = GridSpec(4, 4, 0.5, 0.25)
    ops = build_operators(grid, DomainBoundaryConditions.cavity())
    lay = ops.layout
    row = ops.L.getrow(lay.ux_index(2, 1)).toarray().ravel()
    nz = np.flatnonzero(row)
    assert nz.size == 5
    assert row[lay.ux_index(2, 1)] == pytest.approx(-2 / 0.25 - 2 / 0.0625)
    assert row[lay.ux_index(1, 1)] == pytest.approx(1 / 0.25)
    assert row[lay.ux_index(2, 2)] == pytest.approx(1 / 0.0625)


def test_laplacian_exact_for_quadratics_away_from_boundary():
    grid = GridSpec.from_extent(10, 8, (0.0, 1.0), (0.0, 2.0))
    ops = build_operators(grid, DomainBoundaryConditions.uniform((0.3, -0.2)))
    u = sample_velocity(ops, lambda x, y: (x ** 2 + 3 * y ** 2, x * y + y ** 2))
    lu = ops.L @ u
    lay = ops.layout
    iu, ju = lay.ux_faces()
    inner = (iu > 1) & (iu < grid.nx - 1) & (ju > 0) & (ju < grid.ny - 1)
    assert np.allclose(lu[:lay.n_ux][inner], 8.0, atol=1e-9)
    iv, jv = lay.uy_faces()
    inner = (iv > 0) & (iv < grid.nx - 1) & (jv > 1) & (jv < grid.ny - 1)
    assert np.allclose(lu[lay.n_ux:][inner], 2.0, atol=1e-9)


@pytest.mark.parametrize("bc", [DomainBoundaryConditions.uniform((0.7, -0.4)),
                                DomainBoundaryConditions.freestream(1.3)])
def test_uniform_flow_satisfies_discrete_equations(bc):
    ops = build_operators(GridSpec.from_extent(9, 7, (0, 3), (0, 2)), bc)
    v = bc.left.velocity
    u = sample_velocity(ops, lambda x, y: (np.full_like(x, v[0]), np.full_like(x, v[1])))
    assert np.max(np.abs(ops.D @ u + ops.bc_D)) < 1e-13
    assert np.max(np.abs(ops.L @ u + ops.bc_L)) < 1e-12
    assert np.max(np.abs(convect(u, ops))) < 1e-12


def test_convection_jacobian_matches_finite_differences(freestream_ops, rng):
    ops = freestream_ops
    u = rng.normal(size=ops.n_u)
    du = rng.normal(size=ops.n_u)
    eps = 1e-6
    fd = (convect(u + eps * du, ops) - convect(u - eps * du, ops)) / (2 * eps)
    assert np.allclose(convect_jacobian(u, ops) @ du, fd, rtol=1e-7, atol=1e-7)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(0.5, 4.0))
def test_streamfunction_velocity_is_discretely_solenoidal(a, b, c):
    ops = build_operators(GridSpec.from_extent(8, 6, (0, 2), (0, 1.5)), DomainBoundaryConditions.freestream(1.0))
    u = velocity_from_streamfunction(ops, lambda x, y: y + a * np.sin(c * x) * np.cos(c * y) + b * x * y)
    # interior cells only: boundary faces are prescribed by the edges, not by psi
    div = (ops.D @ u + ops.bc_D).reshape(6, 8)
    assert np.max(np.abs(div[1:-1, 1:-1])) < 1e-11


def test_rigid_rotation_has_vorticity_two():
    rot = lambda x, y, t=0.0: (-(y - 0.5), x - 0.5)
    e = EdgeCondition.farfield(rot)
    ops = build_operators(GridSpec.from_extent(10, 10, (0, 1), (0, 1)), DomainBoundaryConditions(e, e, e, e))
    u = sample_velocity(ops, rot)
    assert np.allclose(vorticity_field(u, ops), 2.0, atol=1e-12)


def test_vorticity_converges_at_second_order():
    k = 2 * np.pi
    fn = lambda x, y, t=0.0: (-np.cos(k * x) * np.sin(k * y), np.sin(k * x) * np.cos(k * y))
    errs = []
    for n in (16, 32):
        e = EdgeCondition.farfield(fn)
        ops = build_operators(GridSpec.from_extent(n, n, (0, 1), (0, 1)), DomainBoundaryConditions(e, e, e, e))
        w = vorticity_field(sample_velocity(ops, fn), ops)
        xc = np.arange(1, n) / n
        X, Y = np.meshgrid(xc, xc)
        errs.append(np.max(np.abs(w - 2 * k * np.cos(k * X) * np.cos(k * Y))))
    assert 3.2 < errs[0] / errs[1] < 4.8


def test_cell_centred_fields_have_grid_shape(cavity_ops):
    st_ = FluidState.rest(cavity_ops)
    for arr in cell_centered(st_.u, st_.p, cavity_ops):
        assert arr.shape == (12, 12)


def test_edge_condition_validation():
    with pytest.raises(ValueError):
        EdgeCondition("outflow", (1.0, 0.0))
    with pytest.raises(ValueError):
        EdgeCondition("wall", (1.0, 0.0))
    with pytest.raises(ValueError):
        EdgeCondition("inflow")
    with pytest.raises(ValueError):
        EdgeCondition("slip", (0.0, 0.0))


def test_pressure_pin_only_in_closed_domains():
    g = GridSpec(5, 5, 0.2, 0.2)
    assert build_operators(g, DomainBoundaryConditions.cavity()).pressure_pin == 0
    assert build_operators(g, DomainBoundaryConditions.freestream()).pressure_pin is None


def test_time_dependent_boundary_data_updates_vectors_only():
    e = EdgeCondition.farfield(lambda x, y, t: (np.cos(t) + 0 * x, 0 * y))
    ops = build_operators(GridSpec(6, 6, 0.2, 0.2), DomainBoundaryConditions(e, e, e, e))
    later = ops.at(1.0)
    assert later.L is ops.L and later.G is ops.G
    assert not np.allclose(later.bc_L, ops.bc_L)
    assert np.allclose(ops.at(0.0).bc_L, ops.bc_L)


def test_outflow_edges_carry_normal_unknowns():
    g = GridSpec(6, 5, 0.2, 0.2)
    ops = build_operators(g, DomainBoundaryConditions.freestream())
    xu, _, _, _ = face_coordinates(ops)
    assert np.isclose(xu.max(), 6 * 0.2)       # faces on the outflow edge are unknowns
    assert np.isclose(xu.min(), 0.2)           # inflow faces are prescribed
