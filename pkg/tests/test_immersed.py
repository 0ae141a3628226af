import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsidiff.errors import NodeOutsideDomain
from fsidiff.grid import DomainBoundaryConditions, GridSpec, build_operators, sample_velocity
from fsidiff.immersed import (ROMA, BoundaryMesh, boundary_forces, interpolation_derivatives,
                              interpolation_matrix, net_force)
from fsidiff.navier_stokes import FluidConfig


def _mesh(points):
    points = np.atleast_2d(points)
    return BoundaryMesh(points, np.zeros_like(points), 0.1, closed=False)


def test_roma_kernel_moments():
    # the kernel sums to one and has zero first moment for any shift
    for shift in np.linspace(-0.5, 0.5, 11):
        r = np.arange(-3, 4) + shift
        w = ROMA(r)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert (w * r).sum() == pytest.approx(0.0, abs=1e-14)
    assert ROMA(np.array([1.5, -1.6, 3.0])).max() == 0.0


def test_roma_derivative_matches_finite_differences():
    r = np.linspace(-1.45, 1.45, 57)
    r = r[np.abs(np.abs(r) - 0.5) > 1e-3]
    eps = 1e-7
    fd = (ROMA(r + eps) - ROMA(r - eps)) / (2 * eps)
    assert np.allclose(ROMA.derivative(r), fd, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(1.0, 4.0), y=st.floats(1.0, 3.0))
def test_interpolation_rows_sum_to_one_and_reproduce_linear_fields(x, y):
    ops = build_operators(GridSpec.from_extent(20, 16, (0, 5), (0, 4)), DomainBoundaryConditions.freestream())
    E = interpolation_matrix(_mesh([[x, y], [x + 0.1, y - 0.2]]), ops)
    assert np.allclose(np.asarray(E.sum(axis=1)).ravel(), 1.0, atol=1e-13)
    u = sample_velocity(ops, lambda X, Y: (2.0 * X - Y + 0.5, 0.3 * X + 4.0 * Y))
    v = E @ u
    assert v[0] == pytest.approx(2 * x - y + 0.5, abs=1e-12)
    assert v[2] == pytest.approx(0.3 * x + 4 * y, abs=1e-12)


def test_spreading_is_the_adjoint_of_interpolation(freestream_ops, rng):
    pts = np.column_stack([rng.uniform(1.5, 4.5, 7), rng.uniform(1.5, 3.5, 7)])
    E = interpolation_matrix(_mesh(pts), freestream_ops)
    u, f = rng.normal(size=freestream_ops.n_u), rng.normal(size=14)
    assert f @ (E @ u) == pytest.approx((E.T @ f) @ u, rel=1e-13)


def test_position_derivatives_match_finite_differences(freestream_ops, rng):
    pts = np.array([[2.13, 2.41], [3.37, 1.92]])
    ops = freestream_ops
    u = rng.normal(size=ops.n_u)
    E, EX, EY = interpolation_derivatives(_mesh(pts), ops)
    eps = 1e-6
    for col, D in ((0, EX), (1, EY)):
        shift = np.zeros_like(pts)
        shift[:, col] = eps
        fd = (interpolation_matrix(_mesh(pts + shift), ops) @ u
              - interpolation_matrix(_mesh(pts - shift), ops) @ u) / (2 * eps)
        assert np.allclose(D @ u, fd, rtol=1e-5, atol=1e-6)


def test_nodes_near_the_edge_are_rejected(freestream_ops):
    with pytest.raises(NodeOutsideDomain):
        interpolation_matrix(_mesh([[0.1, 2.0]]), freestream_ops)


def test_empty_mesh_gives_empty_coupling(freestream_ops):
    E = interpolation_matrix(BoundaryMesh.empty(), freestream_ops)
    assert E.shape == (0, freestream_ops.n_u)


def test_boundary_force_scaling_and_sum():
    grid = GridSpec(10, 10, 0.1, 0.2)
    mesh = BoundaryMesh([[0.5, 1.0], [0.6, 1.0]], np.zeros((2, 2)), [0.05, 0.1], closed=False)
    cfg = FluidConfig(Re=10.0, dt=0.1, rho=1000.0, u_ref=0.2)
    ft = np.array([1.0, 2.0, -1.0, 0.5])
    f = boundary_forces(ft, cfg, grid, mesh)
    assert np.allclose(f[:, 0], -0.02 * np.array([1.0, 2.0]) / mesh.s)
    # the sum of node forces recovers -hx*hy*sum(f_tilde) per component
    assert np.allclose(net_force(f, mesh), [-0.02 * 3.0, -0.02 * -0.5])
    assert np.allclose(boundary_forces(ft, cfg, grid, mesh, "physical"), f * 1000.0 * 0.04)
    with pytest.raises(ValueError):
        boundary_forces(ft[:3], cfg, grid, mesh)


def test_mesh_validation():
    with pytest.raises(ValueError):
        BoundaryMesh([[0, 0], [1, 0]], np.zeros((2, 2)), 0.1, closed=True)
    with pytest.raises(ValueError):
        BoundaryMesh([[0, 0]], np.zeros((1, 2)), 0.0, closed=False)
