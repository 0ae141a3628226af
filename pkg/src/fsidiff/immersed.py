"""Lagrangian boundary meshes and the regularized-delta coupling to the fluid grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import NodeOutsideDomain
from .grid import FluidOperators


def _roma(r):
    a = np.abs(r)
    out = np.zeros_like(a)
    inner = a <= 0.5
    outer = (a > 0.5) & (a < 1.5)
    out[inner] = (1.0 + np.sqrt(1.0 - 3.0 * a[inner] ** 2)) / 3.0
    b = 1.0 - a[outer]
    out[outer] = (5.0 - 3.0 * a[outer] - np.sqrt(np.maximum(1.0 - 3.0 * b * b, 0.0))) / 6.0
    return out


def _roma_prime(r):
    a = np.abs(r)
    out = np.zeros_like(a)
    inner = a <= 0.5
    outer = (a > 0.5) & (a < 1.5)
    out[inner] = -a[inner] / np.sqrt(1.0 - 3.0 * a[inner] ** 2)
    b = 1.0 - a[outer]
    root = np.sqrt(np.maximum(1.0 - 3.0 * b * b, 0.0))
    out[outer] = (-3.0 - 3.0 * b / root) / 6.0
    return np.sign(r) * out


@dataclass(frozen=True)
class DeltaKernel:
    """One-dimensional discrete delta ``d(r)``, ``r`` in cell widths."""

    name: str
    support: float
    weight: Callable = field(repr=False)
    derivative: Callable = field(repr=False)

    def __call__(self, r):
        return self.weight(np.asarray(r, dtype=float))


#: Three-point kernel of Roma, Peskin & Berger for staggered grids.
ROMA = DeltaKernel("roma", 1.5, _roma, _roma_prime)


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Lagrangian boundary nodes.

    Attributes
    ----------
    positions : (n, 2) array
    velocities : (n, 2) array
    s : (n,) array
        Arc-length weight of each node (midpoint quadrature).
    closed : bool
    """

    positions: np.ndarray
    velocities: np.ndarray
    s: np.ndarray
    closed: bool = True

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        vel = np.asarray(self.velocities, dtype=float).reshape(-1, 2)
        s = np.broadcast_to(np.asarray(self.s, dtype=float), (pos.shape[0],)).copy()
        if vel.shape != pos.shape:
            raise ValueError("positions and velocities must have the same shape")
        if pos.shape[0] and np.any(s <= 0):
            raise ValueError("arc-length spacing must be positive")
        if self.closed and 0 < pos.shape[0] < 3:
            raise ValueError("a closed body needs at least 3 nodes")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "s", s)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), closed=False)

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def n_b(self) -> int:
        """Length of the constraint/dual vectors: x components then y components."""
        return 2 * self.n_nodes

    @property
    def ub(self) -> np.ndarray:
        return np.concatenate([self.velocities[:, 0], self.velocities[:, 1]])


def check_inside(mesh: BoundaryMesh, grid, margin=None):
    """Raise :class:`NodeOutsideDomain` unless every node keeps ``margin`` from the edges."""
    if margin is None:
        margin = 2.0 * max(grid.hx, grid.hy)
    (xa, xb), (ya, yb) = grid.extent
    x, y = mesh.positions[:, 0], mesh.positions[:, 1]
    bad = (x < xa + margin) | (x > xb - margin) | (y < ya + margin) | (y > yb - margin)
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise NodeOutsideDomain(
            f"boundary node {i} at ({x[i]:.4g}, {y[i]:.4g}) is closer than {margin:.3g} to the domain edge")


def _component_weights(X, Y, xs0, ys0, h, idx_fn, n_i, n_j, kernel, with_derivative):
    """Kernel weights from nodes (X, Y) to a lattice of sample points.

    Sample point (i, j) sits at ``(xs0 + i*hx, ys0 + j*hy)``; ``idx_fn`` maps
    lattice indices to unknown indices (or -1 for non-unknowns).
    """
    hx, hy = h
    w = int(np.ceil(kernel.support)) + 1
    fi = (X - xs0) / hx
    fj = (Y - ys0) / hy
    bi = np.floor(fi).astype(int)
    bj = np.floor(fj).astype(int)
    offs = np.arange(-w + 1, w + 1)
    I = bi[:, None, None] + offs[None, :, None]
    J = bj[:, None, None] + offs[None, None, :]
    rx = I - fi[:, None, None]
    ry = J - fj[:, None, None]
    dx = kernel.weight(rx)
    dy = kernel.weight(ry)
    W = dx * dy
    node = np.broadcast_to(np.arange(X.size)[:, None, None], W.shape)
    mask = W != 0.0
    if with_derivative:
        # d/dX of d((x_j - X)/hx) = -d'(r)/hx
        WX = -kernel.derivative(rx) / hx * dy
        WY = -dx * kernel.derivative(ry) / hy
        mask |= (WX != 0.0) | (WY != 0.0)
    I = np.broadcast_to(I, W.shape)[mask]
    J = np.broadcast_to(J, W.shape)[mask]
    node = node[mask]
    inside = (I >= 0) & (I < n_i) & (J >= 0) & (J < n_j)
    cols = np.full(I.shape, -1)
    cols[inside] = idx_fn(I[inside], J[inside])
    if np.any(cols < 0):
        n = int(node[cols < 0][0])
        raise NodeOutsideDomain(f"kernel support of boundary node {n} leaves the velocity unknowns")
    out = [node, cols, W[mask]]
    if with_derivative:
        out += [WX[mask], WY[mask]]
    return out


def _assemble(mesh, ops, kernel, with_derivative):
    g, lay = ops.grid, ops.layout
    x0, y0 = g.origin
    X, Y = mesh.positions[:, 0], mesh.positions[:, 1]
    n = mesh.n_nodes

    def ux_idx(i, j):
        ok = (i >= lay.ix0) & (i <= lay.ix1)
        return np.where(ok, j * lay.nux_i + (i - lay.ix0), -1)

    def uy_idx(i, j):
        ok = (j >= lay.jy0) & (j <= lay.jy1)
        return np.where(ok, lay.n_ux + (j - lay.jy0) * g.nx + i, -1)

    parts_x = _component_weights(X, Y, x0, y0 + 0.5 * g.hy, (g.hx, g.hy), ux_idx, g.nx + 1, g.ny,
                                 kernel, with_derivative)
    parts_y = _component_weights(X, Y, x0 + 0.5 * g.hx, y0, (g.hx, g.hy), uy_idx, g.nx, g.ny + 1,
                                 kernel, with_derivative)
    rows = np.concatenate([parts_x[0], parts_y[0] + n])
    cols = np.concatenate([parts_x[1], parts_y[1]])
    shape = (2 * n, lay.n_u)
    mats = [sp.csr_matrix((np.concatenate([parts_x[k], parts_y[k]]), (rows, cols)), shape=shape)
            for k in range(2, len(parts_x))]
    return mats


def interpolation_matrix(mesh: BoundaryMesh, ops: FluidOperators, kernel: DeltaKernel = ROMA,
                         check_margin=True) -> sp.csr_matrix:
    """Coupling matrix E with ``(E u)`` the fluid velocity at the boundary nodes.

    Block-diagonal over components: rows ``0..n-1`` interpolate ``u_x``, rows
    ``n..2n-1`` interpolate ``u_y``. Each row sums to one.
    """
    if mesh.n_nodes == 0:
        return sp.csr_matrix((0, ops.n_u))
    if check_margin:
        check_inside(mesh, ops.grid)
    return _assemble(mesh, ops, kernel, False)[0]


def interpolation_derivatives(mesh: BoundaryMesh, ops: FluidOperators, kernel: DeltaKernel = ROMA):
    """``(E, EX, EY)`` where row ``r`` of ``EX`` is d(row r of E)/d(x of its node)."""
    if mesh.n_nodes == 0:
        z = sp.csr_matrix((0, ops.n_u))
        return z, z, z
    return tuple(_assemble(mesh, ops, kernel, True))


def boundary_forces(f_tilde, cfg, grid, mesh: BoundaryMesh, units="nondimensional") -> np.ndarray:
    """Per-node boundary traction from the no-slip multipliers, shape ``(n, 2)``.

    ``f = -rho * (hx*hy / s) * f_tilde`` with ``rho = 1`` in solver units. With
    ``units="physical"`` the result is scaled by ``rho * u_ref**2``.
    """
    f_tilde = np.asarray(f_tilde, dtype=float)
    n = mesh.n_nodes
    if f_tilde.shape != (2 * n,):
        raise ValueError(f"dual vector has shape {f_tilde.shape}, expected ({2 * n},)")
    scale = -(grid.hx * grid.hy) / mesh.s
    f = np.stack([scale * f_tilde[:n], scale * f_tilde[n:]], axis=1)
    if units == "physical":
        return f * (cfg.rho * cfg.u_ref ** 2)
    if units != "nondimensional":
        raise ValueError(f"unknown units {units!r}")
    return f


def net_force(f_nodes, mesh: BoundaryMesh, length_scale=1.0) -> np.ndarray:
    """Midpoint quadrature ``sum_i f_i * s_i`` over the boundary, returns ``(F_x, F_y)``."""
    f_nodes = np.asarray(f_nodes, dtype=float).reshape(-1, 2)
    return (f_nodes * mesh.s[:, None]).sum(axis=0) * length_scale
