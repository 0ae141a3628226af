"""Staggered (MAC) grid geometry and the discrete spatial operators.

Layout
------
``u_x`` lives on vertical cell faces, ``u_y`` on horizontal cell faces and the
pressure at cell centres. Unknowns are ordered ``[all u_x; all u_y]``, each
block x-fastest row-major. Boundary-normal faces are unknowns only on outflow
edges; on Dirichlet edges (inflow, far-field, wall) they carry prescribed data.

Every boundary contribution is routed through ghost values that are affine in
the unknowns and in a vector ``beta`` of boundary samples, so the constant parts
``bc_L``, ``bc_D`` and the boundary terms of the convection operator are linear
maps of ``beta``. Time-dependent edge data only re-evaluates ``beta``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import GridTooSmall

EDGES = ("left", "right", "bottom", "top")
_KINDS = ("inflow", "outflow", "farfield", "wall")


@dataclass(frozen=True)
class GridSpec:
    """Uniform Cartesian cell grid.

    Parameters
    ----------
    nx, ny : int
        Cell counts.
    hx, hy : float
        Cell sizes (nondimensional).
    origin : tuple of float
        Lower-left corner.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise TypeError("nx and ny must be integers")
        if self.nx < 3 or self.ny < 3:
            raise GridTooSmall(f"grid must have at least 3x3 cells, got {self.nx}x{self.ny}")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("cell sizes must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def from_extent(cls, nx, ny, xlim, ylim):
        """Grid covering ``[xlim[0], xlim[1]] x [ylim[0], ylim[1]]``."""
        return cls(nx, ny, (xlim[1] - xlim[0]) / nx, (ylim[1] - ylim[0]) / ny, (xlim[0], ylim[0]))

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def extent(self):
        x0, y0 = self.origin
        return (x0, x0 + self.nx * self.hx), (y0, y0 + self.ny * self.hy)

    def cell_centers(self):
        x0, y0 = self.origin
        xc = x0 + (np.arange(self.nx) + 0.5) * self.hx
        yc = y0 + (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(xc, yc, indexing="xy")


@dataclass(frozen=True)
class EdgeCondition:
    """Boundary condition on one edge of the domain.

    ``velocity`` is either a constant ``(ux, uy)`` pair or a callable
    ``f(x, y, t) -> (ux, uy)`` evaluated on arrays of boundary points.
    """

    kind: str
    velocity: object = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "outflow":
            if self.velocity is not None:
                raise ValueError("an outflow edge must not prescribe a velocity")
            return
        if self.kind == "wall":
            if self.velocity is not None and not callable(self.velocity):
                if np.any(np.asarray(self.velocity, dtype=float) != 0.0):
                    raise ValueError("a wall edge has zero velocity; use farfield for a moving edge")
            object.__setattr__(self, "velocity", (0.0, 0.0))
            return
        if self.velocity is None:
            raise ValueError(f"{self.kind} edge requires a velocity")
        if not callable(self.velocity):
            v = tuple(float(c) for c in self.velocity)
            if len(v) != 2 or not np.all(np.isfinite(v)):
                raise ValueError("edge velocity must be a finite (ux, uy) pair")
            object.__setattr__(self, "velocity", v)

    @classmethod
    def inflow(cls, velocity):
        return cls("inflow", velocity)

    @classmethod
    def farfield(cls, velocity):
        return cls("farfield", velocity)

    @classmethod
    def wall(cls):
        return cls("wall")

    @classmethod
    def outflow(cls):
        return cls("outflow")

    @property
    def dirichlet(self) -> bool:
        return self.kind != "outflow"

    @property
    def time_dependent(self) -> bool:
        return callable(self.velocity)

    def evaluate(self, x, y, t):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if callable(self.velocity):
            ux, uy = self.velocity(x, y, t)
            return np.broadcast_to(ux, x.shape).astype(float), np.broadcast_to(uy, x.shape).astype(float)
        return np.full(x.shape, self.velocity[0]), np.full(x.shape, self.velocity[1])


@dataclass(frozen=True)
class DomainBoundaryConditions:
    left: EdgeCondition
    right: EdgeCondition
    bottom: EdgeCondition
    top: EdgeCondition

    @classmethod
    def uniform(cls, velocity=(0.0, 0.0)):
        """Far-field condition with the same velocity on all four edges."""
        e = EdgeCondition.farfield(velocity)
        return cls(e, e, e, e)

    @classmethod
    def cavity(cls):
        w = EdgeCondition.wall()
        return cls(w, w, w, w)

    @classmethod
    def freestream(cls, u_inf=1.0):
        """Inflow on the left, outflow on the right, far-field on top and bottom."""
        v = (float(u_inf), 0.0)
        return cls(EdgeCondition.inflow(v), EdgeCondition.outflow(),
                   EdgeCondition.farfield(v), EdgeCondition.farfield(v))

    def edge(self, name) -> EdgeCondition:
        return getattr(self, name)

    @property
    def has_outflow(self) -> bool:
        return any(not self.edge(e).dirichlet for e in EDGES)

    @property
    def time_dependent(self) -> bool:
        return any(self.edge(e).time_dependent for e in EDGES)


class _Affine:
    """Values on an index set, affine in the unknowns and the boundary samples."""

    def __init__(self, M, B):
        self.M = M.tocsr()
        self.B = B.tocsr()

    def compose(self, P):
        P = sp.csr_matrix(P)
        return _Affine(P @ self.M, P @ self.B)

    def value(self, u, beta):
        return self.M @ u + self.B @ beta


class _BetaRegistry:
    """Ordered list of boundary sample points feeding the ``beta`` vector."""

    def __init__(self):
        self.edge = []
        self.comp = []
        self.x = []
        self.y = []

    def add(self, edge, comp, x, y):
        self.edge.append(edge)
        self.comp.append(comp)
        self.x.append(x)
        self.y.append(y)
        return len(self.edge) - 1

    def __len__(self):
        return len(self.edge)

    def freeze(self):
        self.edge = np.asarray(self.edge, dtype=object)
        self.comp = np.asarray(self.comp, dtype=int)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        return self

    def evaluate(self, bc, t):
        beta = np.zeros(len(self.comp))
        for name in EDGES:
            sel = np.nonzero(self.edge == name)[0]
            if sel.size == 0:
                continue
            ux, uy = bc.edge(name).evaluate(self.x[sel], self.y[sel], t)
            beta[sel] = np.where(self.comp[sel] == 0, ux, uy)
        return beta


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for the velocity unknowns."""

    nx: int
    ny: int
    ix0: int
    ix1: int
    jy0: int
    jy1: int

    @property
    def nux_i(self):
        return self.ix1 - self.ix0 + 1

    @property
    def n_ux(self):
        return self.nux_i * self.ny

    @property
    def nuy_j(self):
        return self.jy1 - self.jy0 + 1

    @property
    def n_uy(self):
        return self.nx * self.nuy_j

    @property
    def n_u(self):
        return self.n_ux + self.n_uy

    def ux_index(self, i, j):
        return j * self.nux_i + (i - self.ix0)

    def uy_index(self, i, j):
        return self.n_ux + (j - self.jy0) * self.nx + i

    def ux_faces(self):
        """(i, j) integer arrays of the u_x unknowns in storage order."""
        j, i = np.divmod(np.arange(self.n_ux), self.nux_i)
        return i + self.ix0, j

    def uy_faces(self):
        j, i = np.divmod(np.arange(self.n_uy), self.nx)
        return i, j + self.jy0


def make_layout(grid: GridSpec, bc: DomainBoundaryConditions) -> Layout:
    return Layout(
        grid.nx, grid.ny,
        0 if not bc.left.dirichlet else 1,
        grid.nx if not bc.right.dirichlet else grid.nx - 1,
        0 if not bc.bottom.dirichlet else 1,
        grid.ny if not bc.top.dirichlet else grid.ny - 1,
    )


def _ghosted_ux(grid, bc, lay, reg):
    """u_x on faces i=-1..nx+1, j=-1..ny including ghosts."""
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    x0, y0 = grid.origin
    ne = nx + 3
    N = ne * (ny + 2)

    def flat(i, j):
        return (j + 1) * ne + (i + 1)

    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []

    def face(i, j):
        # (u-part, beta-part) of an in-domain face
        if lay.ix0 <= i <= lay.ix1:
            return {lay.ux_index(i, j): 1.0}, {}
        edge = "left" if i == 0 else "right"
        k = reg.add(edge, 0, x0 + i * hx, y0 + (j + 0.5) * hy)
        return {}, {k: 1.0}

    def put(r, part):
        u, b = part
        for c, v in u.items():
            rows.append(r); cols.append(c); vals.append(v)
        for c, v in b.items():
            brows.append(r); bcols.append(c); bvals.append(v)

    # interior unknown faces, vectorised
    ii, jj = lay.ux_faces()
    inner = (ii > 0) & (ii < nx)
    r_in = (jj[inner] + 1) * ne + (ii[inner] + 1)
    rows.extend(r_in.tolist()); cols.extend(np.nonzero(inner)[0].tolist()); vals.extend([1.0] * int(inner.sum()))

    col_cache = {}
    for j in range(ny):
        for i in (0, nx):
            part = face(i, j)
            col_cache[(i, j)] = part
            put(flat(i, j), part)
            # zero-gradient copy beyond the boundary face
            put(flat(i - 1 if i == 0 else i + 1, j), part)
            col_cache[(i - 1 if i == 0 else i + 1, j)] = part

    def entry(i, j):
        if (i, j) in col_cache:
            return col_cache[(i, j)]
        return {lay.ux_index(i, j): 1.0}, {}

    for j_in, j_g, edge in ((0, -1, "bottom"), (ny - 1, ny, "top")):
        cond = bc.edge(edge)
        ye = y0 + (0 if edge == "bottom" else ny) * hy
        for i in range(-1, nx + 2):
            u, b = entry(i, j_in)
            if cond.dirichlet:
                k = reg.add(edge, 0, x0 + i * hx, ye)
                u = {c: -v for c, v in u.items()}
                b = {c: -v for c, v in b.items()}
                b[k] = b.get(k, 0.0) + 2.0
            put(flat(i, j_g), (u, b))

    M = sp.csr_matrix((vals, (rows, cols)), shape=(N, lay.n_u))
    return M, (brows, bcols, bvals), flat


def _ghosted_uy(grid, bc, lay, reg):
    """u_y on faces i=-1..nx, j=-1..ny+1 including ghosts."""
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    x0, y0 = grid.origin
    ne = nx + 2
    N = ne * (ny + 3)

    def flat(i, j):
        return (j + 1) * ne + (i + 1)

    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []

    def face(i, j):
        if lay.jy0 <= j <= lay.jy1:
            return {lay.uy_index(i, j): 1.0}, {}
        edge = "bottom" if j == 0 else "top"
        k = reg.add(edge, 1, x0 + (i + 0.5) * hx, y0 + j * hy)
        return {}, {k: 1.0}

    def put(r, part):
        u, b = part
        for c, v in u.items():
            rows.append(r); cols.append(c); vals.append(v)
        for c, v in b.items():
            brows.append(r); bcols.append(c); bvals.append(v)

    ii, jj = lay.uy_faces()
    inner = (jj > 0) & (jj < ny)
    r_in = (jj[inner] + 1) * ne + (ii[inner] + 1)
    rows.extend(r_in.tolist()); cols.extend((lay.n_ux + np.nonzero(inner)[0]).tolist())
    vals.extend([1.0] * int(inner.sum()))

    row_cache = {}
    for i in range(nx):
        for j in (0, ny):
            part = face(i, j)
            row_cache[(i, j)] = part
            put(flat(i, j), part)
            put(flat(i, j - 1 if j == 0 else j + 1), part)
            row_cache[(i, j - 1 if j == 0 else j + 1)] = part

    def entry(i, j):
        if (i, j) in row_cache:
            return row_cache[(i, j)]
        return {lay.uy_index(i, j): 1.0}, {}

    for i_in, i_g, edge in ((0, -1, "left"), (nx - 1, nx, "right")):
        cond = bc.edge(edge)
        xe = x0 + (0 if edge == "left" else nx) * hx
        for j in range(-1, ny + 2):
            u, b = entry(i_in, j)
            if cond.dirichlet:
                k = reg.add(edge, 1, xe, y0 + j * hy)
                u = {c: -v for c, v in u.items()}
                b = {c: -v for c, v in b.items()}
                b[k] = b.get(k, 0.0) + 2.0
            put(flat(i_g, j), (u, b))

    M = sp.csr_matrix((vals, (rows, cols)), shape=(N, lay.n_u))
    return M, (brows, bcols, bvals), flat


def _stencil(n_rows, n_cols, entries):
    """Sparse matrix from (row array, col array, value) triples."""
    r = np.concatenate([np.broadcast_to(e[0], np.shape(e[1])) for e in entries])
    c = np.concatenate([e[1] for e in entries])
    v = np.concatenate([np.broadcast_to(e[2], np.shape(e[1])) for e in entries])
    return sp.csr_matrix((v.astype(float), (r, c)), shape=(n_rows, n_cols))


class _Convection:
    """N(u) = Sx (a*a) + Sxy (b*c) + Sy (d*d), each factor affine in (u, beta)."""

    def __init__(self, a, b, c, d, Sx, Sxy, Sy):
        self.a, self.b, self.c, self.d = a, b, c, d
        self.Sx, self.Sxy, self.Sy = Sx, Sxy, Sy

    def value(self, u, beta):
        a = self.a.value(u, beta)
        b = self.b.value(u, beta)
        c = self.c.value(u, beta)
        d = self.d.value(u, beta)
        return self.Sx @ (a * a) + self.Sxy @ (b * c) + self.Sy @ (d * d)

    def jacobian(self, u, beta):
        a = self.a.value(u, beta)
        b = self.b.value(u, beta)
        c = self.c.value(u, beta)
        d = self.d.value(u, beta)
        J = (self.Sx @ sp.diags(2.0 * a) @ self.a.M
             + self.Sxy @ (sp.diags(c) @ self.b.M + sp.diags(b) @ self.c.M)
             + self.Sy @ sp.diags(2.0 * d) @ self.d.M)
        return J.tocsr()


@dataclass(frozen=True, eq=False)
class FluidOperators:
    """Sparse discrete operators of the finite-volume scheme.

    ``L u + bc_L`` approximates the Laplacian, ``G p`` the pressure gradient and
    ``D u + bc_D`` the divergence. ``D == -G.T`` holds entrywise.
    """

    grid: GridSpec
    bc: DomainBoundaryConditions
    layout: Layout
    L: sp.csr_matrix
    G: sp.csr_matrix
    D: sp.csr_matrix
    bc_L: np.ndarray
    bc_D: np.ndarray
    t: float
    pressure_pin: int | None
    beta: np.ndarray = field(repr=False)
    _bcL_map: sp.csr_matrix = field(repr=False)
    _bcD_map: sp.csr_matrix = field(repr=False)
    _registry: _BetaRegistry = field(repr=False)
    _conv: _Convection = field(repr=False)
    _ux_ext: _Affine = field(repr=False)
    _uy_ext: _Affine = field(repr=False)

    @property
    def n_u(self) -> int:
        return self.layout.n_u

    @property
    def n_f(self) -> int:
        return self.grid.n_cells

    @property
    def time_dependent(self) -> bool:
        return self.bc.time_dependent

    def at(self, t: float) -> "FluidOperators":
        """Operators with the boundary vectors evaluated at time ``t``."""
        if not self.time_dependent or t == self.t:
            return self if t == self.t else dataclasses.replace(self, t=float(t))
        beta = self._registry.evaluate(self.bc, t)
        return dataclasses.replace(
            self, t=float(t), beta=beta,
            bc_L=self._bcL_map @ beta, bc_D=self._bcD_map @ beta,
        )


def build_operators(grid: GridSpec, bc: DomainBoundaryConditions, t: float = 0.0) -> FluidOperators:
    """Assemble L, G, D, bc_L and bc_D for ``grid`` under ``bc``.

    Dirichlet edges use ghost values reflected about the prescribed face value;
    outflow edges copy the last interior value. A closed domain (no outflow edge)
    gets one pinned pressure unknown to remove the constant-pressure mode.
    """
    if not isinstance(grid, GridSpec):
        raise TypeError("grid must be a GridSpec")
    lay = make_layout(grid, bc)
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    ihx, ihy = 1.0 / hx, 1.0 / hy
    ihx2, ihy2 = ihx * ihx, ihy * ihy

    reg = _BetaRegistry()
    Mx, bx_coo, fx = _ghosted_ux(grid, bc, lay, reg)
    My, by_coo, fy = _ghosted_uy(grid, bc, lay, reg)
    nb = len(reg)
    reg.freeze()
    Bx = sp.csr_matrix((bx_coo[2], (bx_coo[0], bx_coo[1])), shape=(Mx.shape[0], nb))
    By = sp.csr_matrix((by_coo[2], (by_coo[0], by_coo[1])), shape=(My.shape[0], nb))
    ux_ext = _Affine(Mx, Bx)
    uy_ext = _Affine(My, By)

    iu, ju = lay.ux_faces()
    iv, jv = lay.uy_faces()
    rx = np.arange(lay.n_ux)
    ry = np.arange(lay.n_uy)

    def fxa(i, j):
        return (j + 1) * (nx + 3) + (i + 1)

    def fya(i, j):
        return (j + 1) * (nx + 2) + (i + 1)

    # Laplacian
    SLx = _stencil(lay.n_ux, Mx.shape[0], [
        (rx, fxa(iu - 1, ju), ihx2), (rx, fxa(iu + 1, ju), ihx2),
        (rx, fxa(iu, ju - 1), ihy2), (rx, fxa(iu, ju + 1), ihy2),
        (rx, fxa(iu, ju), -2.0 * ihx2 - 2.0 * ihy2),
    ])
    SLy = _stencil(lay.n_uy, My.shape[0], [
        (ry, fya(iv - 1, jv), ihx2), (ry, fya(iv + 1, jv), ihx2),
        (ry, fya(iv, jv - 1), ihy2), (ry, fya(iv, jv + 1), ihy2),
        (ry, fya(iv, jv), -2.0 * ihx2 - 2.0 * ihy2),
    ])
    L = sp.vstack([SLx @ Mx, SLy @ My]).tocsr()
    L.eliminate_zeros()
    bcL_map = sp.vstack([SLx @ Bx, SLy @ By]).tocsr()

    # divergence over every cell
    jc, ic = np.divmod(np.arange(grid.n_cells), nx)
    rc = np.arange(grid.n_cells)
    SDx = _stencil(grid.n_cells, Mx.shape[0], [(rc, fxa(ic + 1, jc), ihx), (rc, fxa(ic, jc), -ihx)])
    SDy = _stencil(grid.n_cells, My.shape[0], [(rc, fya(ic, jc + 1), ihy), (rc, fya(ic, jc), -ihy)])
    D = (SDx @ Mx + SDy @ My).tocsr()
    D.eliminate_zeros()
    bcD_map = (SDx @ Bx + SDy @ By).tocsr()

    # gradient, assembled from its own stencil; pressure outside an outflow edge is zero
    keep_r = iu < nx
    keep_l = iu > 0
    keep_t = jv < ny
    keep_b = jv > 0
    G = sp.csr_matrix((
        np.concatenate([np.full(keep_r.sum(), ihx), np.full(keep_l.sum(), -ihx),
                        np.full(keep_t.sum(), ihy), np.full(keep_b.sum(), -ihy)]),
        (np.concatenate([rx[keep_r], rx[keep_l], lay.n_ux + ry[keep_t], lay.n_ux + ry[keep_b]]),
         np.concatenate([ju[keep_r] * nx + iu[keep_r], ju[keep_l] * nx + iu[keep_l] - 1,
                         jv[keep_t] * nx + iv[keep_t], (jv[keep_b] - 1) * nx + iv[keep_b]])),
    ), shape=(lay.n_u, grid.n_cells))

    # convection: cell-centre averages and corner products
    ka, ja = np.meshgrid(np.arange(-1, nx + 1), np.arange(ny), indexing="xy")
    ka, ja = ka.ravel(), ja.ravel()
    na = ka.size
    Pa = _stencil(na, Mx.shape[0], [(np.arange(na), fxa(ka, ja), 0.5), (np.arange(na), fxa(ka + 1, ja), 0.5)])

    def aidx(k, j):
        return j * (nx + 2) + (k + 1)

    ic_, mc_ = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    ic_, mc_ = ic_.ravel(), mc_.ravel()
    nc = ic_.size
    rc_ = np.arange(nc)
    Pb = _stencil(nc, Mx.shape[0], [(rc_, fxa(ic_, mc_ - 1), 0.5), (rc_, fxa(ic_, mc_), 0.5)])
    Pc = _stencil(nc, My.shape[0], [(rc_, fya(ic_ - 1, mc_), 0.5), (rc_, fya(ic_, mc_), 0.5)])

    def cidx(i, m):
        return m * (nx + 1) + i

    idd, kd = np.meshgrid(np.arange(nx), np.arange(-1, ny + 1), indexing="xy")
    idd, kd = idd.ravel(), kd.ravel()
    nd = idd.size
    Pd = _stencil(nd, My.shape[0], [(np.arange(nd), fya(idd, kd), 0.5), (np.arange(nd), fya(idd, kd + 1), 0.5)])

    def didx(i, k):
        return (k + 1) * nx + i

    n_u = lay.n_u
    Sx = _stencil(n_u, na, [(rx, aidx(iu, ju), ihx), (rx, aidx(iu - 1, ju), -ihx)])
    Sxy = _stencil(n_u, nc, [
        (rx, cidx(iu, ju + 1), ihy), (rx, cidx(iu, ju), -ihy),
        (lay.n_ux + ry, cidx(iv + 1, jv), ihx), (lay.n_ux + ry, cidx(iv, jv), -ihx),
    ])
    Sy = _stencil(n_u, nd, [(lay.n_ux + ry, didx(iv, jv), ihy), (lay.n_ux + ry, didx(iv, jv - 1), -ihy)])
    conv = _Convection(ux_ext.compose(Pa), ux_ext.compose(Pb), uy_ext.compose(Pc), uy_ext.compose(Pd),
                       Sx, Sxy, Sy)

    beta = reg.evaluate(bc, t)
    return FluidOperators(
        grid=grid, bc=bc, layout=lay, L=L, G=G, D=D,
        bc_L=bcL_map @ beta, bc_D=bcD_map @ beta, t=float(t),
        pressure_pin=None if bc.has_outflow else 0,
        beta=beta, _bcL_map=bcL_map, _bcD_map=bcD_map, _registry=reg, _conv=conv,
        _ux_ext=ux_ext, _uy_ext=uy_ext,
    )


def _check_u(u, ops):
    u = np.asarray(u, dtype=float)
    if u.shape != (ops.n_u,):
        raise ValueError(f"velocity vector has shape {u.shape}, expected ({ops.n_u},)")
    return u


def convect(u, ops: FluidOperators) -> np.ndarray:
    """Discrete convection N(u) in divergence form, boundary closure included."""
    return ops._conv.value(_check_u(u, ops), ops.beta)


def convect_jacobian(u, ops: FluidOperators) -> sp.csr_matrix:
    """Exact Jacobian dN/du at ``u``."""
    return ops._conv.jacobian(_check_u(u, ops), ops.beta)


def face_coordinates(ops: FluidOperators):
    """Coordinates of the velocity unknowns: ``(xu, yu, xv, yv)``."""
    g, lay = ops.grid, ops.layout
    x0, y0 = g.origin
    iu, ju = lay.ux_faces()
    iv, jv = lay.uy_faces()
    return (x0 + iu * g.hx, y0 + (ju + 0.5) * g.hy,
            x0 + (iv + 0.5) * g.hx, y0 + jv * g.hy)


def sample_velocity(ops: FluidOperators, field_fn, t=None) -> np.ndarray:
    """Sample ``field_fn(x, y) -> (ux, uy)`` (or ``field_fn(x, y, t)``) onto the unknowns."""
    xu, yu, xv, yv = face_coordinates(ops)
    args_u = (xu, yu) if t is None else (xu, yu, t)
    args_v = (xv, yv) if t is None else (xv, yv, t)
    ux = np.broadcast_to(field_fn(*args_u)[0], xu.shape)
    uy = np.broadcast_to(field_fn(*args_v)[1], xv.shape)
    return np.concatenate([ux, uy]).astype(float)


def velocity_from_streamfunction(ops: FluidOperators, psi) -> np.ndarray:
    """Face velocities ``(d psi/dy, -d psi/dx)`` from differences of ``psi`` at cell corners.

    The result has zero discrete divergence in every cell, whatever ``psi`` is.
    """
    g = ops.grid
    xu, yu, xv, yv = face_coordinates(ops)
    ux = (psi(xu, yu + 0.5 * g.hy) - psi(xu, yu - 0.5 * g.hy)) / g.hy
    uy = -(psi(xv + 0.5 * g.hx, yv) - psi(xv - 0.5 * g.hx, yv)) / g.hx
    return np.concatenate([ux, uy]).astype(float)


def ghosted_components(u, ops: FluidOperators):
    """u_x on faces (-1..nx+1, -1..ny) and u_y on (-1..nx, -1..ny+1), boundary data filled."""
    u = _check_u(u, ops)
    nx, ny = ops.grid.nx, ops.grid.ny
    ux = ops._ux_ext.value(u, ops.beta).reshape(ny + 2, nx + 3)
    uy = ops._uy_ext.value(u, ops.beta).reshape(ny + 3, nx + 2)
    return ux, uy


def vorticity_field(u, ops: FluidOperators) -> np.ndarray:
    """Curl ``d(u_y)/dx - d(u_x)/dy`` on the interior cell corners.

    Returns an array of shape ``(ny - 1, nx - 1)``; entry ``[m-1, i-1]`` belongs
    to the corner at ``(x0 + i*hx, y0 + m*hy)``.
    """
    ux, uy = ghosted_components(u, ops)
    g = ops.grid
    # ux[j+1, i+1] is face (i, j); uy[j+1, i+1] is face (i, j)
    dvdx = (uy[2:-2, 2:-1] - uy[2:-2, 1:-2]) / g.hx
    dudy = (ux[2:-1, 2:-2] - ux[1:-2, 2:-2]) / g.hy
    return dvdx - dudy


def corner_vorticity(u, ops: FluidOperators) -> np.ndarray:
    """Curl on all ``(ny + 1, nx + 1)`` corners, boundary corners via ghost values."""
    ux, uy = ghosted_components(u, ops)
    g = ops.grid
    dvdx = (uy[1:-1, 1:] - uy[1:-1, :-1]) / g.hx
    dudy = (ux[1:, 1:-1] - ux[:-1, 1:-1]) / g.hy
    return dvdx - dudy


def cell_centered(u, p, ops: FluidOperators):
    """Velocity, pressure and vorticity averaged to cell centres, each ``(ny, nx)``."""
    ux, uy = ghosted_components(u, ops)
    uc = 0.5 * (ux[1:-1, 1:-2] + ux[1:-1, 2:-1])
    vc = 0.5 * (uy[1:-2, 1:-1] + uy[2:-1, 1:-1])
    w = corner_vorticity(u, ops)
    wc = 0.25 * (w[:-1, :-1] + w[1:, :-1] + w[:-1, 1:] + w[1:, 1:])
    return uc, vc, np.asarray(p, dtype=float).reshape(ops.grid.ny, ops.grid.nx), wc


@dataclass(frozen=True, eq=False)
class FluidState:
    """Velocity unknowns ``u`` (length n_u), cell pressures ``p`` (n_f) and time ``t``."""

    u: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if u.ndim != 1 or p.ndim != 1:
            raise ValueError("u and p must be 1-D vectors")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
            raise ValueError("fluid state contains non-finite entries")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def rest(cls, ops: FluidOperators, t=0.0):
        return cls(np.zeros(ops.n_u), np.zeros(ops.n_f), t)

    @classmethod
    def from_field(cls, ops: FluidOperators, field_fn, t=0.0):
        """State sampled from ``field_fn(x, y) -> (ux, uy)`` with zero pressure."""
        return cls(sample_velocity(ops, field_fn), np.zeros(ops.n_f), t)

    def divergence_residual(self, ops: FluidOperators) -> float:
        return float(np.max(np.abs(ops.D @ self.u + ops.bc_D), initial=0.0))
