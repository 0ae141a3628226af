"""Parametric bodies: a circular cylinder and an articulated tail.

A body maps a parameter vector ``theta`` and a time ``t`` to a
:class:`~fsidiff.immersed.BoundaryMesh`, and supplies the analytic Jacobians of
node positions, node velocities and arc-length weights with respect to
``theta``. Jacobians use the ``[x-block; y-block]`` layout of the no-slip rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BodyTooLargeForDomain, NodeOutsideDomain
from .immersed import BoundaryMesh, check_inside

__all__ = [
    "BoundaryJacobian", "CylinderParams", "CylinderBody", "cylinder_boundary",
    "CubicProfile", "LinkChain", "GaitParams", "gait_angles", "AngleTrajectory",
    "tail_forward_kinematics", "TailBody", "boundary_jacobian",
]


@dataclass(frozen=True)
class BoundaryJacobian:
    """Parameter derivatives of a boundary mesh.

    Attributes
    ----------
    dx, du : (n_b, n_theta) arrays
        Derivatives of node positions and velocities, x-block then y-block.
    ds : (n, n_theta) array
        Derivatives of the arc-length weights.
    """

    dx: np.ndarray
    du: np.ndarray
    ds: np.ndarray


def _stack_xy(a):
    """(n, 2, m) -> (2n, m)."""
    return np.concatenate([a[:, 0, :], a[:, 1, :]], axis=0)


def _midpoint_weights(pos, closed=True):
    d = np.diff(pos, axis=0, append=pos[:1]) if closed else np.diff(pos, axis=0)
    seg = np.linalg.norm(d, axis=1)
    if closed:
        return 0.5 * (seg + np.roll(seg, 1)), d, seg
    s = np.zeros(pos.shape[0])
    s[:-1] += 0.5 * seg
    s[1:] += 0.5 * seg
    return s, d, seg


def _midpoint_weight_derivative(d, seg, dpos):
    """Tangent of the closed-polygon midpoint weights for position tangents ``dpos`` (n, 2, m)."""
    dd = np.roll(dpos, -1, axis=0) - dpos
    dseg = np.einsum("nc,ncm->nm", d / seg[:, None], dd)
    return 0.5 * (dseg + np.roll(dseg, 1, axis=0))


# ----------------------------------------------------------------------------- cylinder

@dataclass(frozen=True)
class CylinderParams:
    center: tuple[float, float]
    diameter: float

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValueError("cylinder diameter must be positive")


def cylinder_boundary(params: CylinderParams, grid=None, target_spacing=None, n_nodes=None) -> BoundaryMesh:
    """Nodes spaced uniformly on a circle, zero velocity.

    The node count is ``round(pi * D / target_spacing)`` unless given directly.
    With a ``grid`` the circle must keep the kernel margin from every edge.
    """
    D = params.diameter
    if n_nodes is None:
        if target_spacing is None:
            if grid is None:
                raise ValueError("need target_spacing, n_nodes or grid")
            target_spacing = min(grid.hx, grid.hy)
        n_nodes = max(3, int(round(np.pi * D / target_spacing)))
    ang = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    cx, cy = params.center
    pos = np.stack([cx + 0.5 * D * np.cos(ang), cy + 0.5 * D * np.sin(ang)], axis=1)
    mesh = BoundaryMesh(pos, np.zeros_like(pos), np.pi * D / n_nodes)
    if grid is not None:
        try:
            check_inside(mesh, grid)
        except NodeOutsideDomain as exc:
            raise BodyTooLargeForDomain(f"cylinder of diameter {D} does not fit: {exc}") from exc
    return mesh


class CylinderBody:
    """Stationary cylinder whose centre and diameter may be design parameters.

    The node count is fixed at construction so meshes for nearby parameters
    are smooth functions of ``theta``.
    """

    PARAMETERS = ("center_x", "center_y", "diameter")
    stationary = True

    def __init__(self, params: CylinderParams, n_nodes: int, parameters=("diameter",)):
        bad = set(parameters) - set(self.PARAMETERS)
        if bad:
            raise ValueError(f"unknown cylinder parameters {sorted(bad)}")
        self.base = params
        self.n_nodes = int(n_nodes)
        self.parameter_names = tuple(parameters)

    @classmethod
    def for_grid(cls, params: CylinderParams, grid, parameters=("diameter",), spacing=None):
        mesh = cylinder_boundary(params, grid, spacing)
        return cls(params, mesh.n_nodes, parameters)

    @property
    def n_theta(self):
        return len(self.parameter_names)

    def theta0(self) -> np.ndarray:
        vals = {"center_x": self.base.center[0], "center_y": self.base.center[1], "diameter": self.base.diameter}
        return np.array([vals[k] for k in self.parameter_names], dtype=float)

    def _params(self, theta) -> CylinderParams:
        vals = {"center_x": self.base.center[0], "center_y": self.base.center[1], "diameter": self.base.diameter}
        for k, v in zip(self.parameter_names, np.asarray(theta, dtype=float)):
            vals[k] = float(v)
        return CylinderParams((vals["center_x"], vals["center_y"]), vals["diameter"])

    def mesh(self, theta=None, t=0.0) -> BoundaryMesh:
        p = self._params(self.theta0() if theta is None else theta)
        return cylinder_boundary(p, n_nodes=self.n_nodes)

    def boundary_jacobian(self, theta=None, t=0.0) -> BoundaryJacobian:
        n, m = self.n_nodes, self.n_theta
        ang = 2.0 * np.pi * np.arange(n) / n
        dx = np.zeros((n, 2, m))
        ds = np.zeros((n, m))
        for c, name in enumerate(self.parameter_names):
            if name == "center_x":
                dx[:, 0, c] = 1.0
            elif name == "center_y":
                dx[:, 1, c] = 1.0
            else:
                dx[:, 0, c] = 0.5 * np.cos(ang)
                dx[:, 1, c] = 0.5 * np.sin(ang)
                ds[:, c] = np.pi / n
        return BoundaryJacobian(_stack_xy(dx), np.zeros((2 * n, m)), ds)


# ----------------------------------------------------------------------------- tail

@dataclass(frozen=True)
class CubicProfile:
    """Half-width ``w(l) = c0 + c1 l + c2 l^2 + c3 l^3`` over ``l`` in ``[0, 1]``."""

    coefficients: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coefficients)
        if len(c) != 4:
            raise ValueError("a cubic profile has 4 coefficients")
        object.__setattr__(self, "coefficients", c)

    def __call__(self, ell):
        ell = np.asarray(ell, dtype=float)
        c0, c1, c2, c3 = self.coefficients
        return c0 + ell * (c1 + ell * (c2 + ell * c3))

    def minimum(self, samples=201) -> float:
        return float(self(np.linspace(0.0, 1.0, samples)).min())

    @staticmethod
    def basis(ell):
        ell = np.asarray(ell, dtype=float)
        return np.stack([np.ones_like(ell), ell, ell ** 2, ell ** 3], axis=-1)


@dataclass(frozen=True, eq=False)
class LinkChain:
    """Planar serial chain; the last link is a zero-width fin.

    Attributes
    ----------
    base : (2,) array
        Position of joint 0 (held fixed).
    link_lengths : (n_links,) array
    half_widths : (n_links,) array
        Half-widths at joints ``0 .. n_links-1``; the last entry is the width
        where the fin starts. Widths vary linearly along each body link.
    heading : float
        Direction of the chain when all joint angles are zero.
    """

    base: np.ndarray
    link_lengths: np.ndarray
    half_widths: np.ndarray
    heading: float = 0.0

    def __post_init__(self):
        L = np.asarray(self.link_lengths, dtype=float)
        W = np.asarray(self.half_widths, dtype=float)
        if L.ndim != 1 or L.size < 2:
            raise ValueError("a chain needs at least two links")
        if np.any(L <= 0):
            raise ValueError("link lengths must be positive")
        if W.shape != L.shape:
            raise ValueError("need one half-width per joint")
        object.__setattr__(self, "link_lengths", L)
        object.__setattr__(self, "half_widths", W)
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).reshape(2))

    @classmethod
    def uniform(cls, profile: CubicProfile, length=1.0, n_links=10, base=(0.0, 0.0), heading=0.0):
        """Equal links; the body (all links but the fin) samples ``profile`` at its joints."""
        ell = np.arange(n_links) / (n_links - 1)
        return cls(np.asarray(base), np.full(n_links, length / n_links), profile(ell), heading)

    @property
    def n_links(self):
        return self.link_lengths.size

    def joint_positions(self, joint_angles) -> np.ndarray:
        """Joints ``0 .. n_links`` (the last is the fin tip)."""
        phi = self.heading + np.cumsum(np.asarray(joint_angles, dtype=float))
        steps = self.link_lengths[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return self.base + np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])


@dataclass(frozen=True)
class _Sampling:
    """Where each outline node sits: link index, position along the link, side in [-1, 1]."""

    link: np.ndarray
    t: np.ndarray
    side: np.ndarray

    @classmethod
    def build(cls, chain: LinkChain, spacing: float):
        """Uniform spacing along the body centre line, separately for the fin."""
        lengths = chain.link_lengths
        body = lengths.size - 1
        starts = np.concatenate([[0.0], np.cumsum(lengths[:body])])
        n_side = max(1, int(round(starts[-1] / spacing)))
        arc = starts[-1] * np.arange(n_side) / n_side
        j_side = np.minimum(np.searchsorted(starts, arc, side="right") - 1, body - 1)
        left = list(zip(j_side, (arc - starts[j_side]) / lengths[j_side]))
        n_fin = max(1, int(round(lengths[body] / spacing)))
        fin = [(body, k / n_fin) for k in range(n_fin + 1)]
        nb = max(0, int(round(2.0 * chain.half_widths[0] / spacing)) - 1)
        links, ts, sides = [], [], []
        for j, t in left:
            links.append(j), ts.append(t), sides.append(1.0)
        for j, t in fin:
            links.append(j), ts.append(t), sides.append(0.0)
        for j, t in reversed(left):
            links.append(j), ts.append(t), sides.append(-1.0)
        for k in range(1, nb + 1):
            links.append(0), ts.append(0.0), sides.append(-1.0 + 2.0 * k / (nb + 1))
        return cls(np.array(links), np.array(ts), np.array(sides))


def _chain_kinematics(chain: LinkChain, samp: _Sampling, angles, rates, d_angles=None, d_rates=None, d_widths=None):
    """Node positions and velocities, plus tangents along ``m`` parameter directions.

    ``d_angles``/``d_rates`` are ``(n_links, m)`` joint-angle tangents and
    ``d_widths`` is ``(n_links, m)`` joint half-width tangents.
    """
    lengths = chain.link_lengths
    nl = lengths.size
    phi = chain.heading + np.cumsum(angles)
    phid = np.cumsum(rates)
    e = np.stack([np.cos(phi), np.sin(phi)], axis=1)            # (nl, 2)
    nrm = np.stack([-np.sin(phi), np.cos(phi)], axis=1)
    W = np.append(chain.half_widths, 0.0)                        # fin tip width
    j, t, sd = samp.link, samp.t, samp.side
    fin = j == nl - 1
    w = np.where(fin, 0.0, (1.0 - t) * W[j] + t * W[j + 1])

    lev = lengths[:, None] * e
    P = chain.base + np.vstack([np.zeros(2), np.cumsum(lev, axis=0)])[:nl]
    x = P[j] + (t * lengths[j])[:, None] * e[j] + (sd * w)[:, None] * nrm[j]

    vlink = (lengths * phid)[:, None] * nrm                      # (nl, 2)
    V = np.vstack([np.zeros(2), np.cumsum(vlink, axis=0)])[:nl]
    u = V[j] + (t * lengths[j] * phid[j])[:, None] * nrm[j] - (sd * w * phid[j])[:, None] * e[j]
    if d_angles is None:
        return x, u, None, None

    m = d_angles.shape[1]
    dphi = np.cumsum(d_angles, axis=0)                           # (nl, m)
    dphid = np.cumsum(d_rates, axis=0)
    dW = np.vstack([d_widths, np.zeros((1, m))])
    dw = np.where(fin[:, None], 0.0,
                  (1.0 - t)[:, None] * dW[j] + t[:, None] * dW[j + 1])

    # positions
    dP_link = lengths[:, None, None] * nrm[:, :, None] * dphi[:, None, :]        # (nl, 2, m)
    dP = np.concatenate([np.zeros((1, 2, m)), np.cumsum(dP_link, axis=0)])[:nl]
    dx = (dP[j]
          + (t * lengths[j])[:, None, None] * nrm[j][:, :, None] * dphi[j][:, None, :]
          - (sd * w)[:, None, None] * e[j][:, :, None] * dphi[j][:, None, :]
          + (sd[:, None] * dw)[:, None, :] * nrm[j][:, :, None])

    # velocities
    dV_link = lengths[:, None, None] * (nrm[:, :, None] * dphid[:, None, :]
                                        - e[:, :, None] * (phid[:, None] * dphi)[:, None, :])
    dV = np.concatenate([np.zeros((1, 2, m)), np.cumsum(dV_link, axis=0)])[:nl]
    tl = (t * lengths[j])[:, None, None]
    du = (dV[j]
          + tl * (nrm[j][:, :, None] * dphid[j][:, None, :]
                  - e[j][:, :, None] * (phid[j][:, None] * dphi[j])[:, None, :])
          - (sd[:, None] * dw * phid[j][:, None])[:, None, :] * e[j][:, :, None]
          - (sd * w)[:, None, None] * (e[j][:, :, None] * dphid[j][:, None, :]
                                       + nrm[j][:, :, None] * (phid[j][:, None] * dphi[j])[:, None, :]))
    return x, u, dx, du


def tail_forward_kinematics(chain: LinkChain, joint_angles, joint_rates, spacing=None, sampling=None) -> BoundaryMesh:
    """Closed outline of the tail (left side, fin, right side, base edge).

    Node velocities are the kinematic Jacobian applied to ``joint_rates``.
    ``spacing`` sets the target node distance when no ``sampling`` is given.
    """
    angles = np.asarray(joint_angles, dtype=float)
    rates = np.asarray(joint_rates, dtype=float)
    if angles.shape != (chain.n_links,) or rates.shape != (chain.n_links,):
        raise ValueError(f"expected {chain.n_links} joint angles and rates, "
                         f"got {angles.shape} and {rates.shape}")
    if sampling is None:
        if spacing is None:
            raise ValueError("need a node spacing or a sampling")
        sampling = _Sampling.build(chain, spacing)
    x, u, _, _ = _chain_kinematics(chain, sampling, angles, rates)
    s, _, _ = _midpoint_weights(x)
    return BoundaryMesh(x, u, s, closed=True)


@dataclass(frozen=True)
class GaitParams:
    """Sinusoidal joint motion ``a_j sin(2 pi f t + phi_j) + b_j``.

    ``offsets`` (``b_j``) default to zero.
    """

    frequency: float
    amplitudes: tuple
    phases: tuple
    offsets: tuple | None = None

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=float)
        ph = np.asarray(self.phases, dtype=float)
        if not self.frequency > 0:
            raise ValueError("gait frequency must be positive")
        if a.shape != ph.shape:
            raise ValueError("amplitudes and phases must have the same length")
        if np.any(np.abs(a) >= np.pi / 2):
            raise ValueError("joint amplitudes must stay below pi/2")
        object.__setattr__(self, "amplitudes", tuple(a))
        object.__setattr__(self, "phases", tuple(ph))
        b = np.zeros_like(a) if self.offsets is None else np.asarray(self.offsets, dtype=float)
        object.__setattr__(self, "offsets", tuple(b))

    @classmethod
    def traveling_wave(cls, frequency, n_joints=10, amplitude=0.2, wavelength=1.0, head_amplitude=0.25):
        """Joint amplitudes growing from ``head_amplitude * amplitude`` to ``amplitude``, phase lag along the chain."""
        j = np.arange(n_joints)
        a = amplitude * (head_amplitude + (1.0 - head_amplitude) * j / max(n_joints - 1, 1))
        ph = -2.0 * np.pi * j / (n_joints * wavelength)
        return cls(frequency, tuple(a), tuple(ph))


def gait_angles(gait: GaitParams, t):
    """Joint angles and their exact time derivatives at time ``t``."""
    a = np.asarray(gait.amplitudes)
    psi = 2.0 * np.pi * gait.frequency * t + np.asarray(gait.phases)
    w = 2.0 * np.pi * gait.frequency
    return a * np.sin(psi) + np.asarray(gait.offsets), a * w * np.cos(psi)


def gait_frequency_derivative(gait: GaitParams, t):
    """d(angles)/df and d(rates)/df."""
    a = np.asarray(gait.amplitudes)
    psi = 2.0 * np.pi * gait.frequency * t + np.asarray(gait.phases)
    dpsi = 2.0 * np.pi * t
    w = 2.0 * np.pi * gait.frequency
    return a * np.cos(psi) * dpsi, a * (2.0 * np.pi * np.cos(psi) - w * np.sin(psi) * dpsi)


class AngleTrajectory:
    """Joint angles read from a table of ``time angle_0 ... angle_{n-1}`` rows.

    Interpolated with cubic splines (periodic when the first and last rows
    agree, in which case times wrap around the period).

    Parameters
    ----------
    times : (m,) array
        Sample times in seconds.
    angles : (m, n_joints) array
        Radians.
    time_scale : float
        Seconds per nondimensional time unit; queries are nondimensional.
    """

    def __init__(self, times, angles, time_scale=1.0):
        times = np.asarray(times, dtype=float)
        angles = np.asarray(angles, dtype=float)
        if times.ndim != 1 or angles.ndim != 2 or angles.shape[0] != times.size:
            raise ValueError("need one row of joint angles per sample time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        self.times = times
        self.angles = angles
        self.time_scale = float(time_scale)
        self.periodic = bool(np.allclose(angles[0], angles[-1], atol=1e-12))
        self._spline = CubicSpline(times, angles, axis=0, bc_type="periodic" if self.periodic else "not-a-knot")

    @classmethod
    def load(cls, path, time_scale=1.0):
        data = np.loadtxt(path, comments="#", ndmin=2)
        if data.shape[1] < 2:
            raise ValueError(f"{path}: expected a time column followed by joint angles")
        return cls(data[:, 0], data[:, 1:], time_scale)

    @property
    def n_joints(self):
        return self.angles.shape[1]

    def __call__(self, t):
        """Angles and rates (per nondimensional time) at nondimensional ``t``."""
        tp = self.times[0] + t * self.time_scale
        if self.periodic:
            period = self.times[-1] - self.times[0]
            tp = self.times[0] + np.mod(tp - self.times[0], period)
        return self._spline(tp), self._spline(tp, 1) * self.time_scale


class TailBody:
    """Articulated tail with a cubic half-width profile and prescribed joint motion.

    Parameters
    ----------
    coefficients : sequence of 4 floats
        Cubic profile coefficients ``c0 .. c3``.
    motion : GaitParams or AngleTrajectory
    length : float
        Total chain length (the fin is one of ``n_links`` equal links).
    parameters : tuple of str
        Design variables, drawn from ``c0 .. c3`` and ``frequency`` (gait only).
    spacing : float
        Target node spacing, fixed at construction.
    """

    stationary = False
    SHAPE = ("c0", "c1", "c2", "c3")

    def __init__(self, coefficients, motion, length=1.0, n_links=10, base=(0.0, 0.0), heading=0.0,
                 parameters=SHAPE, spacing=0.05, w_min=None):
        self.coefficients = np.asarray(coefficients, dtype=float)
        if self.coefficients.shape != (4,):
            raise ValueError("need 4 profile coefficients")
        self.motion = motion
        self.length = float(length)
        self.n_links = int(n_links)
        self.base = np.asarray(base, dtype=float)
        self.heading = float(heading)
        allowed = self.SHAPE + (("frequency",) if isinstance(motion, GaitParams) else ())
        bad = set(parameters) - set(allowed)
        if bad:
            raise ValueError(f"unknown or unsupported tail parameters {sorted(bad)}")
        self.parameter_names = tuple(parameters)
        self.w_min = w_min
        self.spacing = float(spacing)
        chain = self.chain(self.theta0())
        self._sampling = _Sampling.build(chain, self.spacing)
        n_motion = motion.n_joints if isinstance(motion, AngleTrajectory) else len(motion.amplitudes)
        if n_motion != self.n_links:
            raise ValueError(f"motion drives {n_motion} joints, chain has {self.n_links}")

    @property
    def n_theta(self):
        return len(self.parameter_names)

    @property
    def n_nodes(self):
        return self._sampling.link.size

    def theta0(self) -> np.ndarray:
        vals = dict(zip(self.SHAPE, self.coefficients))
        if isinstance(self.motion, GaitParams):
            vals["frequency"] = self.motion.frequency
        return np.array([vals[k] for k in self.parameter_names], dtype=float)

    def _unpack(self, theta):
        theta = self.theta0() if theta is None else np.asarray(theta, dtype=float)
        vals = dict(zip(self.SHAPE, self.coefficients))
        if isinstance(self.motion, GaitParams):
            vals["frequency"] = self.motion.frequency
        vals.update(zip(self.parameter_names, theta))
        coeffs = np.array([vals[k] for k in self.SHAPE])
        motion = self.motion
        if isinstance(motion, GaitParams) and vals["frequency"] != motion.frequency:
            motion = GaitParams(vals["frequency"], motion.amplitudes, motion.phases, motion.offsets)
        return coeffs, motion

    def profile(self, theta=None) -> CubicProfile:
        return CubicProfile(tuple(self._unpack(theta)[0]))

    def chain(self, theta=None) -> LinkChain:
        profile = self.profile(theta)
        floor = 0.0 if self.w_min is None else self.w_min
        w = profile.minimum()
        if not w > 0 or w < floor:
            raise ValueError(f"tail half-width drops to {w:.4g}, below the floor {floor:.4g}")
        return LinkChain.uniform(profile, self.length, self.n_links, self.base, self.heading)

    def joint_motion(self, theta, t):
        _, motion = self._unpack(theta)
        if isinstance(motion, GaitParams):
            return gait_angles(motion, t)
        return motion(t)

    def mesh(self, theta=None, t=0.0) -> BoundaryMesh:
        angles, rates = self.joint_motion(theta, t)
        return tail_forward_kinematics(self.chain(theta), angles, rates, sampling=self._sampling)

    def boundary_jacobian(self, theta=None, t=0.0) -> BoundaryJacobian:
        coeffs, motion = self._unpack(theta)
        chain = self.chain(theta)
        angles, rates = self.joint_motion(theta, t)
        nl, m = self.n_links, self.n_theta
        d_ang = np.zeros((nl, m))
        d_rate = np.zeros((nl, m))
        d_w = np.zeros((nl, m))
        ell = np.arange(nl) / (nl - 1)
        basis = CubicProfile.basis(ell)
        for c, name in enumerate(self.parameter_names):
            if name == "frequency":
                d_ang[:, c], d_rate[:, c] = gait_frequency_derivative(motion, t)
            else:
                d_w[:, c] = basis[:, self.SHAPE.index(name)]
        x, _, dx, du = _chain_kinematics(chain, self._sampling, angles, rates, d_ang, d_rate, d_w)
        _, d, seg = _midpoint_weights(x)
        ds = _midpoint_weight_derivative(d, seg, dx)
        return BoundaryJacobian(_stack_xy(dx), _stack_xy(du), ds)


def boundary_jacobian(body, theta, t=0.0) -> BoundaryJacobian:
    """``(d x_b / d theta, d u_b / d theta, d s / d theta)`` for any body."""
    return body.boundary_jacobian(theta, t)
