"""Crank-Nicolson time stepping of the incompressible Navier-Stokes equations.

One step solves, for ``(u, p)`` at the new time level,

    A u + N(u)/2 - r(u_k) + G p = 0,        D u + bc_D = 0,

with ``A = I/dt - L/(2 Re)`` and ``r(u_k) = (I/dt + L/(2 Re)) u_k - N(u_k)/2
+ bc_L/Re + a_ext``. Newton's method runs on the saddle-point system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._saddle import JacobianCache, StepDiagnostics, newton_solve
from .grid import FluidOperators, FluidState, convect

__all__ = ["FluidConfig", "StepDiagnostics", "assemble_A", "explicit_rhs", "ns_step"]


@dataclass(frozen=True, eq=False)
class FluidConfig:
    """Nondimensional flow parameters plus the reference scales for unit conversion.

    Parameters
    ----------
    Re : float
        Reynolds number.
    dt : float
        Time step. Negative values step backwards, which is only meaningful
        for reversibility checks of the linear Stokes limit.
    a_ext : ndarray, optional
        Constant external acceleration on the velocity unknowns.
    convection : bool
        ``False`` drops the nonlinear term (Stokes flow).
    """

    Re: float
    dt: float
    a_ext: np.ndarray | None = None
    newton_tol: float = 1e-8
    newton_max_iters: int = 10
    rho: float = 1.0
    u_ref: float = 1.0
    l_ref: float = 1.0
    convection: bool = True

    def __post_init__(self):
        if not self.Re > 0:
            raise ValueError("Re must be positive")
        if self.dt == 0 or not np.isfinite(self.dt):
            raise ValueError("dt must be finite and nonzero")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iters < 1:
            raise ValueError("newton_max_iters must be at least 1")
        if self.a_ext is not None:
            object.__setattr__(self, "a_ext", np.asarray(self.a_ext, dtype=float))

    @classmethod
    def from_physical(cls, rho, mu, u_ref, l_ref, dt, **kw):
        """Build from density, dynamic viscosity and reference scales (SI units).

        ``dt`` is already nondimensional (in units of ``l_ref / u_ref``).
        """
        if mu <= 0 or rho <= 0:
            raise ValueError("rho and mu must be positive")
        return cls(Re=rho * u_ref * l_ref / mu, dt=dt, rho=rho, u_ref=u_ref, l_ref=l_ref, **kw)

    @property
    def time_scale(self) -> float:
        """Seconds per nondimensional time unit."""
        return self.l_ref / self.u_ref

    def replace(self, **kw) -> "FluidConfig":
        import dataclasses
        return dataclasses.replace(self, **kw)


def uniform_acceleration(ops: FluidOperators, gx=0.0, gy=0.0) -> np.ndarray:
    """Constant body acceleration ``(gx, gy)`` on every velocity unknown."""
    return np.concatenate([np.full(ops.layout.n_ux, float(gx)), np.full(ops.layout.n_uy, float(gy))])


def assemble_A(ops: FluidOperators, cfg: FluidConfig) -> sp.csr_matrix:
    """``I/dt - L/(2 Re)``."""
    return (sp.identity(ops.n_u, format="csr") / cfg.dt - ops.L / (2.0 * cfg.Re)).tocsr()


def explicit_rhs(u_k, ops: FluidOperators, cfg: FluidConfig, ops_next: FluidOperators | None = None):
    """Explicit half of the Crank-Nicolson step evaluated at ``u_k``.

    With time-dependent boundary data pass the operators of the new time level
    as ``ops_next``; the boundary term then averages both levels.
    """
    u_k = np.asarray(u_k, dtype=float)
    r = u_k / cfg.dt + (ops.L @ u_k) / (2.0 * cfg.Re)
    if cfg.convection:
        r -= 0.5 * convect(u_k, ops)
    if ops_next is None:
        r += ops.bc_L / cfg.Re
    else:
        r += (ops.bc_L + ops_next.bc_L) / (2.0 * cfg.Re)
    if cfg.a_ext is not None:
        r += cfg.a_ext
    return r


def step_operators(ops: FluidOperators, t_next: float) -> FluidOperators:
    return ops.at(t_next) if ops.time_dependent else ops


def ns_step(state: FluidState, ops: FluidOperators, cfg: FluidConfig, *, cache: JacobianCache | None = None,
            step_index=None, raise_on_failure=True):
    """Advance ``state`` by one time step without an immersed body.

    ``ops`` are the operators at ``state.t``; time-dependent boundary data are
    re-evaluated at ``state.t + dt``.

    Returns
    -------
    FluidState, StepDiagnostics

    Raises
    ------
    NonConvergence
        The Newton cap was hit (unless ``raise_on_failure`` is false, in which
        case the last iterate is returned with ``converged=False``).
    SingularSystem
        The saddle-point matrix could not be factorized.
    """
    ops_k = ops.at(state.t) if ops.time_dependent else ops
    ops_n = step_operators(ops_k, state.t + cfg.dt)
    A = assemble_A(ops_n, cfg)
    r = explicit_rhs(state.u, ops_k, cfg, ops_n if ops.time_dependent else None)
    z0 = np.concatenate([state.u, state.p])
    z, diag, _ = newton_solve(A, r, ops_n, cfg, z0, cache=cache, cache_key=("ns", cfg.dt),
                              step_index=step_index, raise_on_failure=raise_on_failure)
    return FluidState(z[:ops.n_u], z[ops.n_u:], state.t + cfg.dt), diag
