"""Coupled fluid / immersed-body time step and the rollout driver.

The step solves momentum, continuity and no-slip together::

    A u + N(u)/2 - r(u_k) + G p + E^T f = 0
    G^T u - bc_D                       = 0
    E u - u_b                          = 0

for ``(u, p, f)`` at the new time level, where ``f`` are the no-slip
multipliers. ``E`` is evaluated at the boundary configuration of the new
time level and held fixed during the Newton iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._saddle import JacobianCache, KktFactorization, StepDiagnostics, assemble_kkt, newton_solve
from .errors import FsiError
from .grid import FluidOperators, FluidState
from .immersed import BoundaryMesh, boundary_forces, interpolation_matrix, net_force
from .navier_stokes import FluidConfig, assemble_A, explicit_rhs, step_operators

__all__ = ["FsiStepResult", "KktFactorization", "JacobianCache", "Trajectory", "assemble_kkt",
           "fsi_step", "simulate"]


@dataclass(eq=False)
class FsiStepResult:
    """Converged step: new state, no-slip multipliers and solver diagnostics.

    ``factorization`` is populated only when requested (it holds the LU factors
    of the Jacobian at the converged state).
    """

    state: FluidState
    f_tilde: np.ndarray
    diagnostics: StepDiagnostics
    factorization: KktFactorization | None
    mesh: BoundaryMesh
    E: object = field(repr=False, default=None)

    def body_force(self, cfg: FluidConfig, ops: FluidOperators) -> np.ndarray:
        """Net force the body exerts on the fluid, nondimensional ``(F_x, F_y)``."""
        if self.mesh.n_nodes == 0:
            return np.zeros(2)
        return net_force(boundary_forces(self.f_tilde, cfg, ops.grid, self.mesh), self.mesh)

    def hydrodynamic_force(self, cfg: FluidConfig, ops: FluidOperators) -> np.ndarray:
        """Net force the fluid exerts on the body (drag along +x for flow along +x)."""
        return -self.body_force(cfg, ops)


def fsi_step(state: FluidState, mesh: BoundaryMesh, ops: FluidOperators, cfg: FluidConfig,
             f_prev=None, *, E=None, factorize_at_solution=False, cache: JacobianCache | None = None,
             step_index=None, raise_on_failure=True) -> FsiStepResult:
    """Advance one step with the body boundary ``mesh`` of the new time level.

    Parameters
    ----------
    state : FluidState
        State at time ``t_k``; also the warm start.
    mesh : BoundaryMesh
        Boundary nodes and velocities at ``t_k + dt``. An empty mesh gives the
        body-free step.
    ops : FluidOperators
        Operators (boundary data re-evaluated internally for ``t_k + dt``).
    f_prev : ndarray, optional
        Previous multipliers for warm starting; zeros otherwise.
    E : sparse matrix, optional
        Precomputed coupling matrix for ``mesh``.
    factorize_at_solution : bool
        Keep an LU factorization of the Jacobian at the converged state, as
        needed for sensitivities.
    cache : JacobianCache, optional
        Reuse Jacobian factorizations across iterations and steps.
    """
    ops_k = ops.at(state.t) if ops.time_dependent else ops
    ops_n = step_operators(ops_k, state.t + cfg.dt)
    A = assemble_A(ops_n, cfg)
    r = explicit_rhs(state.u, ops_k, cfg, ops_n if ops.time_dependent else None)
    n_b = mesh.n_b
    if n_b == 0:
        z0 = np.concatenate([state.u, state.p])
        z, diag, fact = newton_solve(A, r, ops_n, cfg, z0, factorize_at_solution=factorize_at_solution,
                                     cache=cache, cache_key=("ns", cfg.dt), step_index=step_index,
                                     raise_on_failure=raise_on_failure)
        new = FluidState(z[:ops.n_u], z[ops.n_u:], state.t + cfg.dt)
        return FsiStepResult(new, np.zeros(0), diag, fact, mesh, None)
    if E is None:
        E = interpolation_matrix(mesh, ops_n)
    f0 = np.zeros(n_b) if f_prev is None or len(f_prev) != n_b else np.asarray(f_prev, dtype=float)
    z0 = np.concatenate([state.u, state.p, f0])
    z, diag, fact = newton_solve(A, r, ops_n, cfg, z0, E=E, ub=mesh.ub, positions=mesh.positions,
                                 factorize_at_solution=factorize_at_solution, cache=cache,
                                 cache_key=("fsi", cfg.dt, id(E)), step_index=step_index,
                                 raise_on_failure=raise_on_failure)
    n_u, n_f = ops.n_u, ops.n_f
    new = FluidState(z[:n_u], z[n_u:n_u + n_f], state.t + cfg.dt)
    return FsiStepResult(new, z[n_u + n_f:], diag, fact, mesh, E)


@dataclass(eq=False)
class Trajectory:
    initial: FluidState
    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    @property
    def final(self) -> FluidState:
        return self.steps[-1].state if self.steps else self.initial

    def times(self) -> np.ndarray:
        return np.array([s.state.t for s in self.steps])


def simulate(initial: FluidState, body, theta, n_steps: int, ops: FluidOperators, cfg: FluidConfig, *,
             cache: JacobianCache | None = None, callback=None, keep_states=True,
             factorize_at_solution=False) -> Trajectory:
    """Roll out ``n_steps`` coupled steps.

    The boundary mesh (and its coupling matrix) is rebuilt every step from
    ``body.mesh(theta, t_{k+1})``, except for stationary bodies where it is
    built once. ``body=None`` runs the body-free flow. ``callback(k, result)``
    is invoked after each step; with ``keep_states=False`` only the last step
    is retained in the trajectory.

    Errors raised by a step carry the step index in ``step_index``.
    """
    traj = Trajectory(initial)
    state = initial
    f_prev = None
    mesh = E = None
    if body is None:
        mesh = BoundaryMesh.empty()
    elif getattr(body, "stationary", False):
        mesh = body.mesh(theta, initial.t)
        E = interpolation_matrix(mesh, ops)
    for k in range(n_steps):
        if body is not None and not getattr(body, "stationary", False):
            mesh = body.mesh(theta, state.t + cfg.dt)
            E = None
        try:
            res = fsi_step(state, mesh, ops, cfg, f_prev, E=E, cache=cache, step_index=k,
                           factorize_at_solution=factorize_at_solution)
        except FsiError as exc:
            if getattr(exc, "step_index", None) is None and hasattr(exc, "step_index"):
                exc.step_index = k
            raise
        if callback is not None:
            callback(k, res)
        if keep_states:
            traj.steps.append(res)
        else:
            traj.steps[:] = [res]
        state, f_prev = res.state, res.f_tilde
    return traj
