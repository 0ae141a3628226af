"""Trajectory derivatives by the implicit function theorem.

Each converged step satisfies ``g(z_{k+1}, u_k; theta) = 0`` with
``z = (u, p, f)``. Differentiating gives

    dg/dz . dz_{k+1}/dtheta = -(dg/du_k . du_k/dtheta + dg/dtheta),

solved with the LU factors kept from the step (forward mode, one right-hand
side per parameter). ``theta`` enters through the coupling matrix ``E`` (node
positions) and the prescribed boundary velocity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import StaleFactorization
from .fsi import FsiStepResult, JacobianCache, Trajectory, fsi_step
from .grid import FluidOperators, FluidState, convect_jacobian
from .immersed import BoundaryMesh, boundary_forces, interpolation_derivatives, interpolation_matrix
from .navier_stokes import FluidConfig

__all__ = ["SensitivityState", "ObjectiveSpec", "ift_step", "objective_thrust", "objective_gradient",
           "RolloutProblem", "finite_difference_check", "GradientCheckReport"]


@dataclass(eq=False)
class SensitivityState:
    """``du/dtheta`` (n_u, m), ``dp/dtheta`` (n_f, m), ``df/dtheta`` (n_b, m).

    ``ds`` holds the arc-length weight derivatives of the step's mesh.
    """

    du: np.ndarray
    dp: np.ndarray
    df: np.ndarray
    ds: np.ndarray | None = None
    solve_seconds: float = 0.0

    @classmethod
    def zeros(cls, n_u, n_f, n_theta, n_b=0):
        return cls(np.zeros((n_u, n_theta)), np.zeros((n_f, n_theta)), np.zeros((n_b, n_theta)))

    @property
    def n_theta(self):
        return self.du.shape[1]


def _row_tangents(jac_dx, n):
    """Per-row derivatives of the owning node's x and y coordinate, shape (2n, m) each."""
    dX = np.vstack([jac_dx[:n], jac_dx[:n]])
    dY = np.vstack([jac_dx[n:], jac_dx[n:]])
    return dX, dY


def ift_step(result: FsiStepResult, prev_sens: SensitivityState, theta, body, ops: FluidOperators,
             cfg: FluidConfig, u_prev, t_prev=None, jacobian=None) -> SensitivityState:
    """Sensitivities after ``result`` given those of the previous state.

    Parameters
    ----------
    result : FsiStepResult
        Converged step that kept its factorization.
    prev_sens : SensitivityState
        Derivatives of the state the step started from.
    u_prev : ndarray
        Velocity the step started from.
    ops : FluidOperators
        Operators; re-evaluated at ``t_prev`` for time-dependent data.
    jacobian : BoundaryJacobian, optional
        ``body.boundary_jacobian(theta, t_{k+1})`` if already available.

    Raises
    ------
    StaleFactorization
        The step kept no factorization, or it belongs to another state.
    """
    fact = result.factorization
    if fact is None:
        raise StaleFactorization("the step did not keep its factorization; "
                                 "run it with factorize_at_solution=True")
    fact.validate(result.state.u, result.mesh.positions if result.mesh.n_nodes else None)
    t0 = time.perf_counter()
    if t_prev is None:
        t_prev = result.state.t - cfg.dt
    ops_k = ops.at(t_prev) if ops.time_dependent else ops
    m = prev_sens.n_theta
    n_u, n_f, n_b = ops.n_u, ops.n_f, result.mesh.n_b

    # d r / d u_k applied to the incoming sensitivities
    du_k = prev_sens.du
    rhs_u = du_k / cfg.dt + (ops_k.L @ du_k) / (2.0 * cfg.Re)
    if cfg.convection:
        rhs_u = rhs_u - 0.5 * (convect_jacobian(u_prev, ops_k) @ du_k)
    rhs_b = np.zeros((n_b, m))
    ds = np.zeros((result.mesh.n_nodes, m))
    if n_b and body is not None and m:
        if jacobian is None:
            jacobian = body.boundary_jacobian(theta, result.state.t)
        ops_n = ops.at(result.state.t) if ops.time_dependent else ops
        _, EX, EY = interpolation_derivatives(result.mesh, ops_n)
        dX, dY = _row_tangents(jacobian.dx, result.mesh.n_nodes)
        f = result.f_tilde
        u = result.state.u
        rhs_u = rhs_u - (EX.T @ (f[:, None] * dX) + EY.T @ (f[:, None] * dY))
        rhs_b = -(dX * (EX @ u)[:, None] + dY * (EY @ u)[:, None] - jacobian.du)
        ds = jacobian.ds
    rhs = np.vstack([rhs_u, np.zeros((n_f, m)), rhs_b])
    sol = fact.solve(rhs) if m else np.zeros((fact.size, 0))
    sol = sol.reshape(fact.size, m)
    return SensitivityState(sol[:n_u], sol[n_u:n_u + n_f], sol[n_u + n_f:], ds,
                            time.perf_counter() - t0)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Time integral of the boundary force along ``direction``.

    The loss is ``-sum_k q^T f_b_k dt`` with ``q = [s, 0]`` (for the default x
    direction), i.e. minus the force the body exerts on the fluid. For a tail
    pointing along +x this is the negative thrust.

    ``include_quadrature_ds`` keeps the derivative of the quadrature weights
    ``s`` in shape gradients; switching it off reproduces a gradient that
    ignores how ``q`` moves with the shape.
    """

    dt: float
    horizon: int | None = None
    direction: tuple = (1.0, 0.0)
    include_quadrature_ds: bool = True

    def weights(self, mesh: BoundaryMesh) -> np.ndarray:
        """``q`` in the ``[x-block; y-block]`` layout."""
        dx, dy = self.direction
        return np.concatenate([dx * mesh.s, dy * mesh.s])


def _steps(trajectory, spec):
    steps = trajectory.steps if isinstance(trajectory, Trajectory) else list(trajectory)
    return steps if spec.horizon is None else steps[:spec.horizon]


def _flat(fb):
    return np.concatenate([fb[:, 0], fb[:, 1]])


def objective_thrust(trajectory, spec: ObjectiveSpec, cfg: FluidConfig, grid) -> float:
    """``-sum_k q^T f_b_k dt`` over the trajectory steps."""
    total = 0.0
    for res in _steps(trajectory, spec):
        if res.mesh.n_nodes == 0:
            continue
        fb = boundary_forces(res.f_tilde, cfg, grid, res.mesh)
        total += spec.weights(res.mesh) @ _flat(fb)
    return -total * spec.dt


def objective_gradient(trajectory, sens_states, spec: ObjectiveSpec, cfg: FluidConfig, grid) -> np.ndarray:
    """Gradient of :func:`objective_thrust` from per-step sensitivities."""
    steps = _steps(trajectory, spec)
    sens_states = list(sens_states)[:len(steps)]
    if not sens_states:
        return np.zeros(0)
    grad = np.zeros(sens_states[0].n_theta)
    hxhy = grid.hx * grid.hy
    for res, sens in zip(steps, sens_states):
        mesh = res.mesh
        if mesh.n_nodes == 0:
            continue
        n = mesh.n_nodes
        s2 = np.concatenate([mesh.s, mesh.s])
        ds = sens.ds if sens.ds is not None else np.zeros((n, grad.size))
        ds2 = np.vstack([ds, ds])
        q = spec.weights(mesh)
        dirv = np.concatenate([np.full(n, spec.direction[0]), np.full(n, spec.direction[1])])
        fb = _flat(boundary_forces(res.f_tilde, cfg, grid, mesh))
        # f_b = -hxhy f / s  =>  d f_b = -hxhy (df / s - f ds / s^2)
        dfb = -hxhy * (sens.df / s2[:, None] - (res.f_tilde / s2 ** 2)[:, None] * ds2)
        g = q @ dfb
        if spec.include_quadrature_ds:
            g = g + (dirv * fb) @ ds2
        grad -= g * spec.dt
    return grad


@dataclass(eq=False)
class RolloutProblem:
    """A complete differentiable rollout: body, flow setup and objective.

    ``evaluate(theta)`` runs the simulation and returns the loss and (when
    ``gradient=True``) its gradient, computed step by step alongside the flow.
    """

    body: object
    ops: FluidOperators
    cfg: FluidConfig
    initial: FluidState
    n_steps: int
    spec: ObjectiveSpec | None = None
    record: bool = False
    last: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.spec is None:
            self.spec = ObjectiveSpec(dt=self.cfg.dt)

    def evaluate(self, theta, gradient=True):
        theta = np.asarray(theta, dtype=float)
        body, ops, cfg = self.body, self.ops, self.cfg
        m = theta.size
        state = self.initial
        sens = SensitivityState.zeros(ops.n_u, ops.n_f, m)
        f_prev = None
        traj = Trajectory(self.initial)
        sens_list = []
        stationary = getattr(body, "stationary", False)
        mesh = body.mesh(theta, state.t) if stationary else None
        E = interpolation_matrix(mesh, ops) if stationary else None
        timing = {"step": 0.0, "sensitivity": 0.0}
        for k in range(self.n_steps):
            if not stationary:
                mesh, E = body.mesh(theta, state.t + cfg.dt), None
            t0 = time.perf_counter()
            res = fsi_step(state, mesh, ops, cfg, f_prev, E=E, factorize_at_solution=gradient, step_index=k)
            timing["step"] += time.perf_counter() - t0
            if gradient:
                sens = ift_step(res, sens, theta, body, ops, cfg, state.u, state.t)
                timing["sensitivity"] += sens.solve_seconds
                sens_list.append(sens)
                res.factorization = None
            traj.steps.append(res)
            state, f_prev = res.state, res.f_tilde
        loss = objective_thrust(traj, self.spec, cfg, ops.grid)
        self.last = {"timing": timing}
        if self.record:
            self.last.update(trajectory=traj, sensitivities=sens_list)
        if not gradient:
            return loss
        return loss, objective_gradient(traj, sens_list, self.spec, cfg, ops.grid)

    def __call__(self, theta):
        return self.evaluate(theta, gradient=True)


@dataclass
class GradientCheckReport:
    analytic: np.ndarray
    finite_difference: np.ndarray
    relative_errors: np.ndarray
    steps: np.ndarray

    @property
    def max_relative_error(self) -> float:
        return float(np.max(self.relative_errors, initial=0.0))


def finite_difference_check(theta, setup, eps=1e-5, atol=1e-12, floor=1e-6) -> GradientCheckReport:
    """Compare the analytic gradient of ``setup`` with central differences.

    ``setup(theta)`` must return ``(loss, gradient)``; ``setup.evaluate(theta,
    gradient=False)`` is used for the perturbed runs when available. Step sizes
    are ``eps * max(|theta_i|, 1)``. Relative errors divide by
    ``max(|fd_i|, floor * max|fd|, atol)`` so components that vanish by
    symmetry are judged against the scale of the whole gradient.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    theta = np.asarray(theta, dtype=float)
    _, grad = setup(theta)
    loss_only = getattr(setup, "evaluate", None)

    def f(th):
        return loss_only(th, gradient=False) if loss_only is not None else setup(th)[0]

    steps = eps * np.maximum(np.abs(theta), 1.0)
    fd = np.zeros_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += steps[i]
        tm[i] -= steps[i]
        fd[i] = (f(tp) - f(tm)) / (2.0 * steps[i])
    grad = np.asarray(grad, dtype=float)
    denom = np.maximum(np.abs(fd), max(floor * np.max(np.abs(fd), initial=0.0), atol))
    rel = np.abs(grad - fd) / denom
    return GradientCheckReport(grad, fd, rel, steps)
