"""Newton iteration on the momentum / continuity / no-slip saddle-point system.

Both the body-free Navier-Stokes step and the coupled immersed-boundary step go
through :func:`newton_solve`; without a body the no-slip block is simply absent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NonConvergence, SingularSystem, StaleFactorization
from .grid import FluidOperators, convect, convect_jacobian

DUAL_REGULARIZATION = 1e-10


@dataclass
class StepDiagnostics:
    """Outcome of one implicit step.

    ``final_residual_norm`` is the infinity norm over all residual blocks.
    """

    iterations: int
    final_residual_norm: float
    converged: bool
    momentum_residual: float = 0.0
    continuity_residual: float = 0.0
    noslip_residual: float = 0.0
    factorizations: int = 0
    regularized: bool = False
    residual_history: list = field(default_factory=list)
    solve_seconds: float = 0.0


@dataclass(eq=False)
class KktFactorization:
    """LU factors of the saddle-point Jacobian at a known state.

    ``solve`` accepts one right-hand side or a matrix of them. ``validate``
    raises :class:`StaleFactorization` if asked about a different state.
    """

    lu: object
    matrix: sp.csc_matrix
    u: np.ndarray
    positions: np.ndarray | None
    n_u: int
    n_f: int
    n_b: int
    regularized: bool = False

    @property
    def size(self) -> int:
        return self.n_u + self.n_f + self.n_b

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        return self.lu.solve(rhs)

    def validate(self, u, positions=None):
        if not np.array_equal(np.asarray(u), self.u):
            raise StaleFactorization("velocity differs from the factorized state")
        if positions is not None or self.positions is not None:
            if positions is None or self.positions is None or \
                    not np.array_equal(np.asarray(positions), self.positions):
                raise StaleFactorization("boundary nodes differ from the factorized state")


@dataclass(eq=False)
class JacobianCache:
    """Reusable factorization for chord (frozen-Jacobian) Newton.

    Keeps the last factorization while the coupling matrix and time step are
    unchanged. The solver marks it stale when convergence slows and refactors.
    """

    factorization: KktFactorization | None = None
    key: tuple | None = None
    stale: bool = True
    refactor_ratio: float = 0.2
    factorizations: int = 0


def assemble_kkt(u, ops: FluidOperators, cfg, E=None, A=None) -> sp.csc_matrix:
    """Jacobian of the step residual at ``u``.

    ``[[A + dN/du / 2, G, E^T], [G^T, P, 0], [E, 0, 0]]`` where ``P`` is zero
    except for a unit entry at the pinned pressure of a closed domain.
    """
    if A is None:
        A = (sp.identity(ops.n_u, format="csr") / cfg.dt - ops.L / (2.0 * cfg.Re)).tocsr()
    J11 = A + 0.5 * convect_jacobian(u, ops) if cfg.convection else A
    n_f = ops.n_f
    if ops.pressure_pin is not None:
        P = sp.csr_matrix(([1.0], ([ops.pressure_pin], [ops.pressure_pin])), shape=(n_f, n_f))
    else:
        P = None
    if E is None or E.shape[0] == 0:
        blocks = [[J11, ops.G], [ops.G.T, P]]
    else:
        blocks = [[J11, ops.G, E.T], [ops.G.T, P, None], [E, None, None]]
    return sp.bmat(blocks, format="csc")


class _System:
    """Residual and Jacobian of one implicit step; ``z = [u, p, f]``."""

    def __init__(self, A, r, ops, cfg, E, ub):
        self.A, self.r, self.ops, self.cfg = A, r, ops, cfg
        self.E = E if (E is not None and E.shape[0] > 0) else None
        self.ub = ub
        self.n_u, self.n_f = ops.n_u, ops.n_f
        self.n_b = 0 if self.E is None else self.E.shape[0]

    def split(self, z):
        n_u, n_f = self.n_u, self.n_f
        return z[:n_u], z[n_u:n_u + n_f], z[n_u + n_f:]

    def residual(self, z):
        u, p, f = self.split(z)
        ops = self.ops
        R = self.A @ u - self.r + ops.G @ p
        if self.cfg.convection:
            R = R + 0.5 * convect(u, ops)
        c1 = ops.G.T @ u - ops.bc_D
        if ops.pressure_pin is not None:
            c1[ops.pressure_pin] += p[ops.pressure_pin]
        if self.E is None:
            return np.concatenate([R, c1])
        R = R + self.E.T @ f
        c2 = self.E @ u - self.ub
        return np.concatenate([R, c1, c2])

    def blocks(self, F):
        n_u, n_f = self.n_u, self.n_f
        inf = lambda v: float(np.max(np.abs(v), initial=0.0))
        u_part, c_part, b_part = F[:n_u], F[n_u:n_u + n_f], F[n_u + n_f:]
        return inf(u_part), inf(c_part), inf(b_part)

    def factor(self, u, positions, step_index):
        K = assemble_kkt(u, self.ops, self.cfg, self.E, self.A)
        regularized = False
        try:
            lu = splu(K, permc_spec="COLAMD")
        except RuntimeError as exc:
            if self.n_b == 0:
                raise SingularSystem(f"saddle-point matrix is singular: {exc}", step_index) from exc
            n0 = self.n_u + self.n_f
            reg = sp.diags(np.r_[np.zeros(n0), np.full(self.n_b, -DUAL_REGULARIZATION)], format="csc")
            K = (K + reg).tocsc()
            try:
                lu = splu(K, permc_spec="COLAMD")
            except RuntimeError as exc2:
                raise SingularSystem(f"saddle-point matrix is singular even after "
                                     f"dual regularization: {exc2}", step_index) from exc2
            regularized = True
        return KktFactorization(lu, K, np.array(u, copy=True),
                                None if positions is None else np.array(positions, copy=True),
                                self.n_u, self.n_f, self.n_b, regularized)


def newton_solve(A, r, ops: FluidOperators, cfg, z0, E=None, ub=None, positions=None, *,
                 factorize_at_solution=False, cache: JacobianCache | None = None,
                 cache_key=None, step_index=None, raise_on_failure=True):
    """Solve ``F(z) = 0`` for one implicit step.

    Parameters
    ----------
    A, r : sparse matrix, ndarray
        Implicit operator and explicit right-hand side of the step.
    ops : FluidOperators
        Operators evaluated at the new time level.
    z0 : ndarray
        Initial iterate ``[u, p, f]``.
    E, ub : sparse matrix, ndarray, optional
        No-slip coupling and prescribed boundary velocity.
    factorize_at_solution : bool
        Return a factorization of the Jacobian at the converged iterate.
    cache : JacobianCache, optional
        Enables chord iterations that reuse an older factorization.

    Returns
    -------
    z, diagnostics, factorization
    """
    t0 = time.perf_counter()
    system = _System(A, r, ops, cfg, E, ub)
    z = np.array(z0, dtype=float, copy=True)
    F = system.residual(z)
    norm2 = float(np.linalg.norm(F))
    history = [float(np.max(np.abs(F), initial=0.0))]
    tol, max_iters = cfg.newton_tol, cfg.newton_max_iters
    n_fact = 0
    regularized = False
    fact = None          # factorization at the current iterate, if any
    it = 0
    while history[-1] > tol and it < max_iters:
        use_cached = (cache is not None and not cache.stale and cache.key == cache_key
                      and cache.factorization is not None)
        if use_cached:
            J = cache.factorization
        else:
            J = system.factor(z[:system.n_u], positions, step_index)
            n_fact += 1
            regularized |= J.regularized
            if cache is not None:
                cache.factorization, cache.key, cache.stale = J, cache_key, False
                cache.factorizations += 1
        dz = -J.solve(F)
        alpha, accepted = 1.0, False
        while alpha >= 2.0 ** -10:
            z_try = z + alpha * dz
            F_try = system.residual(z_try)
            n_try = float(np.linalg.norm(F_try))
            if np.isfinite(n_try) and n_try < norm2:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if use_cached:
                cache.stale = True
                continue
            break
        ratio = n_try / norm2 if norm2 > 0 else 0.0
        z, F, norm2 = z_try, F_try, n_try
        history.append(float(np.max(np.abs(F), initial=0.0)))
        it += 1
        fact = None
        # refresh when the chord rate is poor, or too slow to reach tol within the remaining
        # budget with a safety factor of ten (the rate tends to creep up late in a step)
        rate = max(ratio, history[-1] / history[-2]) if history[-2] > 0 else ratio
        too_slow = history[-1] * rate ** (max_iters - it) > 0.1 * tol
        if cache is not None and (ratio > cache.refactor_ratio or alpha < 1.0 or too_slow):
            cache.stale = True

    converged = history[-1] <= tol
    if converged and factorize_at_solution:
        if fact is None:
            fact = system.factor(z[:system.n_u], positions, step_index)
            n_fact += 1
            regularized |= fact.regularized
    mom, cont, nos = system.blocks(F)
    u = z[:system.n_u]
    cont = float(np.max(np.abs(ops.D @ u + ops.bc_D), initial=0.0))
    diag = StepDiagnostics(
        iterations=it, final_residual_norm=history[-1], converged=converged,
        momentum_residual=mom, continuity_residual=cont, noslip_residual=nos,
        factorizations=n_fact, regularized=regularized, residual_history=history,
        solve_seconds=time.perf_counter() - t0,
    )
    if not converged and raise_on_failure:
        raise NonConvergence(
            f"Newton stopped after {it} iterations with residual {history[-1]:.3e} "
            f"(tolerance {tol:.1e})", diagnostics=diag, partial=z, step_index=step_index)
    return z, diag, fact
