"""Bound-constrained BFGS with a backtracking Armijo line search."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FsiError, LineSearchFailure

__all__ = ["BfgsResult", "bfgs_optimize"]


@dataclass
class BfgsResult:
    theta: np.ndarray
    loss: float
    gradient: np.ndarray
    loss_history: list = field(default_factory=list)
    theta_history: list = field(default_factory=list)
    iterations: int = 0
    evaluations: int = 0
    converged: bool = False
    message: str = ""
    line_search_failed: bool = False


def _project(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def _bounds(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    b = np.asarray(bounds, dtype=float).reshape(n, 2)
    return b[:, 0], b[:, 1]


def bfgs_optimize(fun, theta0, bounds=None, max_iters=50, gtol=1e-6, ftol=1e-8, c1=1e-4, shrink=0.5,
                  max_backtracks=30, initial_step=None, callback=None, raise_on_failure=False) -> BfgsResult:
    """Minimize ``fun(theta) -> (loss, gradient)``.

    Search directions come from the inverse-Hessian BFGS update. Trial points
    are projected onto ``bounds`` (a sequence of ``(low, high)`` pairs) and
    accepted only under the Armijo condition with respect to the projected
    step, so the loss never increases. Trial points whose evaluation fails
    (non-finite loss or a solver error) are treated as rejected.

    Terminates when the projected gradient satisfies ``max|g| <= gtol``, the
    relative loss change drops below ``ftol``, or after ``max_iters``
    iterations.

    Parameters
    ----------
    initial_step : float, optional
        Cap on the length of the very first step, in parameter units.
    raise_on_failure : bool
        Raise :class:`LineSearchFailure` instead of returning the best iterate
        with ``line_search_failed=True``.
    """
    x = np.asarray(theta0, dtype=float).copy()
    n = x.size
    lo, hi = _bounds(bounds, n)
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("theta0 lies outside the bounds")
    f, g = fun(x)
    g = np.asarray(g, dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at theta0")
    res = BfgsResult(x.copy(), float(f), g.copy(), [float(f)], [x.copy()], evaluations=1)
    H = np.eye(n)
    first = True

    def proj_grad(x, g):
        return x - _project(x - g, lo, hi)

    for it in range(max_iters):
        if np.max(np.abs(proj_grad(x, g)), initial=0.0) <= gtol:
            res.converged, res.message = True, "projected gradient below tolerance"
            break
        # variables pinned at a bound with the gradient pushing outward stay fixed
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~active
        d = np.zeros(n)
        d[free] = -H[np.ix_(free, free)] @ g[free]
        if g @ d >= 0:                      # lost descent: restart from steepest descent
            H = np.eye(n)
            d = np.where(free, -g, 0.0)
        if first and initial_step is not None:
            norm = np.linalg.norm(d)
            if norm > initial_step:
                d *= initial_step / norm
        alpha = 1.0
        accepted = False
        for _ in range(max_backtracks):
            x_try = _project(x + alpha * d, lo, hi)
            step = x_try - x
            if not np.any(step):
                break
            try:
                f_try, g_try = fun(x_try)
                res.evaluations += 1
                ok = np.isfinite(f_try) and np.all(np.isfinite(g_try))
            except (FsiError, FloatingPointError, ValueError, np.linalg.LinAlgError):
                ok = False
            if ok and f_try <= f + c1 * (g @ step) and f_try <= f:
                accepted = True
                break
            alpha *= shrink
        if not accepted:
            res.line_search_failed = True
            res.message = "line search failed to find an Armijo point"
            if raise_on_failure:
                raise LineSearchFailure(res.message)
            break
        g_try = np.asarray(g_try, dtype=float)
        s, y = step, g_try - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        first = False
        rel = abs(f - f_try) / max(abs(f), 1e-300)
        x, f, g = x_try, float(f_try), g_try
        res.loss_history.append(f)
        res.theta_history.append(x.copy())
        res.iterations = it + 1
        if callback is not None:
            callback(res.iterations, x, f, g)
        if rel <= ftol:
            res.converged, res.message = True, "relative loss change below tolerance"
            break
    else:
        res.message = "iteration limit reached"
    res.theta, res.loss, res.gradient = x, f, g
    return res
