"""Experiment assembly and runners shared by the command line and the demos.

An :class:`Experiment` bundles the grid, operators, flow parameters, body and
initial state. It is built either from a :class:`SimConfig` or by the helper
constructors for the standard setups (cylinder in a free stream, tail in a free
stream, tail in a closed water tank).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._saddle import JacobianCache
from ..bodies import AngleTrajectory, CylinderBody, CylinderParams, GaitParams, TailBody
from ..errors import ConfigError
from ..fsi import fsi_step
from ..grid import (DomainBoundaryConditions, EdgeCondition, FluidState, GridSpec, build_operators,
                    velocity_from_streamfunction)
from ..immersed import BoundaryMesh, interpolation_matrix
from ..navier_stokes import FluidConfig
from ..sensitivity import ObjectiveSpec, RolloutProblem, finite_difference_check
from . import io
from .config import SimConfig, float_list
from .diagnostics import (ForceHistory, cycle_rms_difference, dominant_frequency, drag_lift_coefficients,
                          normalize_max, shedding_statistics)
from .optimizer import bfgs_optimize

log = logging.getLogger(__name__)

__all__ = ["Experiment", "from_config", "cylinder_experiment", "tail_experiment", "tank_tail_experiment",
           "run_simulation", "SimulationRecord", "optimize_tail", "gradient_check", "run_experiment"]


@dataclass(eq=False)
class Experiment:
    grid: GridSpec
    ops: object
    cfg: FluidConfig
    body: object
    initial: FluidState
    n_steps: int
    jacobian: str = "exact"
    name: str = "experiment"
    reference_length: float = 1.0
    extras: dict = field(default_factory=dict)

    @property
    def theta(self):
        return None if self.body is None else self.body.theta0()


# ----------------------------------------------------------------------------- builders

def _edge(spec) -> EdgeCondition:
    return EdgeCondition(spec.kind, spec.velocity)


def uniform_flow(ops, ux=1.0, uy=0.0):
    return FluidState(velocity_from_streamfunction(ops, lambda x, y: ux * y - uy * x), np.zeros(ops.n_f))


def perturbed_flow(ops, ux=1.0, uy=0.0, amplitude=0.5, center=(1.5, 0.5), radius=0.5):
    """Uniform flow plus a Gaussian vortex; discretely divergence-free by construction."""
    cx, cy = center

    def psi(x, y):
        return ux * y - uy * x + amplitude * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / radius ** 2)

    return FluidState(velocity_from_streamfunction(ops, psi), np.zeros(ops.n_f))


def from_config(sc: SimConfig) -> Experiment:
    """Build an experiment from a validated configuration."""
    fl = sc.fluid
    scale = sc.length_scale
    g = sc.grid
    grid = GridSpec.from_extent(g["nx"], g["ny"], (g["xmin"] * scale, g["xmax"] * scale),
                                (g["ymin"] * scale, g["ymax"] * scale))
    b = sc.boundary
    bc = DomainBoundaryConditions(_edge(b["left"]), _edge(b["right"]), _edge(b["bottom"]), _edge(b["top"]))
    ops = build_operators(grid, bc)
    kw = {k: fl[k] for k in ("newton_tol", "newton_max_iters", "convection") if k in fl}
    cfg = FluidConfig(Re=fl["re"], dt=fl["dt"], rho=fl["rho"], u_ref=fl["u_ref"], l_ref=fl["l_ref"], **kw)

    body = None
    bd = sc.body
    h = min(grid.hx, grid.hy)
    spacing = bd.get("spacing", h / scale) * scale
    ref_len = 1.0
    if bd["type"] == "cylinder":
        params = CylinderParams((bd.get("center_x", 0.0) * scale, bd.get("center_y", 0.0) * scale),
                                bd["diameter"] * scale)
        names = sc.gradients.get("parameters") or sc.optimize.get("parameters") or ("diameter",)
        try:
            body = CylinderBody.for_grid(params, grid, tuple(names), spacing)
        except ValueError as exc:
            raise ConfigError(f"body: {exc}", field="body") from exc
        ref_len = params.diameter
    elif bd["type"] == "tail":
        body = _tail_from_config(sc, grid, spacing, scale)
        ref_len = body.length

    init = sc.initial
    flow = init["flow"]
    if flow == "rest":
        initial = FluidState.rest(ops)
    elif flow == "uniform":
        initial = uniform_flow(ops, init.get("ux", 1.0), init.get("uy", 0.0))
    else:
        initial = perturbed_flow(ops, init.get("ux", 1.0), init.get("uy", 0.0), init.get("perturbation", 0.5),
                                 (init.get("perturbation_x", 1.5), init.get("perturbation_y", 0.5)),
                                 init.get("perturbation_radius", 0.5))
    return Experiment(grid, ops, cfg, body, initial, fl["n_steps"], fl["jacobian"],
                      sc.experiment.get("name", sc.source.stem if sc.source else "experiment"), ref_len,
                      {"config": sc})


def _tail_from_config(sc, grid, spacing, scale):
    bd, gt, fl = sc.body, sc.gait, sc.fluid
    n_links = bd.get("n_links", 10)
    seconds = gt.get("time_unit") == "seconds"
    time_scale = fl["l_ref"] / fl["u_ref"]
    if "trajectory" in gt:
        path = Path(gt["trajectory"])
        if not path.is_absolute():
            path = sc.base_dir / path
        try:
            motion = AngleTrajectory.load(path, time_scale if seconds else 1.0)
        except OSError as exc:
            raise ConfigError(f"cannot read gait.trajectory {path}: {exc}", field="gait.trajectory") from exc
    else:
        f = gt["frequency"] * (time_scale if seconds else 1.0)
        if "amplitudes" in gt:
            a = float_list(gt["amplitudes"], n_links, "gait.amplitudes")
            ph = float_list(gt.get("phases", (0.0,)), n_links, "gait.phases")
            off = float_list(gt.get("offsets", (0.0,)), n_links, "gait.offsets")
            motion = GaitParams(f, tuple(a), tuple(ph), tuple(off))
        else:
            motion = GaitParams.traveling_wave(f, n_links, gt.get("amplitude", 0.2), gt.get("wavelength", 1.0))
    names = sc.gradients.get("parameters") or sc.optimize.get("parameters") or TailBody.SHAPE
    try:
        return TailBody(np.asarray(bd["coefficients"]) * scale, motion, bd.get("length", 1.0) * scale, n_links,
                        (bd.get("base_x", 0.0) * scale, bd.get("base_y", 0.0) * scale), bd.get("heading", 0.0),
                        tuple(names), spacing, bd.get("w_min", 0.5 * min(grid.hx, grid.hy) / scale) * scale)
    except ValueError as exc:
        raise ConfigError(f"body: {exc}", field="body") from exc


def cylinder_experiment(Re, cells_per_diameter=8, domain=20.0, upstream=7.5, dt=0.1, n_steps=100,
                        perturb=False, jacobian="chord") -> Experiment:
    """Unit cylinder at the origin in a square domain ``domain`` diameters wide.

    Inflow on the left at unit speed, outflow on the right, far-field on the
    other edges. ``perturb`` adds an off-axis vortex to the initial flow to
    break the symmetry that otherwise delays vortex shedding.
    """
    n = int(round(domain * cells_per_diameter))
    grid = GridSpec.from_extent(n, n, (-upstream, domain - upstream), (-domain / 2, domain / 2))
    ops = build_operators(grid, DomainBoundaryConditions.freestream(1.0))
    cfg = FluidConfig(Re=Re, dt=dt)
    body = CylinderBody.for_grid(CylinderParams((0.0, 0.0), 1.0), grid)
    initial = perturbed_flow(ops) if perturb else uniform_flow(ops)
    return Experiment(grid, ops, cfg, body, initial, n_steps, jacobian, f"cylinder_Re{Re:g}")


TAIL_COEFFICIENTS = (0.1, -0.05, 0.0, 0.0)


def tail_experiment(Re=320.0, h=1.0 / 16, dt=0.05, frequency=1.0, periods=1.0, coefficients=TAIL_COEFFICIENTS,
                    parameters=TailBody.SHAPE, extent=((-1.0, 3.0), (-1.25, 1.25)), amplitude=0.2,
                    newton_tol=1e-8) -> Experiment:
    """Unit-length tail pointing downstream (+x) in a unit free stream.

    The base joint sits at the origin; the gait is a travelling wave whose
    joint amplitudes grow towards the fin.
    """
    (xa, xb), (ya, yb) = extent
    nx, ny = int(round((xb - xa) / h)), int(round((yb - ya) / h))
    grid = GridSpec.from_extent(nx, ny, (xa, xb), (ya, yb))
    ops = build_operators(grid, DomainBoundaryConditions.freestream(1.0))
    cfg = FluidConfig(Re=Re, dt=dt, newton_tol=newton_tol)
    gait = GaitParams.traveling_wave(frequency, 10, amplitude)
    body = TailBody(coefficients, gait, 1.0, 10, (0.0, 0.0), 0.0, tuple(parameters), h, 0.5 * h)
    n_steps = int(round(periods / (frequency * dt)))
    return Experiment(grid, ops, cfg, body, uniform_flow(ops), n_steps, "exact", f"tail_Re{Re:g}")


TANK = {"size": 0.6, "rho": 997.0, "mu": 8.9e-4, "l_ref": 0.1, "u_ref": 0.1}


def tank_tail_experiment(trajectory, cells_per_length=16, dt=1.0 / 60, periods=5.0, frequency_hz=3.0,
                         coefficients=(0.1, -0.05, 0.0, 0.0), tank=TANK) -> Experiment:
    """Tail driven by a joint-angle table in a closed, initially still water tank.

    Lengths are scaled by ``l_ref`` (the tail length) and times by
    ``l_ref / u_ref``; the tail base sits left of the tank centre so the fin
    sweeps through the middle.
    """
    L = tank["size"] / tank["l_ref"]
    n = int(round(L * cells_per_length))
    grid = GridSpec.from_extent(n, n, (0.0, L), (0.0, L))
    ops = build_operators(grid, DomainBoundaryConditions.cavity())
    cfg = FluidConfig.from_physical(tank["rho"], tank["mu"], tank["u_ref"], tank["l_ref"], dt)
    time_scale = cfg.time_scale
    motion = trajectory if isinstance(trajectory, AngleTrajectory) else AngleTrajectory.load(trajectory, time_scale)
    h = 1.0 / cells_per_length
    body = TailBody(coefficients, motion, 1.0, 10, (0.5 * L - 0.5, 0.5 * L), 0.0, TailBody.SHAPE, h, 0.5 * h)
    f_nd = frequency_hz * time_scale
    n_steps = int(round(periods / (f_nd * dt)))
    exp = Experiment(grid, ops, cfg, body, FluidState.rest(ops), n_steps, "exact", "tank_tail")
    exp.extras["frequency_hz"] = frequency_hz
    return exp


# ----------------------------------------------------------------------------- running

@dataclass
class SimulationRecord:
    history: ForceHistory
    final: FluidState
    steps: int
    max_continuity: float = 0.0
    max_noslip: float = 0.0
    newton_iterations: list = field(default_factory=list)
    factorizations: int = 0
    stopped_early: bool = False


def run_simulation(exp: Experiment, n_steps=None, output_dir=None, snapshot_stride=0, snapshot_format="csv",
                   steady_tol=None, check_every=1.0, callback=None) -> SimulationRecord:
    """Advance ``exp`` and record forces on the body each step.

    Forces in the history are those of the fluid on the body, in physical
    units per unit span (``F_nd * rho * u_ref^2 * l_ref``), with coefficients
    based on the body's reference length. With ``steady_tol`` the run stops
    once the drag coefficient changes by less than that fraction over
    ``check_every`` time units.
    """
    ops, cfg, body = exp.ops, exp.cfg, exp.body
    n_steps = exp.n_steps if n_steps is None else n_steps
    theta = exp.theta
    cache = JacobianCache() if exp.jacobian == "chord" else None
    state, f_prev = exp.initial, None
    mesh, E = BoundaryMesh.empty(), None
    stationary = body is None or getattr(body, "stationary", False)
    if body is not None and stationary:
        mesh = body.mesh(theta, state.t)
        E = interpolation_matrix(mesh, ops)
    rec = SimulationRecord(ForceHistory(), state, 0)
    force_scale = cfg.rho * cfg.u_ref ** 2 * cfg.l_ref
    coeff_cfg = cfg.replace(l_ref=cfg.l_ref * exp.reference_length)
    if output_dir is not None and snapshot_stride:
        io.write_snapshot(output_dir, 0, state, ops, snapshot_format)
    lag = max(1, int(round(check_every / cfg.dt)))
    for k in range(n_steps):
        if not stationary:
            mesh, E = body.mesh(theta, state.t + cfg.dt), None
        res = fsi_step(state, mesh, ops, cfg, f_prev, E=E, cache=cache, step_index=k)
        state, f_prev = res.state, res.f_tilde
        F = res.hydrodynamic_force(cfg, ops) * force_scale
        rec.history.append(state.t, F, drag_lift_coefficients(F, coeff_cfg))
        d = res.diagnostics
        rec.max_continuity = max(rec.max_continuity, d.continuity_residual)
        rec.max_noslip = max(rec.max_noslip, d.noslip_residual)
        rec.newton_iterations.append(d.iterations)
        rec.factorizations += d.factorizations
        rec.steps = k + 1
        if callback is not None:
            callback(k, res, rec)
        if output_dir is not None and snapshot_stride and (k + 1) % snapshot_stride == 0:
            io.write_snapshot(output_dir, k + 1, state, ops, snapshot_format)
        if steady_tol is not None and k >= lag:
            cd = rec.history.Cd
            if abs(cd[-1] - cd[-1 - lag]) <= steady_tol * abs(cd[-1]):
                rec.stopped_early = True
                break
    rec.final = state
    return rec


def thrust_analysis(rec: SimulationRecord, cfg: FluidConfig, frequency, discard_periods=1.0) -> dict:
    """Normalized thrust (``-F_x`` on the body) with its spectrum peak and cycle-to-cycle spread.

    ``frequency`` is in nondimensional units; results are reported in the same
    units and, via ``cfg.time_scale``, in hertz.
    """
    a = rec.history.as_array()
    t, thrust = a[:, 0], -a[:, 1]
    period = 1.0 / frequency
    keep = t >= t[0] - cfg.dt + discard_periods * period - 1e-9
    f_peak = dominant_frequency(t[keep], thrust[keep])
    rms = cycle_rms_difference(t, thrust, period, start=discard_periods * period)
    return {"t": t, "thrust": thrust, "normalized": normalize_max(thrust), "dominant_frequency": f_peak,
            "dominant_frequency_hz": f_peak / cfg.time_scale, "cycle_rms_relative": rms}


def optimize_tail(exp: Experiment, parameters, max_iters=5, bounds=None, initial_step=None, callback=None):
    """BFGS on the one-period loss of a tail experiment over ``parameters``.

    The search runs in coordinates scaled to the unit box spanned by
    ``bounds``, so shape coefficients and the gait frequency, which have
    different units, take comparable steps. ``initial_step`` is measured in
    those scaled coordinates; results are reported in physical parameters.
    """
    body = exp.body
    body = TailBody(body.coefficients, body.motion, body.length, body.n_links, body.base, body.heading,
                    tuple(parameters), body.spacing, body.w_min)
    problem = RolloutProblem(body, exp.ops, exp.cfg, exp.initial, exp.n_steps, ObjectiveSpec(dt=exp.cfg.dt))
    b = np.asarray(default_tail_bounds(body) if bounds is None else bounds, dtype=float).reshape(-1, 2)
    lo, width = b[:, 0], b[:, 1] - b[:, 0]

    def scaled(z):
        f, g = problem(lo + width * z)
        return f, g * width

    def cb(it, z, f, g):
        if callback is not None:
            callback(it, lo + width * z, f, g / width)

    z0 = (body.theta0() - lo) / width
    res = bfgs_optimize(scaled, z0, np.column_stack([np.zeros_like(lo), np.ones_like(lo)]), max_iters=max_iters,
                        initial_step=initial_step, callback=cb)
    res.theta = lo + width * res.theta
    res.gradient = res.gradient / width
    res.theta_history = [lo + width * z for z in res.theta_history]
    return res, body


def default_tail_bounds(body: TailBody):
    w = body.w_min or 0.0
    table = {"c0": (max(w, 0.02), 0.25), "c1": (-0.1, 0.1), "c2": (-0.1, 0.1), "c3": (-0.1, 0.1)}
    if isinstance(body.motion, GaitParams):
        f0 = body.motion.frequency
        table["frequency"] = (0.25 * f0, 2.0 * f0)
    return [table[k] for k in body.parameter_names]


def gradient_check(exp: Experiment, n_steps=None, eps=1e-5):
    problem = RolloutProblem(exp.body, exp.ops, exp.cfg, exp.initial, exp.n_steps if n_steps is None else n_steps,
                             ObjectiveSpec(dt=exp.cfg.dt))
    return finite_difference_check(exp.theta, problem, eps)


# ----------------------------------------------------------------------------- CLI entry

def _common_summary(exp, rec):
    return {
        "name": exp.name, "Re": exp.cfg.Re, "dt": exp.cfg.dt, "steps": rec.steps,
        "grid": {"nx": exp.grid.nx, "ny": exp.grid.ny, "hx": exp.grid.hx, "hy": exp.grid.hy},
        "max_continuity_residual": rec.max_continuity, "max_noslip_residual": rec.max_noslip,
        "newton_iterations_max": max(rec.newton_iterations, default=0),
        "stopped_early": rec.stopped_early,
    }


def run_experiment(sc: SimConfig, mode: str, output_dir) -> dict:
    """Run ``mode`` (simulate, benchmark-cylinder, optimize, check-gradients) and write artifacts.

    Returns the summary dictionary (also written to ``summary.json``).
    """
    out = io.ensure_dir(output_dir)
    exp = from_config(sc)
    if mode in ("simulate", "benchmark-cylinder"):
        bm = sc.benchmark
        if mode == "benchmark-cylinder" and not isinstance(exp.body, CylinderBody):
            raise ConfigError("benchmark-cylinder needs [body] type = cylinder", field="body.type")
        steady = bm.get("steady_tol") if mode == "benchmark-cylinder" else None
        rec = run_simulation(exp, output_dir=out, snapshot_stride=sc.output["snapshot_stride"],
                             snapshot_format=sc.output["format"], steady_tol=steady,
                             check_every=bm.get("check_every", 1.0))
        io.write_force_history(out / "forces.csv", rec.history)
        summary = _common_summary(exp, rec)
        summary["mode"] = mode
        if len(rec.history):
            a = rec.history.as_array()
            summary.update(final_Cd=a[-1, 3], final_Cl=a[-1, 4])
            if mode == "benchmark-cylinder":
                summary.update(shedding_statistics(rec.history, bm.get("discard", 0.5)))
        if isinstance(exp.body, TailBody) and len(rec.history) > 2:
            a = rec.history.as_array()
            thrust = -a[:, 1]
            if np.max(np.abs(thrust)) > 0:
                io.write_normalized_thrust(out / "thrust_normalized.csv", a[:, 0] * exp.cfg.time_scale, thrust,
                                           normalize_max(thrust))
        io.write_summary(out / "summary.json", summary)
        return summary
    if mode == "optimize":
        if not isinstance(exp.body, TailBody):
            raise ConfigError("optimize needs [body] type = tail", field="body.type")
        op = sc.optimize
        bounds = None
        if "bounds" in op:
            b = np.asarray(op["bounds"], dtype=float)
            if b.size != 2 * exp.body.n_theta:
                raise ConfigError("optimize.bounds needs a (low, high) pair per parameter", field="optimize.bounds")
            bounds = b.reshape(-1, 2)
        rows = []

        def cb(it, x, f, g):
            rows.append([it, f, *x])

        result, body = optimize_tail(exp, exp.body.parameter_names, op.get("max_iters", 5), bounds,
                                     op.get("initial_step"), cb)
        rows.insert(0, [0, result.loss_history[0], *result.theta_history[0]])
        np.savetxt(out / "optimization.csv", np.asarray(rows), delimiter=",",
                   header="iteration,loss," + ",".join(body.parameter_names), comments="", fmt="%.12e")
        summary = {"mode": mode, "name": exp.name, "parameters": body.parameter_names,
                   "theta0": result.theta_history[0], "theta": result.theta, "loss0": result.loss_history[0],
                   "loss": result.loss, "improvement": 1.0 - result.loss / result.loss_history[0],
                   "iterations": result.iterations, "message": result.message}
        io.write_summary(out / "summary.json", summary)
        return summary
    if mode == "check-gradients":
        if exp.body is None:
            raise ConfigError("check-gradients needs a [body]", field="body.type")
        gr = sc.gradients
        rep = gradient_check(exp, eps=gr.get("eps", 1e-5))
        tol = gr.get("tolerance", 1e-3)
        summary = {"mode": mode, "name": exp.name, "parameters": exp.body.parameter_names,
                   "analytic": rep.analytic, "finite_difference": rep.finite_difference,
                   "relative_errors": rep.relative_errors, "max_relative_error": rep.max_relative_error,
                   "tolerance": tol, "passed": bool(rep.max_relative_error <= tol)}
        io.write_summary(out / "summary.json", summary)
        return summary
    raise ConfigError(f"unknown mode {mode!r}", field="mode")
