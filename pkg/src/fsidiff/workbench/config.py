"""Experiment configuration files (INI syntax) and their validation.

Example::

    [grid]
    nx = 64
    ny = 64
    xmin = -2
    xmax = 6
    ymin = -4
    ymax = 4

    [fluid]
    Re = 40
    dt = 0.1
    n_steps = 200

    [boundary]
    left = inflow 1 0
    right = outflow
    bottom = farfield 1 0
    top = farfield 1 0

    [body]
    type = cylinder
    center_x = 0
    center_y = 0
    diameter = 1

Lengths are in units of ``l_ref`` unless ``[grid] units = physical`` (metres),
times are nondimensional except gait frequencies and trajectory files when
``[gait] time_unit = seconds``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError

_SCHEMA = {
    "experiment": {"name": str, "description": str},
    "grid": {"nx": int, "ny": int, "xmin": float, "xmax": float, "ymin": float, "ymax": float,
             "units": str},
    "fluid": {"re": float, "rho": float, "mu": float, "u_ref": float, "l_ref": float, "dt": float,
              "n_steps": int, "t_end": float, "newton_tol": float, "newton_max_iters": int,
              "jacobian": str, "convection": bool},
    "boundary": {"left": str, "right": str, "bottom": str, "top": str},
    "body": {"type": str, "center_x": float, "center_y": float, "diameter": float, "spacing": float,
             "coefficients": "floats", "length": float, "n_links": int, "base_x": float,
             "base_y": float, "heading": float, "w_min": float},
    "gait": {"frequency": float, "amplitudes": "floats", "phases": "floats", "offsets": "floats",
             "trajectory": str, "time_unit": str, "amplitude": float, "wavelength": float},
    "initial": {"flow": str, "ux": float, "uy": float, "perturbation": float,
                "perturbation_x": float, "perturbation_y": float, "perturbation_radius": float},
    "output": {"directory": str, "snapshot_stride": int, "format": str},
    "benchmark": {"discard": float, "steady_tol": float, "check_every": float},
    "optimize": {"parameters": "words", "max_iters": int, "bounds": "floats", "initial_step": float},
    "gradients": {"parameters": "words", "eps": float, "tolerance": float},
}

_REQUIRED = {"grid": ("nx", "ny", "xmin", "xmax", "ymin", "ymax"), "fluid": ("dt",)}


@dataclass
class EdgeSpec:
    kind: str
    velocity: tuple | None = None


@dataclass
class SimConfig:
    """Validated experiment configuration. ``raw`` keeps the parsed sections."""

    grid: dict
    fluid: dict
    boundary: dict
    body: dict
    gait: dict
    initial: dict
    output: dict
    benchmark: dict
    optimize: dict
    gradients: dict
    experiment: dict
    source: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def base_dir(self) -> Path:
        return self.source.parent if self.source is not None else Path.cwd()

    @property
    def length_scale(self) -> float:
        """Metres per config length unit (1 for nondimensional grids)."""
        return 1.0 / self.fluid["l_ref"] if self.grid.get("units") == "physical" else 1.0


def _line_of(text, section, key):
    sec = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            sec = m.group(1).strip().lower()
        elif sec == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return no
    return None


def _convert(kind, value, where):
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind is bool:
            v = value.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind == "floats":
            return tuple(float(v) for v in value.replace(",", " ").split())
        if kind == "words":
            return tuple(value.replace(",", " ").split())
        return value.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r}", field=where) from None


def parse_edge(text, where="boundary") -> EdgeSpec:
    parts = text.split()
    if not parts:
        raise ConfigError(f"{where}: empty boundary condition", field=where)
    kind = parts[0].lower()
    if kind in ("outflow", "wall"):
        if len(parts) != 1:
            raise ConfigError(f"{where}: {kind} takes no velocity", field=where)
        return EdgeSpec(kind)
    if kind in ("inflow", "farfield"):
        if len(parts) != 3:
            raise ConfigError(f"{where}: {kind} needs two velocity components", field=where)
        return EdgeSpec(kind, (_convert(float, parts[1], where), _convert(float, parts[2], where)))
    raise ConfigError(f"{where}: unknown boundary kind {kind!r}", field=where)


def parse_config(text: str, source=None) -> SimConfig:
    """Parse and validate configuration text. Raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=str(source or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    sections = {}
    for sec in cp.sections():
        name = sec.strip().lower()
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}] (line {_line_of(text, name, '') or '?'})", field=name)
        out = {}
        for key, value in cp.items(sec):
            where = f"{name}.{key}"
            if key not in _SCHEMA[name]:
                line = _line_of(text, name, key)
                raise ConfigError(f"unknown key {where}" + (f" (line {line})" if line else ""), field=where)
            out[key] = _convert(_SCHEMA[name][key], value, where + (f" (line {_line_of(text, name, key)})"))
        sections[name] = out
    for sec, keys in _REQUIRED.items():
        if sec not in sections:
            raise ConfigError(f"missing section [{sec}]", field=sec)
        for k in keys:
            if k not in sections[sec]:
                raise ConfigError(f"missing required field {sec}.{k}", field=f"{sec}.{k}")

    fluid = sections["fluid"]
    phys = [k for k in ("rho", "mu", "u_ref", "l_ref") if k in fluid]
    if "re" in fluid and "mu" in fluid:
        raise ConfigError("give either fluid.Re or physical properties (rho, mu, u_ref, l_ref), not both",
                          field="fluid.Re")
    if "re" not in fluid:
        if len(phys) < 4:
            missing = [k for k in ("rho", "mu", "u_ref", "l_ref") if k not in fluid]
            raise ConfigError("missing required field fluid.Re (or all of rho, mu, u_ref, l_ref; "
                              f"missing {', '.join(missing)})", field="fluid.Re")
        if fluid["u_ref"] == 0:
            raise ConfigError("fluid.u_ref must be nonzero", field="fluid.u_ref")
        fluid["re"] = fluid["rho"] * fluid["u_ref"] * fluid["l_ref"] / fluid["mu"]
    fluid.setdefault("rho", 1.0)
    fluid.setdefault("u_ref", 1.0)
    fluid.setdefault("l_ref", 1.0)
    if not fluid["re"] > 0:
        raise ConfigError("fluid.Re must be positive", field="fluid.Re")
    if not fluid["dt"] > 0:
        raise ConfigError("fluid.dt must be positive", field="fluid.dt")
    if "n_steps" not in fluid:
        if "t_end" in fluid:
            fluid["n_steps"] = int(round(fluid["t_end"] / fluid["dt"]))
        else:
            raise ConfigError("missing required field fluid.n_steps (or fluid.t_end)", field="fluid.n_steps")
    if fluid["n_steps"] < 0:
        raise ConfigError("fluid.n_steps must be non-negative", field="fluid.n_steps")
    fluid.setdefault("jacobian", "exact")
    if fluid["jacobian"] not in ("exact", "chord"):
        raise ConfigError("fluid.jacobian must be 'exact' or 'chord'", field="fluid.jacobian")

    grid = sections["grid"]
    grid.setdefault("units", "nondimensional")
    if grid["units"] not in ("nondimensional", "physical"):
        raise ConfigError("grid.units must be 'nondimensional' or 'physical'", field="grid.units")
    if grid["nx"] < 3 or grid["ny"] < 3:
        raise ConfigError("grid needs at least 3 cells per direction", field="grid.nx")
    if not (grid["xmax"] > grid["xmin"] and grid["ymax"] > grid["ymin"]):
        raise ConfigError("grid extent is empty", field="grid.xmax")

    bnd = sections.get("boundary", {})
    boundary = {}
    for edge in ("left", "right", "bottom", "top"):
        boundary[edge] = parse_edge(bnd.get(edge, "wall"), f"boundary.{edge}")

    body = sections.get("body", {"type": "none"})
    body.setdefault("type", "none")
    if body["type"] not in ("none", "cylinder", "tail"):
        raise ConfigError(f"unknown body type {body['type']!r}", field="body.type")
    if body["type"] == "cylinder" and "diameter" not in body:
        raise ConfigError("missing required field body.diameter", field="body.diameter")
    if body["type"] == "tail":
        if len(body.get("coefficients", ())) != 4:
            raise ConfigError("body.coefficients needs 4 values", field="body.coefficients")
    gait = sections.get("gait", {})
    if body["type"] == "tail" and not gait:
        raise ConfigError("a tail body needs a [gait] section", field="gait")
    if gait:
        gait.setdefault("time_unit", "nondimensional")
        if gait["time_unit"] not in ("nondimensional", "seconds"):
            raise ConfigError("gait.time_unit must be 'nondimensional' or 'seconds'", field="gait.time_unit")
        if "trajectory" not in gait and "frequency" not in gait:
            raise ConfigError("gait needs a frequency or a trajectory file", field="gait.frequency")

    initial = sections.get("initial", {})
    initial.setdefault("flow", "rest")
    if initial["flow"] not in ("rest", "uniform", "perturbed"):
        raise ConfigError("initial.flow must be rest, uniform or perturbed", field="initial.flow")
    output = sections.get("output", {})
    output.setdefault("snapshot_stride", 0)
    output.setdefault("format", "csv")
    if output["format"] not in ("csv", "npy"):
        raise ConfigError("output.format must be csv or npy", field="output.format")

    return SimConfig(
        grid=grid, fluid=fluid, boundary=boundary, body=body, gait=gait, initial=initial,
        output=output, benchmark=sections.get("benchmark", {}), optimize=sections.get("optimize", {}),
        gradients=sections.get("gradients", {}), experiment=sections.get("experiment", {}),
        source=Path(source) if source else None, raw=sections,
    )


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}", field=str(path)) from exc
    return parse_config(text, source=path)


def apply_overrides(cfg: SimConfig, re_number=None, steps=None) -> SimConfig:
    """Command-line overrides for sweeps."""
    if re_number is not None:
        if not re_number > 0:
            raise ConfigError("Re override must be positive", field="fluid.Re")
        cfg.fluid["re"] = float(re_number)
        if "mu" in cfg.fluid:
            del cfg.fluid["mu"]
    if steps is not None:
        if steps < 0:
            raise ConfigError("steps override must be non-negative", field="fluid.n_steps")
        cfg.fluid["n_steps"] = int(steps)
    return cfg


def float_list(values, n, where):
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return np.full(n, float(values[0]))
    if values.size != n:
        raise ConfigError(f"{where} needs 1 or {n} values, got {values.size}", field=where)
    return values
