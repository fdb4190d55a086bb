"""Run configuration: a line-oriented ``section.key = value`` text format.

Example::

    # sphere, Allen-Cahn
    experiment = sphere_ac
    model = allen_cahn
    seed = 3
    initial_condition = random
    mesh.level = 4
    model.epsilon = 0.01
    model.dt_schedule = [[10, 1], [60, 5], [400, 10]]
    output.vtk_every = 10

Values are Python literals (numbers, quoted strings, ``true``/``false``,
bracketed lists); anything else is taken as a bare string.  Every key is
checked against :data:`SCHEMA` before anything is allocated, and unknown
keys are an error.  Experiment presets supply defaults that the file then
overrides; ``full=True`` switches a preset to its long, fine-mesh variant.
"""
from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass

from .errors import ConfigError
from .models import MODELS, NONLINEARITY, ModelParams, step_sizes
from .solvers import METHODS, PRECONDITIONERS, SolverConfig

EXPERIMENTS = (
    "custom", "ac_validation", "ch_validation", "sphere_ac", "sphere_ch",
    "spindle_ac", "spindle_ch", "cell_ac", "cell_ch", "beta_sweep",
)
SURFACES = ("sphere", "spindle", "cell")

# piecewise-constant time steps, [[t_end, dt], ...]
SPHERE_AC_SCHEDULE = [[10, 1], [60, 5], [1060, 10], [3560, 50], [13560, 100], [22560, 200]]
CELL_AC_SCHEDULE = [[200, 1], [500, 5], [23000, 10]]


def ch_schedule(t_end):
    """``dt = 0.01`` on ``(0, 1]``, then ``dt = 1``."""
    return [[1, 0.01], [t_end, 1]] if t_end > 1 else [[t_end, 0.01]]


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _pos(v):
    return _num(v) and v > 0


def _nonneg_int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v >= 0


def _list_of(pred, n=None):
    def check(v):
        return isinstance(v, list) and (n is None or len(v) == n) and all(pred(x) for x in v)
    return check


def _schedule(v):
    return isinstance(v, list) and len(v) > 0 and all(
        isinstance(p, list) and len(p) == 2 and _pos(p[0]) and _pos(p[1]) for p in v
    )


def _enum(options):
    def check(v):
        return v in options
    check.options = options
    return check


# key -> (predicate, description)
SCHEMA = {
    "experiment": (_enum(EXPERIMENTS), f"one of {EXPERIMENTS}"),
    "model": (_enum(MODELS), f"one of {MODELS}"),
    "seed": (_nonneg_int, "non-negative integer"),
    "initial_condition": (lambda v: isinstance(v, str), "random[(seed)], constant(v), "
                          "linear_x3_plus_half, manufactured or expression(...)"),
    "surface.kind": (_enum(SURFACES), f"one of {SURFACES}"),
    "surface.radius": (_pos, "positive number"),
    "surface.center": (_list_of(_num, 3), "three numbers"),
    "domain.box": (_list_of(_num, 6), "[xmin, xmax, ymin, ymax, zmin, zmax]"),
    "domain.cells": (_list_of(lambda x: _nonneg_int(x) and x > 0, 3), "three positive integers"),
    "mesh.level": (_nonneg_int, "non-negative integer"),
    "mesh.surface_order": (lambda v: v in (1, 2, 3, 4), "1..4"),
    "mesh.volume_order": (lambda v: _nonneg_int(v) and v >= 1, "integer >= 1"),
    "mesh.max_tets": (lambda v: _nonneg_int(v) and v > 0, "positive integer"),
    "model.epsilon": (_pos, "positive number"),
    "model.alpha": (_pos, "positive number"),
    "model.rho": (_pos, "positive number"),
    "model.xi": (_pos, "positive number"),
    "model.beta_s": (lambda v: _num(v) and v >= 0, "number >= 0"),
    "model.dt_schedule": (_schedule, "[[t_end, dt], ...] with positive entries"),
    "model.t_end": (_pos, "positive number"),
    "model.nonlinearity": (_enum(NONLINEARITY), f"one of {NONLINEARITY}"),
    "solver.method": (_enum(METHODS), f"one of {METHODS}"),
    "solver.preconditioner": (_enum(PRECONDITIONERS), f"one of {PRECONDITIONERS}"),
    "solver.rel_tol": (_pos, "positive number"),
    "solver.abs_tol": (_pos, "positive number"),
    "solver.max_iter": (lambda v: _nonneg_int(v) and v >= 1, "integer >= 1"),
    "solver.restart": (lambda v: _nonneg_int(v) and v >= 1, "integer >= 1"),
    "output.vtk_every": (_nonneg_int, "non-negative integer (0 disables snapshots)"),
    "output.csv_every": (lambda v: _nonneg_int(v) and v >= 1, "integer >= 1"),
    "output.out_dir": (lambda v: isinstance(v, str) and v != "", "path"),
    "validation.levels": (_list_of(_nonneg_int), "list of levels"),
    "validation.t_end": (_pos, "positive number"),
    "sweep.betas": (_list_of(lambda x: _num(x) and x >= 0), "list of numbers >= 0"),
    "sweep.dt": (_pos, "positive number"),
    "sweep.blowup_factor": (_pos, "positive number"),
}

COMMON = {
    "experiment": "custom",
    "model": "allen_cahn",
    "seed": 0,
    "initial_condition": "random",
    "surface.kind": "sphere",
    "surface.radius": 1.0,
    "surface.center": [0.0, 0.0, 0.0],
    "mesh.level": 3,
    "mesh.surface_order": 2,
    "mesh.volume_order": 2,
    "mesh.max_tets": 5_000_000,
    "model.epsilon": 0.01,
    "model.alpha": 1.0,
    "model.rho": 1.0,
    "model.xi": 1.0,
    "model.beta_s": 1.0,
    "model.nonlinearity": "quadrature",
    "output.vtk_every": 0,
    "output.csv_every": 1,
    "output.out_dir": "out",
    "sweep.blowup_factor": 10.0,
}

DEFAULT_CELLS = {"sphere": [2, 2, 2], "spindle": [8, 2, 2], "cell": [3, 2, 2]}

# preset -> (desk-scale defaults, overrides for the full-length variant)
PRESETS = {
    "custom": ({}, {}),
    "ac_validation": (
        {"model": "allen_cahn", "model.epsilon": 0.1, "initial_condition": "manufactured",
         "validation.levels": [2, 3, 4], "validation.t_end": 5.0},
        {"validation.levels": [2, 3, 4, 5]},
    ),
    "ch_validation": (
        {"model": "cahn_hilliard", "model.epsilon": 0.1, "initial_condition": "manufactured",
         "validation.levels": [2, 3, 4], "validation.t_end": 5.0},
        {"validation.levels": [2, 3, 4, 5]},
    ),
    "sphere_ac": (
        {"model": "allen_cahn", "mesh.level": 4, "model.dt_schedule": SPHERE_AC_SCHEDULE,
         "model.t_end": 400.0},
        {"mesh.level": 6, "model.t_end": 22560.0},
    ),
    "sphere_ch": (
        {"model": "cahn_hilliard", "mesh.level": 4, "model.dt_schedule": ch_schedule(30000),
         "model.t_end": 100.0},
        {"mesh.level": 6, "model.t_end": 30000.0},
    ),
    "spindle_ac": (
        {"model": "allen_cahn", "surface.kind": "spindle", "mesh.level": 4,
         "model.dt_schedule": SPHERE_AC_SCHEDULE, "model.t_end": 100.0},
        {"mesh.level": 6, "model.t_end": 400.0},
    ),
    "spindle_ch": (
        {"model": "cahn_hilliard", "surface.kind": "spindle", "mesh.level": 4,
         "model.dt_schedule": ch_schedule(400), "model.t_end": 50.0},
        {"mesh.level": 6, "model.t_end": 400.0},
    ),
    "cell_ac": (
        {"model": "allen_cahn", "surface.kind": "cell", "mesh.level": 4,
         "model.dt_schedule": CELL_AC_SCHEDULE, "model.t_end": 2000.0},
        {"mesh.level": 6, "model.t_end": 23000.0},
    ),
    "cell_ch": (
        {"model": "cahn_hilliard", "surface.kind": "cell", "mesh.level": 4,
         "model.dt_schedule": ch_schedule(36000), "model.t_end": 100.0},
        {"mesh.level": 6, "model.t_end": 36000.0},
    ),
    "beta_sweep": (
        {"model": "allen_cahn", "mesh.level": 4, "sweep.betas": [0, 0.1, 0.2, 0.5, 1, 10],
         "sweep.dt": 10.0, "model.t_end": 500.0},
        {"mesh.level": 6},
    ),
}


# -- parsing ------------------------------------------------------------
_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*=\s*(.*?)\s*$")


def parse_value(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        v = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text
    return _normalize(v)


def _normalize(v):
    if isinstance(v, tuple):
        v = list(v)
    if isinstance(v, list):
        return [_normalize(x) for x in v]
    return v


def parse_text(text, source="<config>"):
    """Parse config text into a flat ``{key: value}`` dict (no validation)."""
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
        key, val = m.groups()
        if key in out:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r}")
        if val == "":
            raise ConfigError(f"{source}:{no}: empty value for {key!r}")
        out[key] = parse_value(val)
    return out


def _strip_comment(line):
    # '#' starts a comment unless inside quotes or parentheses
    depth, quote = 0, None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == "#" and depth == 0:
            return line[:i]
    return line


def load_file(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text, str(path))


def validate(values):
    unknown = sorted(set(values) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, val in values.items():
        pred, desc = SCHEMA[key]
        if not pred(val):
            raise ConfigError(f"{key} = {val!r}: expected {desc}")


# -- resolved configuration ---------------------------------------------
@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def experiment(self):
        return self.values["experiment"]

    @property
    def model(self):
        return self.values["model"]

    @property
    def out_dir(self):
        return self.values["output.out_dir"]

    def params(self, dt=None, beta_s=None):
        v = self.values
        return ModelParams(
            epsilon=v["model.epsilon"], alpha=v["model.alpha"], rho=v["model.rho"], xi=v["model.xi"],
            beta_s=v["model.beta_s"] if beta_s is None else beta_s,
            dt=dt if dt is not None else self.first_dt(),
            nonlinearity=v["model.nonlinearity"],
        )

    def first_dt(self):
        sched = self.values.get("model.dt_schedule")
        if sched:
            return float(sched[0][1])
        return float(self.values.get("sweep.dt", 1.0))

    def solver(self):
        from .solvers import AC_DEFAULT, CH_DEFAULT

        base = AC_DEFAULT if self.model == "allen_cahn" else CH_DEFAULT
        kw = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("solver.")}
        if kw.get("method") == "cg" and self.model == "cahn_hilliard":
            raise ConfigError("solver.method = cg needs a symmetric system; the coupled system is not")
        fields = {f: getattr(base, f) for f in base.__dataclass_fields__}
        fields.update(kw)
        return SolverConfig(**fields)

    def schedule(self):
        """List of time steps for ``run``."""
        sched = self.values.get("model.dt_schedule")
        t_end = self.values.get("model.t_end")
        if sched is None:
            raise ConfigError("model.dt_schedule is required for this experiment")
        return step_sizes(sched, t_end)

    def cells(self):
        return self.values.get("domain.cells") or DEFAULT_CELLS[self.values["surface.kind"]]

    def surface(self):
        from .geometry import ImplicitSurface

        v = self.values
        box = tuple(v["domain.box"]) if "domain.box" in v else None
        return ImplicitSurface.from_kind(v["surface.kind"], box=box, radius=v["surface.radius"],
                                         center=tuple(v["surface.center"]))


def resolve(file_values=None, full=False, overrides=None):
    """Merge preset defaults, file values and command-line overrides."""
    file_values = dict(file_values or {})
    overrides = dict(overrides or {})
    validate(file_values)
    validate(overrides)
    experiment = overrides.get("experiment", file_values.get("experiment", "custom"))
    desk, long = PRESETS[experiment]
    values = dict(COMMON)
    values.update(desk)
    if full:
        values.update(long)
    values.update(file_values)
    values.update(overrides)
    values["experiment"] = experiment
    validate(values)
    _check_consistency(values)
    return RunConfig(values)


def _check_consistency(v):
    if "model.dt_schedule" in v:
        sched = v["model.dt_schedule"]
        ends = [p[0] for p in sched]
        if any(b <= a for a, b in zip(ends, ends[1:])):
            raise ConfigError("model.dt_schedule end times must increase")
        step_sizes(sched, v.get("model.t_end"))
    if v["experiment"] in ("ac_validation", "ch_validation"):
        if v["surface.kind"] != "sphere" or v["surface.radius"] != 1.0 or any(v["surface.center"]):
            raise ConfigError("validation presets need the unit sphere centred at the origin")
    parse_initial_condition(v["initial_condition"])


# -- initial conditions ---------------------------------------------------
_IC = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$", re.S)

_EXPR_FUNCS = {
    "sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "abs", "arctan", "arctan2",
    "minimum", "maximum", "clip", "where",
}
_EXPR_NAMES = {"x1", "x2", "x3", "pi", "e"}
_EXPR_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Call, ast.Load,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Compare, ast.Lt, ast.Gt, ast.LtE, ast.GtE,
)


def parse_initial_condition(text):
    """Return ``(kind, argument)`` for an ``initial_condition`` string."""
    m = _IC.match(text)
    if not m:
        raise ConfigError(f"cannot parse initial_condition {text!r}")
    kind, arg = m.group(1), m.group(2)
    if kind == "random":
        if arg is None or arg.strip() == "":
            return kind, None
        try:
            return kind, int(arg)
        except ValueError:
            raise ConfigError(f"random(...) needs an integer seed, got {arg!r}") from None
    if kind == "constant":
        try:
            return kind, float(arg)
        except (TypeError, ValueError):
            raise ConfigError(f"constant(...) needs a number, got {arg!r}") from None
    if kind in ("linear_x3_plus_half", "manufactured") and arg is None:
        return kind, None
    if kind == "expression" and arg:
        return kind, compile_expression(arg)
    raise ConfigError(f"unknown initial_condition {text!r}")


def compile_expression(src):
    """Compile an arithmetic expression in ``x1, x2, x3`` into a vectorized callable."""
    import numpy as np

    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {src!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _EXPR_NODES):
            raise ConfigError(f"expression {src!r}: {type(node).__name__} not allowed")
        if isinstance(node, ast.Name) and node.id not in _EXPR_NAMES | _EXPR_FUNCS:
            raise ConfigError(f"expression {src!r}: unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in _EXPR_FUNCS and not node.keywords
        ):
            raise ConfigError(f"expression {src!r}: only calls to {sorted(_EXPR_FUNCS)} allowed")
        if isinstance(node, ast.Constant) and not _num(node.value):
            raise ConfigError(f"expression {src!r}: only numeric constants allowed")
    code = compile(tree, "<expression>", "eval")
    env = {name: getattr(np, name) for name in _EXPR_FUNCS}
    env.update(pi=np.pi, e=np.e)

    def fn(x, t=0.0):
        x = np.asarray(x, dtype=float)
        scope = dict(env, x1=x[..., 0], x2=x[..., 1], x3=x[..., 2])
        return np.broadcast_to(eval(code, {"__builtins__": {}}, scope), x.shape[:-1]).astype(float)

    fn.source = src
    return fn
