"""Strict JSON experiment configs and the initial-data expression language."""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .grid import Grid1D, State, random_smooth_data, sample_initial_data
from .kernel import KernelSpec, KernelSpecError, asymmetric_bump_table
from .solver import SchemeConfig

EXPERIMENTS = ("validate_kernel", "classify", "simulate", "characteristics",
               "epsilon_sweep", "picard", "convergence")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


class ExpressionError(ValueError):
    def __init__(self, source: str, position: int, message: str):
        super().__init__(f"{message} at position {position} in {source!r}")
        self.position = position


# -- expressions ---------------------------------------------------------------

def _gaussian(x, center, width):
    return np.exp(-((x - center) ** 2) / (2.0 * width ** 2))


FUNCTIONS: dict[str, tuple[int, Callable]] = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tanh": (1, np.tanh),
    "exp": (1, np.exp),
    "gaussian": (2, None),
}
CONSTANTS = {"pi": math.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


class Expression:
    """Pointwise function of ``x`` built from a whitelisted arithmetic grammar.

    >>> Expression("0.2 + gaussian(0, 1)")(np.array([0.0]))
    array([1.2])
    """

    def __init__(self, source: str):
        self.source = source
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(source, exc.offset or 0, "syntax error") from None
        self._check(tree.body)
        self.tree = tree.body

    def _fail(self, node, message):
        raise ExpressionError(self.source, getattr(node, "col_offset", 0) + 1, message)

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                self._fail(node, "only numeric constants are allowed")
        elif isinstance(node, ast.Name):
            if node.id != "x" and node.id not in CONSTANTS:
                self._fail(node, f"unknown name {node.id!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                self._fail(node, "operator not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                self._fail(node, "operator not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            name = node.func.id if isinstance(node.func, ast.Name) else None
            if name not in FUNCTIONS:
                self._fail(node, f"unknown function {name!r}")
            if node.keywords or len(node.args) != FUNCTIONS[name][0]:
                self._fail(node, f"{name} takes {FUNCTIONS[name][0]} positional argument(s)")
            for a in node.args:
                self._check(a)
        else:
            self._fail(node, f"{type(node).__name__} not allowed")

    def _eval(self, node, x):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return x if node.id == "x" else CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        args = [self._eval(a, x) for a in node.args]
        if node.func.id == "gaussian":
            return _gaussian(x, *args)
        return FUNCTIONS[node.func.id][1](*args)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(self._eval(self.tree, x), x.shape).astype(float)
        return out

    def __repr__(self):
        return f"Expression({self.source!r})"


class TableFunction:
    """Linear interpolation of (x, value) samples, periodic over the grid."""

    def __init__(self, points, period: tuple[float, float] | None = None):
        xs = np.array([p[0] for p in points], dtype=float)
        vs = np.array([p[1] for p in points], dtype=float)
        if xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("table x values must be strictly increasing (at least two)")
        self.xs, self.vs, self.period = xs, vs, period

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.period is None:
            return np.interp(x, self.xs, self.vs)
        a, b = self.period
        return np.interp(x, self.xs, self.vs, period=b - a)


# -- schema helpers -------------------------------------------------------------

def _expect_obj(v, path) -> dict:
    if not isinstance(v, dict):
        raise ConfigError(path, f"expected an object, got {type(v).__name__}")
    return v


def _check_keys(d: dict, path: str, allowed, required=()):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")
    for k in required:
        if k not in d:
            raise ConfigError(f"{path}.{k}" if path else k, "missing required key")


def _num(v, path, positive=False, integer=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {json.dumps(v)}")
    if integer and int(v) != v:
        raise ConfigError(path, f"expected an integer, got {v}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and not v > 0:
        raise ConfigError(path, f"must be positive, got {v}")
    return int(v) if integer else float(v)


def _num_list(v, path, **kw) -> list:
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty list")
    return [_num(e, f"{path}[{i}]", **kw) for i, e in enumerate(v)]


# -- config ---------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    grid: Grid1D
    kernel: KernelSpec | None
    rho0: Any
    u0: Any
    scheme: SchemeConfig
    random_data: dict | None = None
    output_dir: str | None = None
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def initial_state(self, grid: Grid1D | None = None) -> State:
        grid = grid or self.grid
        if self.random_data is not None:
            rng = np.random.default_rng(self.seed)
            return random_smooth_data(grid, rng, **self.random_data)
        return sample_initial_data(grid, self.rho0, self.u0)

    def with_grid(self, n: int) -> "ExperimentConfig":
        return replace(self, grid=Grid1D(self.grid.a, self.grid.b, n))


_EXPERIMENT_PARAMS = {
    "validate_kernel": {"tol": 1e-8},
    "classify": {"eps": None, "gamma": None},
    "simulate": {"snapshot_interval": None},
    "characteristics": {"n_traces": 64, "snapshot_interval": 0.02, "dt_ode": None,
                        "t_max": None, "rel_tol": 0.02},
    "epsilon_sweep": {"eps_list": None, "T_cmp": 0.5},
    "picard": {"T_iter": 1.0, "max_iters": 20, "tol_fixed_point": 1e-8},
    "convergence": {"grid_list": None},
}
_REQUIRED_PARAMS = {"epsilon_sweep": ("eps_list",), "convergence": ("grid_list",)}


def _parse_experiment(v) -> tuple[str, dict]:
    if isinstance(v, str):
        name, body = v, {}
    elif isinstance(v, dict) and len(v) == 1:
        name, body = next(iter(v.items()))
        body = _expect_obj(body, f"experiment.{name}")
    else:
        raise ConfigError("experiment", "expected a name or a single-key object")
    name = name.replace("-", "_")
    if name not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {name!r}")
    path = f"experiment.{name}"
    defaults = _EXPERIMENT_PARAMS[name]
    _check_keys(body, path, defaults, _REQUIRED_PARAMS.get(name, ()))
    params = dict(defaults)
    for k, val in body.items():
        p = f"{path}.{k}"
        if val is None:
            continue
        if k == "eps_list":
            eps = _num_list(val, p, positive=True)
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ConfigError(p, "must be strictly decreasing")
            params[k] = eps
        elif k == "grid_list":
            ns = _num_list(val, p, positive=True, integer=True)
            if len(ns) < 3:
                raise ConfigError(p, "needs at least three grids")
            if any(b <= a for a, b in zip(ns, ns[1:])):
                raise ConfigError(p, "must be strictly increasing")
            if any(b % a for a, b in zip(ns, ns[1:])):
                raise ConfigError(p, "each grid must be an integer multiple of the previous")
            params[k] = ns
        elif k in ("n_traces", "max_iters"):
            params[k] = _num(val, p, positive=True, integer=True)
        elif k == "gamma":
            params[k] = _num(val, p)
        else:
            params[k] = _num(val, p, positive=True)
    return name, params


def _parse_kernel(v) -> KernelSpec:
    d = _expect_obj(v, "kernel")
    _check_keys(d, "kernel", ("family", "width", "table", "allow_asymmetric", "bump"), ("family",))
    d = dict(d)
    if "bump" in d:
        b = _expect_obj(d.pop("bump"), "kernel.bump")
        _check_keys(b, "kernel.bump", ("left", "right", "samples"), ("left", "right"))
        if d["family"] != "table" or "table" in d:
            raise ConfigError("kernel.bump", "bump generates a table; use family 'table' without 'table'")
        left = _num(b["left"], "kernel.bump.left", positive=True)
        right = _num(b["right"], "kernel.bump.right", positive=True)
        samples = _num(b.get("samples", 2001), "kernel.bump.samples", positive=True, integer=True)
        d["table"] = [list(p) for p in asymmetric_bump_table(left, right, samples)]
    if "width" in d:
        _num(d["width"], "kernel.width", positive=True)
    if "allow_asymmetric" in d and not isinstance(d["allow_asymmetric"], bool):
        raise ConfigError("kernel.allow_asymmetric", "expected a boolean")
    if "table" in d:
        t = d["table"]
        if not isinstance(t, list) or not all(isinstance(p, list) and len(p) == 2 for p in t):
            raise ConfigError("kernel.table", "expected a list of [x, q] pairs")
        for i, p in enumerate(t):
            _num(p[0], f"kernel.table[{i}][0]")
            _num(p[1], f"kernel.table[{i}][1]")
    try:
        return KernelSpec.from_dict(d)
    except (KernelSpecError, ValueError, KeyError) as exc:
        raise ConfigError("kernel", str(exc)) from None


def _parse_field(v, path, grid: Grid1D):
    if isinstance(v, bool):
        raise ConfigError(path, "expected an expression, number or table")
    if isinstance(v, (int, float)):
        c = _num(v, path)
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    if isinstance(v, str):
        try:
            return Expression(v)
        except ExpressionError as exc:
            raise ConfigError(path, str(exc)) from None
    d = _expect_obj(v, path)
    _check_keys(d, path, ("table",), ("table",))
    t = d["table"]
    if not isinstance(t, list) or not all(isinstance(p, list) and len(p) == 2 for p in t):
        raise ConfigError(f"{path}.table", "expected a list of [x, value] pairs")
    pts = [(_num(p[0], f"{path}.table[{i}][0]"), _num(p[1], f"{path}.table[{i}][1]"))
           for i, p in enumerate(t)]
    try:
        return TableFunction(pts, (grid.a, grid.b))
    except ValueError as exc:
        raise ConfigError(f"{path}.table", str(exc)) from None


def _parse_scheme(v, experiment: str, params: dict) -> SchemeConfig:
    d = _expect_obj(v, "scheme")
    allowed = ("cfl", "t_end", "max_steps", "G_max", "output_times", "system", "eps", "gamma")
    _check_keys(d, "scheme", allowed)
    kw: dict = {}
    for k in ("cfl", "t_end", "G_max", "eps"):
        if k in d:
            kw[k] = _num(d[k], f"scheme.{k}", positive=True)
    if "gamma" in d:
        kw["gamma"] = _num(d["gamma"], "scheme.gamma")
    if "max_steps" in d:
        kw["max_steps"] = _num(d["max_steps"], "scheme.max_steps", positive=True, integer=True)
    if "output_times" in d:
        kw["output_times"] = tuple(_num_list(d["output_times"], "scheme.output_times", positive=True))
    if "system" in d:
        if d["system"] not in ("nonlocal", "rescaled", "limit"):
            raise ConfigError("scheme.system", f"unknown system {d['system']!r}")
        kw["system"] = d["system"]
    interval = params.get("snapshot_interval")
    if interval and "output_times" not in kw:
        t_end = kw.get("t_end", SchemeConfig.t_end)
        m = int(math.floor(t_end / interval + 1e-9))
        kw["output_times"] = tuple(interval * np.arange(1, m + 1))
    try:
        return SchemeConfig(**kw)
    except ValueError as exc:
        raise ConfigError("scheme", str(exc)) from None


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Validate a JSON document; ``experiment`` fills in or must match the config's."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from None
    d = _expect_obj(raw, "")
    _check_keys(d, "", ("kernel", "grid", "initial_data", "scheme", "experiment",
                        "output_dir", "seed"), ("grid",))

    if "experiment" in d:
        name, params = _parse_experiment(d["experiment"])
        if experiment is not None and name != experiment.replace("-", "_"):
            raise ConfigError("experiment", f"config declares {name!r}, command is {experiment!r}")
    elif experiment is not None:
        name, params = _parse_experiment(experiment)
    else:
        raise ConfigError("experiment", "missing required key")

    g = _expect_obj(d["grid"], "grid")
    _check_keys(g, "grid", ("a", "b", "n"), ("a", "b", "n"))
    try:
        grid = Grid1D(_num(g["a"], "grid.a"), _num(g["b"], "grid.b"),
                      _num(g["n"], "grid.n", positive=True, integer=True))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("grid", str(exc)) from None

    kernel = _parse_kernel(d["kernel"]) if "kernel" in d else None
    if kernel is None and name not in ("classify",):
        raise ConfigError("kernel", "missing required key")

    rho0 = u0 = random_data = None
    if name != "validate_kernel":
        if "initial_data" not in d:
            raise ConfigError("initial_data", "missing required key")
        init = _expect_obj(d["initial_data"], "initial_data")
        if "random" in init:
            _check_keys(init, "initial_data", ("random",))
            r = _expect_obj(init["random"], "initial_data.random")
            _check_keys(r, "initial_data.random", ("modes", "u_amp", "rho_amp"))
            random_data = {}
            if "modes" in r:
                random_data["modes"] = _num(r["modes"], "initial_data.random.modes", positive=True, integer=True)
            for k in ("u_amp", "rho_amp"):
                if k in r:
                    random_data[k] = _num(r[k], f"initial_data.random.{k}")
        else:
            _check_keys(init, "initial_data", ("rho0", "u0"), ("rho0", "u0"))
            rho0 = _parse_field(init["rho0"], "initial_data.rho0", grid)
            u0 = _parse_field(init["u0"], "initial_data.u0", grid)

    scheme = _parse_scheme(d.get("scheme", {}), name, params)
    out = d.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_dir", "expected a string")
    seed = _num(d.get("seed", 0), "seed", integer=True)
    return ExperimentConfig(name, params, grid, kernel, rho0, u0, scheme, random_data,
                            out, seed, raw)
