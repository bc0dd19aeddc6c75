"""Configuration files: sectioned ``key = value`` text or JSON, validated into problem and scenario objects.

A problem file::

    schema = 1
    kind = problem

    [grid]
    domain = disc
    n = 41

    [psi]
    family = double-phase
    p_hat = 0.5
    q_hat = 1
    coef = 0.5 + 0.25 * x

    [operator]
    diffusion = infinity

    [data]
    f = 1 + 0.5 * x
    g = 0

Numbers are plain literals; expressions in ``x``, ``y`` and ``r`` (distance
to the origin) become coefficient fields. Unknown sections and keys are errors.
"""
from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

SCHEMA_VERSION = 1
KINDS = ("problem", "scenario")
SCENARIOS = ("comparison", "smp", "hopf", "liouville", "liouville-growth", "nonuniqueness")

# section -> allowed keys
PROBLEM_SCHEMA = {
    "": {"schema", "kind", "label"},
    "grid": {"domain", "n", "center", "radius", "lower", "upper"},
    "psi": {"family", "p_hat", "q_hat", "coef", "i_psi", "s_psi", "l1", "l2", "a", "b"},
    "hamiltonian": {"kind", "drift", "rho", "drift_exponent", "sigma", "theta", "coef_a", "coef_b",
                    "growth_sigma", "growth_rho"},
    "operator": {"diffusion", "p", "p_field", "homogeneity", "convention", "scheme", "magnitude", "eps_g"},
    "data": {"f", "g"},
    "solver": {"tol", "max_iter", "safety", "initial", "step_rule"},
    "abp": {"levels", "slack", "allowance", "resolve_floor"},
}
SCENARIO_SCHEMA = {
    "": {"schema", "kind", "label"},
    "scenario": {"name", "theta", "sigma", "p", "n", "alpha", "alphas", "radius", "center", "grid",
                 "core_radius", "outer_radius", "drift", "rho", "zero_order", "samples", "tol"},
}


class ConfigError(ValueError):
    """One or more problems with a configuration; ``errors`` lists ``(line, message)``."""

    def __init__(self, errors: list):
        self.errors = list(errors)
        text = "; ".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors)
        super().__init__(text)


# ---------------------------------------------------------------------------
# expressions

_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
          "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan, "minimum": np.minimum, "maximum": np.maximum,
          "log1p": np.log1p}
_CONSTS = {"pi": math.pi, "e": math.e}
_VARS = ("x", "y", "r")
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod)
_UNOPS = (ast.UAdd, ast.USub)


def _check_node(node: ast.AST) -> None:
    if isinstance(node, ast.Expression):
        _check_node(node.body)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check_node(node.left)
        _check_node(node.right)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNOPS):
        _check_node(node.operand)
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        pass
    elif isinstance(node, ast.Name) and (node.id in _VARS or node.id in _CONSTS):
        pass
    elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
            and not node.keywords:
        for arg in node.args:
            _check_node(arg)
    else:
        raise ValueError(f"unsupported syntax {ast.dump(node)[:40]!r}")


@dataclass(frozen=True)
class Expression:
    """A coefficient ``f(x, y, r)`` compiled from text; callable on points of shape (..., n)."""

    text: str
    code: Any = field(repr=False, compare=False)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        env = dict(_CONSTS)
        env.update(_FUNCS)
        env["x"] = pts[..., 0]
        env["y"] = pts[..., 1] if pts.shape[-1] > 1 else np.zeros(pts.shape[:-1])
        env["r"] = np.linalg.norm(pts, axis=-1)
        with np.errstate(all="ignore"):
            out = eval(self.code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1])

    @property
    def is_constant(self) -> bool:
        return not any(isinstance(n, ast.Name) and n.id in _VARS for n in ast.walk(ast.parse(self.text, mode="eval")))


def parse_expression(text: str) -> Expression:
    """Compile an arithmetic expression over ``x``, ``y``, ``r`` with a fixed set of functions."""
    tree = ast.parse(text.strip(), mode="eval")
    _check_node(tree)
    return Expression(text.strip(), compile(tree, "<expr>", "eval"))


def _scalar_or_field(raw):
    """Float for numeric literals or constant expressions, otherwise a compiled expression."""
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    expr = parse_expression(str(raw))
    if expr.is_constant:
        return float(expr(np.zeros((1, 2)))[0])
    return expr


# ---------------------------------------------------------------------------
# raw parsing


@dataclass
class RawConfig:
    """Sections of raw values with the line each key came from (0 for JSON)."""

    sections: dict
    lines: dict
    source: str = "text"

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def line(self, section: str, key: str) -> int:
        return self.lines.get((section, key), 0)


def parse_text(text: str) -> RawConfig:
    """Parse the sectioned ``key = value`` format (``#`` starts a comment)."""
    sections: dict = {"": {}}
    lines: dict = {}
    errors = []
    current = ""
    for num, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                errors.append((num, f"malformed section header {body!r}"))
                continue
            current = body[1:-1].strip().lower()
            if current in sections and current:
                errors.append((num, f"duplicate section [{current}]"))
            sections.setdefault(current, {})
            continue
        if "=" not in body:
            errors.append((num, f"expected 'key = value', got {body!r}"))
            continue
        key, value = (part.strip() for part in body.split("=", 1))
        key = key.lower()
        if not key:
            errors.append((num, "empty key"))
            continue
        if key in sections[current]:
            errors.append((num, f"duplicate key {key!r}"))
            continue
        sections[current][key] = value
        lines[(current, key)] = num
    if errors:
        raise ConfigError(errors)
    return RawConfig(sections, lines)


def parse_json(text: str) -> RawConfig:
    """JSON form: top-level keys plus one object per section."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(exc.lineno, f"invalid JSON: {exc.msg}")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([(1, "JSON configuration must be an object")])
    sections: dict = {"": {}}
    for key, value in doc.items():
        if isinstance(value, dict):
            sections[key.lower()] = {k.lower(): v for k, v in value.items()}
        else:
            sections[""][key.lower()] = value
    return RawConfig(sections, {}, "json")


def parse_raw(text: str) -> RawConfig:
    return parse_json(text) if text.lstrip().startswith("{") else parse_text(text)


# ---------------------------------------------------------------------------
# typed access


class _Reader:
    """Typed accessors that collect errors instead of stopping at the first."""

    def __init__(self, raw: RawConfig, schema: dict):
        self.raw = raw
        self.errors: list = []
        for section, values in raw.sections.items():
            if section not in schema:
                ln = min((raw.line(section, k) for k in values), default=0)
                self.errors.append((ln, f"unknown section [{section}]"))
                continue
            for key in values:
                if key not in schema[section]:
                    where = f"[{section}]" if section else "top level"
                    self.errors.append((raw.line(section, key), f"unknown key {key!r} in {where}"))

    def _fail(self, section, key, msg):
        self.errors.append((self.raw.line(section, key), f"{section + '.' if section else ''}{key}: {msg}"))

    def has(self, section, key) -> bool:
        return key in self.raw.sections.get(section, {})

    def text(self, section, key, default=None, choices=None, required=False):
        val = self.raw.get(section, key)
        if val is None:
            if required:
                self.errors.append((0, f"missing required {section + '.' if section else ''}{key}"))
            return default
        val = str(val).strip()
        if choices is not None and val not in choices:
            self._fail(section, key, f"expected one of {', '.join(choices)}, got {val!r}")
            return default
        return val

    def number(self, section, key, default=None, integer=False, required=False):
        val = self.raw.get(section, key)
        if val is None:
            if required:
                self.errors.append((0, f"missing required {section + '.' if section else ''}{key}"))
            return default
        try:
            num = float(val) if not isinstance(val, str) else float(_scalar_or_field(val))
        except (TypeError, ValueError, SyntaxError):
            self._fail(section, key, f"expected a number, got {val!r}")
            return default
        if integer:
            if num != int(num):
                self._fail(section, key, f"expected an integer, got {val!r}")
                return default
            return int(num)
        return num

    def boolean(self, section, key, default=None):
        val = self.raw.get(section, key)
        if val is None:
            return default
        if isinstance(val, bool):
            return val
        low = str(val).strip().lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        self._fail(section, key, f"expected true or false, got {val!r}")
        return default

    def scalar_field(self, section, key, default=None):
        val = self.raw.get(section, key)
        if val is None:
            return default
        try:
            return _scalar_or_field(val)
        except (ValueError, SyntaxError) as exc:
            self._fail(section, key, f"bad expression {val!r} ({exc})")
            return default

    def vector(self, section, key, default=None, length=None):
        val = self.raw.get(section, key)
        if val is None:
            return default
        parts = list(val) if isinstance(val, (list, tuple)) else [p for p in str(val).split(",")]
        try:
            out = tuple(_scalar_or_field(p) for p in parts)
        except (ValueError, SyntaxError) as exc:
            self._fail(section, key, f"bad vector {val!r} ({exc})")
            return default
        if length is not None and len(out) != length:
            self._fail(section, key, f"expected {length} components, got {len(out)}")
            return default
        return out

    def numbers(self, section, key, default=None):
        vec = self.vector(section, key)
        if vec is None:
            return default
        if any(not isinstance(v, float) for v in vec):
            self._fail(section, key, "expected numbers")
            return default
        return vec


def _vector_field(comps):
    """Constant tuple or a callable stacking expression components."""
    if all(isinstance(c, float) for c in comps):
        return tuple(comps)

    def func(pts):
        pts = np.asarray(pts, dtype=float)
        return np.stack([np.broadcast_to(c(pts) if callable(c) else c, pts.shape[:-1]) for c in comps], axis=-1)
    return func


# ---------------------------------------------------------------------------
# problem


@dataclass
class ProblemConfig:
    spec: Any
    solve: Any
    levels: int = 16
    slack: float = 0.05
    allowance: float = 1.0
    resolve_floor: bool = True
    label: str = ""


@dataclass
class ScenarioConfig:
    name: str
    params: dict
    label: str = ""


def _build_grid(rd: _Reader, grid_n: Optional[int]):
    from .grid import Grid

    domain = rd.text("grid", "domain", "disc", ("disc", "box", "interval"))
    n = grid_n if grid_n is not None else rd.number("grid", "n", 41, integer=True)
    if n is not None and n < 5:
        rd._fail("grid", "n", "need at least 5 nodes per axis")
        return None
    if domain == "disc":
        center = rd.numbers("grid", "center", (0.0, 0.0))
        radius = rd.number("grid", "radius", 1.0)
        if radius is not None and radius <= 0:
            rd._fail("grid", "radius", "must be positive")
            return None
        if center is None or len(center) != 2:
            rd._fail("grid", "center", "need two coordinates")
            return None
        return Grid.ball(center, radius, n)
    default = (-1.0, -1.0) if domain == "box" else (-1.0,)
    lower = rd.numbers("grid", "lower", default)
    upper = rd.numbers("grid", "upper", tuple(-v for v in default))
    if lower is None or upper is None or len(lower) != len(upper) or len(lower) != len(default):
        rd._fail("grid", "lower", f"need {len(default)} coordinates for lower and upper")
        return None
    try:
        return Grid.box(lower, upper, n)
    except ValueError as exc:
        rd._fail("grid", "domain", str(exc))
        return None


def _build_psi(rd: _Reader, grid):
    from .fields import PSI_KINDS, PsiField, psi_family

    family = rd.text("psi", "family", "constant-power", PSI_KINDS)
    p_hat = rd.scalar_field("psi", "p_hat", 0.0)
    q_hat = rd.scalar_field("psi", "q_hat")
    coef = rd.scalar_field("psi", "coef", 0.0)
    if family is None:
        return None
    samples = grid.points[grid.closure] if grid is not None else None
    try:
        psi = psi_family(family, p_hat=p_hat, q_hat=q_hat, coef=coef, samples=samples)
    except ValueError as exc:
        rd._fail("psi", "family", str(exc))
        return None
    overrides = {}
    for key, attr in (("i_psi", "i_psi"), ("s_psi", "s_psi"), ("l1", "l1"), ("l2", "l2"),
                      ("a", "a_lower"), ("b", "b_upper")):
        val = rd.number("psi", key)
        if val is not None:
            overrides[attr] = val
    if overrides:
        from dataclasses import replace
        psi = replace(psi, **overrides)
    errs = psi.constant_errors()
    for msg in errs:
        rd.errors.append((rd.raw.line("psi", "family"), f"psi: {msg}"))
    return None if errs else psi


def _build_hamiltonian(rd: _Reader):
    from .fields import HAMILTONIAN_KINDS, Hamiltonian

    kinds = tuple(k for k in HAMILTONIAN_KINDS if k != "custom-callable")
    kind = rd.text("hamiltonian", "kind", "zero", kinds)
    kw = {"kind": kind or "zero"}
    drift = rd.vector("hamiltonian", "drift")
    if drift is not None:
        kw["drift"] = _vector_field(drift)
    for key in ("rho", "coef_a", "coef_b", "growth_rho"):
        val = rd.scalar_field("hamiltonian", key)
        if val is not None:
            kw[key] = val
    for key in ("sigma", "theta", "drift_exponent", "growth_sigma"):
        val = rd.number("hamiltonian", key)
        if val is not None:
            kw[key] = val
    return Hamiltonian(**kw)


def _build_operator(rd: _Reader, convention: Optional[str]):
    from .operators import CONVENTIONS, DIFFUSIONS, MAGNITUDES, SCHEMES, OperatorConfig

    kw = {"diffusion": rd.text("operator", "diffusion", "infinity", DIFFUSIONS)}
    p = rd.number("operator", "p")
    if p is not None:
        kw["p"] = p
    pf = rd.scalar_field("operator", "p_field")
    if pf is not None:
        kw["p_field"] = pf
    h = rd.number("operator", "homogeneity")
    if h is not None:
        kw["homogeneity"] = h
    conv = convention or rd.text("operator", "convention", "mean", CONVENTIONS)
    kw["convention"] = conv
    for key, choices in (("scheme", SCHEMES), ("magnitude", MAGNITUDES)):
        val = rd.text("operator", key, None, choices)
        if val is not None:
            kw[key] = val
    eps = rd.number("operator", "eps_g")
    if eps is not None:
        kw["eps_g"] = eps
    if any(v is None for v in kw.values()):
        return None
    try:
        return OperatorConfig(**kw)
    except ValueError as exc:
        rd._fail("operator", "diffusion", str(exc))
        return None


def _window_errors(rd: _Reader, psi, ham, cfg, grid) -> None:
    """The growth exponent must sit strictly below ``c1`` of the estimate for the chosen diffusion."""
    from .abp import sigma_ceiling

    if ham.kind == "zero" and ham.growth_sigma is None:
        return
    if cfg.diffusion == "infinity":
        variant, p, h = "infinity", None, None
    elif cfg.diffusion == "h-homogeneous":
        variant, p, h = "h-homogeneous", None, cfg.homogeneity
    else:
        variant, p, h = "p-finite", 2.0, None
    c1 = sigma_ceiling(variant, psi, p, h)
    sig = ham.envelope_sigma
    if not sig < c1:
        key = "growth_sigma" if ham.growth_sigma is not None else "sigma"
        rd._fail("hamiltonian", key, f"sigma={sig:g} violates the window sigma < c1 = {c1:g}")


def build_problem(raw: RawConfig, grid_n: Optional[int] = None, convention: Optional[str] = None,
                  tol: Optional[float] = None, levels: Optional[int] = None) -> ProblemConfig:
    """Validate a problem configuration; overrides take precedence over file values."""
    from .solver import ProblemSpec, SolveParams

    rd = _Reader(raw, PROBLEM_SCHEMA)
    _check_header(rd, "problem")
    grid = _build_grid(rd, grid_n)
    psi = _build_psi(rd, grid)
    ham = _build_hamiltonian(rd)
    cfg = _build_operator(rd, convention)
    f = rd.scalar_field("data", "f", 0.0)
    g = rd.scalar_field("data", "g", 0.0)
    solve_kw = {}
    for key, integer in (("tol", False), ("max_iter", True), ("safety", False)):
        val = rd.number("solver", key, integer=integer)
        if val is not None:
            solve_kw[key] = val
    for key, choices in (("initial", ("zero", "boundary-harmonic")), ("step_rule", ("spectral", "anisotropy"))):
        val = rd.text("solver", key, None, choices)
        if val is not None:
            solve_kw[key] = val
    if tol is not None:
        solve_kw["tol"] = tol
    k = levels if levels is not None else rd.number("abp", "levels", 16, integer=True)
    slack = rd.number("abp", "slack", 0.05)
    allowance = rd.number("abp", "allowance", 1.0)
    floor = rd.boolean("abp", "resolve_floor", True)
    if psi is not None and cfg is not None:
        _window_errors(rd, psi, ham, cfg, grid)
    if rd.errors:
        raise ConfigError(rd.errors)
    try:
        params = SolveParams(**solve_kw)
        spec = ProblemSpec(grid, psi, ham, cfg, f=f, g=g, label=rd.text("", "label", ""))
    except ValueError as exc:
        raise ConfigError([(0, str(exc))]) from None
    return ProblemConfig(spec, params, k, slack, allowance, floor, spec.label)


def _check_header(rd: _Reader, expected: str) -> None:
    version = rd.number("", "schema", None, integer=True, required=True)
    if version is not None and version != SCHEMA_VERSION:
        rd._fail("", "schema", f"unsupported schema version {version} (expected {SCHEMA_VERSION})")
    kind = rd.text("", "kind", expected, KINDS)
    if kind is not None and kind != expected:
        rd._fail("", "kind", f"expected {expected!r}")


def build_scenario(raw: RawConfig) -> ScenarioConfig:
    """Validate a scenario configuration; values stay loosely typed for the scenario runner."""
    rd = _Reader(raw, SCENARIO_SCHEMA)
    _check_header(rd, "scenario")
    name = rd.text("scenario", "name", None, SCENARIOS, required=True)
    params: dict = {}
    for key in ("theta", "sigma", "p", "alpha", "radius", "core_radius", "outer_radius", "tol"):
        val = rd.number("scenario", key)
        if val is not None:
            params[key] = val
    for key in ("n", "grid", "samples"):
        val = rd.number("scenario", key, integer=True)
        if val is not None:
            params[key] = val
    for key in ("center", "alphas"):
        val = rd.numbers("scenario", key)
        if val is not None:
            params[key] = val
    drift = rd.vector("scenario", "drift", length=2)
    if drift is not None:
        params["drift"] = _vector_field(drift)
    for key in ("rho", "zero_order"):
        val = rd.scalar_field("scenario", key)
        if val is not None:
            params[key] = val
    if name == "nonuniqueness" and all(k in params for k in ("theta", "sigma")):
        if not params["theta"] < params["sigma"] < 1 + params["theta"]:
            rd._fail("scenario", "sigma", "need theta < sigma < 1 + theta")
    if rd.errors:
        raise ConfigError(rd.errors)
    return ScenarioConfig(name, params, rd.text("", "label", ""))


def parse_config(text: str, **overrides):
    """Parse and validate; returns a :class:`ProblemConfig` or :class:`ScenarioConfig`."""
    raw = parse_raw(text)
    kind = str(raw.get("", "kind", "problem")).strip()
    if kind == "scenario":
        return build_scenario(raw)
    if kind != "problem":
        raise ConfigError([(raw.line("", "kind"), f"kind: expected one of {', '.join(KINDS)}, got {kind!r}")])
    return build_problem(raw, **overrides)
