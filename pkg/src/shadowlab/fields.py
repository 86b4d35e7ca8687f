"""C^1 vector fields with compiled evaluators.

Every field carries two numba-compiled kernels with the in-place signatures
``func(x, out)`` and ``jac(x, out)``.  Fields given as symbolic expressions get
an analytic Jacobian; fields given as raw kernels without one fall back to
central differences with step 1e-6.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sympy
import yaml
from numba import njit

from .spaces import Space, Euclidean, FlatTorus

FD_STEP = 1e-6
GOLDEN_ALPHA = (math.sqrt(5.0) - 1.0) / 2.0


class RestPointError(ValueError):
    """The field (nearly) vanishes somewhere on its declared domain."""


def _fd_jacobian(func, n):
    @njit
    def jac(x, out):
        xs = x.copy()
        fp = np.empty(n)
        fm = np.empty(n)
        for j in range(n):
            xs[j] = x[j] + FD_STEP
            func(xs, fp)
            xs[j] = x[j] - FD_STEP
            func(xs, fm)
            xs[j] = x[j]
            for i in range(n):
                out[i, j] = (fp[i] - fm[i]) / (2.0 * FD_STEP)

    return jac


def _grid(boxes, per_axis):
    pts = []
    for lo, hi in boxes:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts.append(np.stack([m.ravel() for m in mesh], axis=1))
    return np.concatenate(pts, axis=0)


@dataclass
class VectorFieldSpec:
    """A named vector field on ``space``.

    ``domain`` is a list of ``(lo, hi)`` boxes on which the field is sampled to
    certify that it has no rest points.
    """

    name: str
    space: Space
    func: object
    jac: object = None
    domain: list = None
    margin_grid: int = 41
    expressions: tuple = None
    variables: tuple = None
    analytic_jac: bool = field(init=False, default=True)
    nonsingular_margin: float = field(init=False, default=np.nan)

    def __post_init__(self):
        n = self.space.dim
        if self.jac is None:
            self.jac = _fd_jacobian(self.func, n)
            self.analytic_jac = False
        if self.domain is None:
            if self.space.is_torus:
                self.domain = [(np.zeros(n), np.ones(n))]
            else:
                self.domain = [(-5.0 * np.ones(n), 5.0 * np.ones(n))]
        per_axis = self.margin_grid if n <= 3 else 5
        pts = _grid(self.domain, per_axis)
        self.nonsingular_margin = float(min(np.linalg.norm(self.eval(p)) for p in pts))
        if not self.nonsingular_margin > 1e-12:
            raise RestPointError(
                f"field {self.name!r} vanishes on its sample domain "
                f"(min |X| = {self.nonsingular_margin:.3g})"
            )

    @property
    def dim(self) -> int:
        return self.space.dim

    def eval(self, x):
        out = np.empty(self.dim)
        self.func(np.ascontiguousarray(x, dtype=float), out)
        return out

    def jacobian(self, x):
        out = np.empty((self.dim, self.dim))
        self.jac(np.ascontiguousarray(x, dtype=float), out)
        return out

    def to_dict(self) -> dict:
        if self.expressions is None:
            return {"name": self.name}
        return {
            "name": self.name,
            "space": self.space.kind,
            "dim": self.dim,
            "expressions": list(self.expressions),
            "variables": list(self.variables),
        }


# -- built-in flows ---------------------------------------------------------


@njit
def _torus_ms(x, out):
    out[0] = 1.0
    out[1] = -math.sin(2.0 * math.pi * x[1])


@njit
def _torus_ms_jac(x, out):
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    out[1, 0] = 0.0
    out[1, 1] = -2.0 * math.pi * math.cos(2.0 * math.pi * x[1])


@njit
def _torus_irr(x, out):
    out[0] = 1.0
    out[1] = GOLDEN_ALPHA


@njit
def _zero_jac2(x, out):
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    out[1, 0] = 0.0
    out[1, 1] = 0.0


@njit
def _plane_shear(x, out):
    out[0] = 1.0
    out[1] = -math.tanh(x[1])


@njit
def _plane_shear_jac(x, out):
    c = math.cosh(x[1])
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    out[1, 0] = 0.0
    out[1, 1] = -1.0 / (c * c)


_BUILTINS = {}


def builtin_field(name: str) -> VectorFieldSpec:
    """Return one of the named example flows.

    ``torus-ms``     X = (1, -sin 2 pi y) on T^2, Morse-Smale (one attracting
                     and one repelling periodic orbit).
    ``torus-irr``    X = (1, alpha), alpha the golden mean; irrational
                     translation flow, not structurally stable.
    ``plane-shear``  X = (1, -tanh y) on R^2.
    """
    if name in _BUILTINS:
        return _BUILTINS[name]
    if name == "torus-ms":
        spec = VectorFieldSpec(name, FlatTorus(2), _torus_ms, _torus_ms_jac)
    elif name == "torus-irr":
        spec = VectorFieldSpec(name, FlatTorus(2), _torus_irr, _zero_jac2)
    elif name == "plane-shear":
        box = (np.array([-10.0, -10.0]), np.array([10.0, 10.0]))
        spec = VectorFieldSpec(name, Euclidean(2), _plane_shear, _plane_shear_jac, domain=[box])
    else:
        raise KeyError(f"unknown flow {name!r}; known flows: {', '.join(BUILTIN_NAMES)}")
    _BUILTINS[name] = spec
    return spec


BUILTIN_NAMES = ("torus-ms", "torus-irr", "plane-shear")


# -- fields from symbolic expressions ---------------------------------------


def _compile_components(exprs, symbols, fname):
    n = len(symbols)
    # argument names cannot collide with user variables such as x
    lines = [f"def {fname}(_state, _out):"]
    for i, s in enumerate(symbols):
        lines.append(f"    {s} = _state[{i}]")
    for idx, e in exprs:
        lines.append(f"    _out[{idx}] = {sympy.pycode(e, fully_qualified_modules=True)}")
    if len(lines) == n + 1:
        lines.append("    pass")
    ns = {"math": math}
    exec("\n".join(lines), ns)
    return njit(ns[fname])


def field_from_expressions(name, space, expressions, variables=None, domain=None):
    """Build a field from per-component expression strings.

    Variables default to ``x1 .. xn``; ``pi`` and the usual elementary
    functions are understood.
    """
    n = space.dim
    if len(expressions) != n:
        raise ValueError(f"expected {n} component expressions, got {len(expressions)}")
    variables = tuple(variables or [f"x{i + 1}" for i in range(n)])
    if len(variables) != n:
        raise ValueError("number of variables must equal the dimension")
    syms = sympy.symbols(variables)
    if n == 1:
        syms = (syms,) if not isinstance(syms, (tuple, list)) else tuple(syms)
    local = {str(s): s for s in syms}
    parsed = [sympy.sympify(e, locals=local) for e in expressions]
    unknown = set().union(*(p.free_symbols for p in parsed)) - set(syms)
    if unknown:
        raise ValueError(f"unknown symbols in field expressions: {sorted(map(str, unknown))}")
    func = _compile_components(list(enumerate(parsed)), variables, "field_func")
    jac_exprs = [(f"{i}, {j}", sympy.diff(p, syms[j])) for i, p in enumerate(parsed) for j in range(n)]
    jac = _compile_components(jac_exprs, variables, "field_jac")
    return VectorFieldSpec(
        name, space, func, jac, domain=domain,
        expressions=tuple(str(e) for e in expressions), variables=variables,
    )


def field_from_dict(data: dict) -> VectorFieldSpec:
    try:
        kind = data["space"]
        dim = int(data["dim"])
        exprs = data["expressions"]
    except KeyError as exc:
        raise ValueError(f"field definition is missing {exc.args[0]!r}") from None
    kinds = {"torus": FlatTorus, "flat-torus": FlatTorus, "euclidean": Euclidean}
    if kind not in kinds:
        raise ValueError(f"field space must be one of {sorted(kinds)}, got {kind!r}")
    domain = data.get("domain")
    if domain is not None:
        domain = [(np.asarray(b[0], float), np.asarray(b[1], float)) for b in domain]
    return field_from_expressions(
        data.get("name", "custom"), kinds[kind](dim), exprs,
        variables=data.get("variables"), domain=domain,
    )


def load_field(path) -> VectorFieldSpec:
    """Read a field definition (YAML or JSON) with keys space, dim, expressions."""
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return field_from_dict(data)
