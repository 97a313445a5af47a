"""Prestrain fields eps_g, kappa_g, the growth tensor a^h and the metric g^h.

Both fields are 3x3 matrices of closed-form expressions in ``x1, x2`` held as
sympy objects, so downstream code can differentiate them exactly. The
accepted expression language is deliberately small: numbers, ``pi``,
``x1``, ``x2``, ``+ - * / **`` and ``sin``, ``cos``, ``exp``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np
import sympy

from .tensorfield import GridSpec, MatrixField2

X1, X2 = sympy.symbols("x1 x2", real=True)

_ALLOWED_FUNCS = {sympy.sin, sympy.cos, sympy.exp}
_NAMESPACE = {"x1": X1, "x2": X2, "pi": sympy.pi, "sin": sympy.sin, "cos": sympy.cos,
              "exp": sympy.exp}


class PrestrainError(ValueError):
    pass


def parse_expr(text: str | float | int, what: str = "expression") -> sympy.Expr:
    """Parse one scalar expression of the restricted language."""
    if isinstance(text, (int, float)):
        return sympy.nsimplify(text) if float(text).is_integer() else sympy.Float(text)
    if not isinstance(text, str):
        raise PrestrainError(f"{what}: expected a string expression, got {type(text).__name__}")
    src = text.replace("^", "**")
    if not re.fullmatch(r"[\w\s.+\-*/()]*", src):
        raise PrestrainError(f"{what}: illegal characters in {text!r}")
    names = set(re.findall(r"(?<![\d.])[A-Za-z_]\w*", src)) - set(_NAMESPACE)
    if names:
        raise PrestrainError(f"{what}: unknown names {sorted(names)} in {text!r}")
    try:
        from sympy.parsing.sympy_parser import parse_expr as _parse, standard_transformations
        expr = _parse(src, local_dict=dict(_NAMESPACE),
                      global_dict={"Integer": sympy.Integer, "Float": sympy.Float,
                                   "Rational": sympy.Rational, "Symbol": sympy.Symbol},
                      transformations=standard_transformations)
    except Exception as exc:  # sympy raises a zoo of exception types here
        raise PrestrainError(f"{what}: cannot parse {text!r} ({exc})") from None
    if not isinstance(expr, sympy.Expr):
        raise PrestrainError(f"{what}: {text!r} is not a scalar expression")
    extra = expr.free_symbols - {X1, X2}
    if extra:
        raise PrestrainError(f"{what}: unknown names {sorted(map(str, extra))} in {text!r}")
    for fn in expr.atoms(sympy.Function):
        if fn.func not in _ALLOWED_FUNCS:
            raise PrestrainError(f"{what}: function {fn.func} not allowed in {text!r}")
    return expr


def _split_args(body: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in body:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    parts.append(cur)
    return parts


def parse_matrix(spec, what: str = "matrix") -> sympy.Matrix:
    """``"0"``, ``"diag(a, b, c)"`` or a nested 3x3 list of expressions."""
    if isinstance(spec, (int, float)) and spec == 0:
        return sympy.zeros(3, 3)
    if isinstance(spec, str):
        s = spec.strip()
        if s == "0":
            return sympy.zeros(3, 3)
        m = re.fullmatch(r"diag\((.*)\)", s)
        if m:
            args = _split_args(m.group(1))
            if len(args) != 3:
                raise PrestrainError(f"{what}: diag() takes 3 entries, got {len(args)}")
            return sympy.diag(*[parse_expr(a.strip(), f"{what}[{i}{i}]") for i, a in enumerate(args)])
        raise PrestrainError(f"{what}: expected '0', 'diag(e1,e2,e3)' or a 3x3 list, got {spec!r}")
    if isinstance(spec, (list, tuple)) and len(spec) == 3 and all(
            isinstance(r, (list, tuple)) and len(r) == 3 for r in spec):
        return sympy.Matrix(3, 3, lambda i, j: parse_expr(spec[i][j], f"{what}[{i}{j}]"))
    raise PrestrainError(f"{what}: expected '0', 'diag(e1,e2,e3)' or a 3x3 list, got {spec!r}")


def lambdify_matrix(M: sympy.Matrix):
    """Vectorized evaluator ``(x1, x2) -> array (r, c, *shape)``."""
    rows, cols = M.shape
    fns = [[sympy.lambdify((X1, X2), M[i, j], "numpy") for j in range(cols)] for i in range(rows)]

    def evaluate(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        shape = np.broadcast(x1, x2).shape
        out = np.empty((rows, cols, *shape))
        for i in range(rows):
            for j in range(cols):
                out[i, j] = np.broadcast_to(fns[i][j](x1, x2), shape)
        return out

    return evaluate


@dataclass(frozen=True)
class Domain:
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    def grid(self, nx: int, ny: int | None = None) -> GridSpec:
        return GridSpec(self.x_min, self.x_max, self.y_min, self.y_max, nx, nx if ny is None else ny)

    def corners(self):
        return [(self.x_min, self.y_min), (self.x_min, self.y_max),
                (self.x_max, self.y_min), (self.x_max, self.y_max)]


@dataclass(frozen=True, eq=False)
class PrestrainSpec:
    eps_g: sympy.Matrix
    kappa_g: sympy.Matrix
    name: str = "custom"
    domain: Domain = field(default_factory=Domain)

    def __post_init__(self):
        object.__setattr__(self, "_eps", lambdify_matrix(self.eps_g))
        object.__setattr__(self, "_kap", lambdify_matrix(self.kappa_g))
        for x1, x2 in self.domain.corners():
            for label, fn in (("eps_g", self._eps), ("kappa_g", self._kap)):
                with np.errstate(all="ignore"):
                    vals = fn(x1, x2)
                if not np.all(np.isfinite(vals)):
                    raise PrestrainError(f"{label} is not finite at corner ({x1}, {x2})")

    def eps(self, x1, x2) -> np.ndarray:
        return self._eps(x1, x2)

    def kappa(self, x1, x2) -> np.ndarray:
        return self._kap(x1, x2)

    def to_config(self) -> dict:
        return {"name": self.name,
                "eps_g": [[str(self.eps_g[i, j]) for j in range(3)] for i in range(3)],
                "kappa_g": [[str(self.kappa_g[i, j]) for j in range(3)] for i in range(3)],
                "domain": vars(self.domain)}


def eval_prestrain(spec: PrestrainSpec, x: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    x1, x2 = x
    d = spec.domain
    tol = 1e-12
    if not (d.x_min - tol <= x1 <= d.x_max + tol and d.y_min - tol <= x2 <= d.y_max + tol):
        raise PrestrainError(f"point {x} outside domain {d}")
    return spec.eps(x1, x2), spec.kappa(x1, x2)


def sample_sym2(M_eval, grid: GridSpec) -> MatrixField2:
    """``(sym M)_{2x2}`` sampled at the grid nodes."""
    X1g, X2g = grid.mesh()
    M = M_eval(X1g, X2g)[:2, :2]
    return MatrixField2(grid, 0.5 * (M + M.transpose(1, 0, 2, 3)), symmetric=True)


# ---------------------------------------------------------------------------
# presets


def _preset(name: str, params: dict | None = None, domain: Domain | None = None) -> PrestrainSpec:
    params = dict(params or {})
    domain = domain or Domain()
    Z = sympy.zeros(3, 3)
    I3 = sympy.eye(3)

    def take(key, default):
        val = params.pop(key, default)
        if not isinstance(val, (int, float)):
            raise PrestrainError(f"preset {name}: parameter {key!r} must be a number")
        return sympy.nsimplify(val)

    if name == "zero":
        spec = PrestrainSpec(Z, Z, "zero", domain)
    elif name == "swell":
        a = take("alpha", 1.0)
        spec = PrestrainSpec(a * I3, Z, f"swell({a})", domain)
    elif name == "uniform-bend":
        c = take("c", 1.0)
        spec = PrestrainSpec(Z, c * I3, f"uniform-bend({c})", domain)
    elif name == "saddle-bend":
        c = take("c", 1.0)
        spec = PrestrainSpec(Z, sympy.diag(c, -c, 0), f"saddle-bend({c})", domain)
    elif name == "cylinder-bend":
        c = take("c", 1.0)
        spec = PrestrainSpec(Z, sympy.diag(c, 0, 0), f"cylinder-bend({c})", domain)
    elif name == "incompatible-stretch":
        a = take("alpha", 1.0)
        spec = PrestrainSpec(sympy.diag(a * X2**2, 0, 0), Z, f"incompatible-stretch({a})", domain)
    else:
        raise PrestrainError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    if params:
        raise PrestrainError(f"preset {name}: unknown parameters {sorted(params)}")
    return spec


PRESETS = ("zero", "swell", "uniform-bend", "saddle-bend", "cylinder-bend", "incompatible-stretch")


def preset(name: str, **params) -> PrestrainSpec:
    """Named prestrain, e.g. ``preset("swell", alpha=0.1)``."""
    m = re.fullmatch(r"([a-z\-]+)\(([^)]*)\)", name.strip())
    if m:  # "swell(0.1)" style shorthand
        name = m.group(1)
        key = {"swell": "alpha", "incompatible-stretch": "alpha"}.get(name, "c")
        params.setdefault(key, float(m.group(2)))
    return _preset(name, params)


def parse_domain(obj) -> Domain:
    if not isinstance(obj, dict):
        raise PrestrainError("domain: expected an object with x_min, x_max, y_min, y_max")
    unknown = set(obj) - {"x_min", "x_max", "y_min", "y_max"}
    if unknown:
        raise PrestrainError(f"domain: unknown keys {sorted(unknown)}")
    try:
        d = Domain(**{k: float(v) for k, v in obj.items()})
    except (TypeError, ValueError) as exc:
        raise PrestrainError(f"domain: {exc}") from None
    if not (d.x_max > d.x_min and d.y_max > d.y_min):
        raise PrestrainError("domain: empty rectangle")
    return d


def prestrain_from_dict(obj: dict) -> PrestrainSpec:
    if not isinstance(obj, dict):
        raise PrestrainError("prestrain config must be a JSON object")
    domain = parse_domain(obj["domain"]) if "domain" in obj else Domain()
    if "preset" in obj:
        unknown = set(obj) - {"preset", "params", "domain"}
        if unknown:
            raise PrestrainError(f"unknown keys {sorted(unknown)}")
        params = obj.get("params", {})
        if not isinstance(params, dict):
            raise PrestrainError("params: expected an object")
        return _preset(obj["preset"], params, domain)
    unknown = set(obj) - {"eps_g", "kappa_g", "domain", "name"}
    if unknown:
        raise PrestrainError(f"unknown keys {sorted(unknown)}")
    eps = parse_matrix(obj.get("eps_g", "0"), "eps_g")
    kap = parse_matrix(obj.get("kappa_g", "0"), "kappa_g")
    return PrestrainSpec(eps, kap, str(obj.get("name", "custom")), domain)


def load_prestrain_config(text: str) -> PrestrainSpec:
    """Parse a JSON prestrain document (preset form or explicit matrices)."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PrestrainError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return prestrain_from_dict(obj)


# ---------------------------------------------------------------------------
# growth tensor


@dataclass(frozen=True)
class GrowthEval:
    a_h: np.ndarray
    a_h_inv: np.ndarray
    g_h: np.ndarray


def growth_matrix(spec: PrestrainSpec, h: float, x1, x2, x3) -> np.ndarray:
    """``Id3 + h^2 eps_g(x') + h x3 kappa_g(x')`` with ``x3`` the physical offset.

    Broadcasts over ``x1, x2, x3``; returns shape ``(*shape, 3, 3)``.
    """
    x3 = np.asarray(x3, dtype=float)
    eps = np.moveaxis(spec.eps(x1, x2), (0, 1), (-2, -1))
    kap = np.moveaxis(spec.kappa(x1, x2), (0, 1), (-2, -1))
    return np.eye(3) + h**2 * eps + h * x3[..., None, None] * kap


def growth_tensor(spec: PrestrainSpec, h: float, x: tuple[float, float], x3: float) -> GrowthEval:
    """Growth tensor, its inverse and the metric at ``(x', x3)``; ``x3`` is physical."""
    if not h > 0:
        raise PrestrainError(f"thickness must be positive, got {h}")
    eval_prestrain(spec, x)
    a = growth_matrix(spec, h, x[0], x[1], x3)
    det = np.linalg.det(a)
    if abs(det) < 1e-14:
        raise PrestrainError(f"singular growth tensor at h={h}, x'={x}, x3={x3}")
    a_inv = np.linalg.inv(a)
    g = a.T @ a
    return GrowthEval(a, a_inv, 0.5 * (g + g.T))


def growth_h_max(spec: PrestrainSpec, n: int = 17) -> float:
    """Thickness below which ``a^h`` is guaranteed invertible on the domain samples.

    Uses ``|a^h - Id| <= h^2 (|eps_g| + |kappa_g| / 2) < 1`` for scaled ``|x3| <= 1/2``.
    """
    X1g, X2g = spec.domain.grid(n).mesh()
    e = np.linalg.norm(spec.eps(X1g, X2g), ord=None, axis=(0, 1)).max()
    k = np.linalg.norm(spec.kappa(X1g, X2g), ord=None, axis=(0, 1)).max()
    bound = e + 0.5 * k
    return float("inf") if bound == 0 else float(1.0 / np.sqrt(bound))
