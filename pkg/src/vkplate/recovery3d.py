"""Incompressible 3D deformations that realize the limiting plate energy.

Starting from a candidate map ``u_c`` built from smooth out-of-plane and
in-plane displacements ``v``, ``w``, a thickness reparametrization ``phi``
solves the ODE

    d phi / d x3 = f(x', phi, x3),    phi(x', 0) = 0,

which makes ``det(grad u^h (a^h)^-1) = 1`` for ``u^h(x', x3) = u_c(x', h phi)``.
The thickness variable ``x3`` is scaled to ``[-1/2, 1/2]`` throughout; the
physical coordinate is ``h x3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .prestrain import X1, X2, PrestrainSpec, growth_matrix, parse_expr, preset
from .quadform import Material, q3_eval
from .tensorfield import GridSpec

X3 = sympy.Symbol("x3")  # physical thickness coordinate
H = sympy.Symbol("h", positive=True)

TRACE_TOL = 1e-10
DET_HARD_LIMIT = 1e-4


class ConstructionError(RuntimeError):
    """The construction is invalid at this thickness (h too large or data too rough)."""


# ---------------------------------------------------------------------------
# small algebra


def l_vector(F) -> np.ndarray:
    """``(F13 + F31, F23 + F32, F33)``, the vector with ``sym(F - (F_2x2)*) = sym(l (x) e3)``."""
    F = np.asarray(F, dtype=float)
    ell = np.stack([F[..., 0, 2] + F[..., 2, 0], F[..., 1, 2] + F[..., 2, 1], F[..., 2, 2]], axis=-1)
    lhs = F.copy()
    lhs[..., :2, :2] = 0.0
    rhs = np.zeros_like(F)
    rhs[..., :, 2] = ell
    sym = lambda M: 0.5 * (M + np.swapaxes(M, -1, -2))
    err = np.max(np.abs(sym(lhs) - sym(rhs)), initial=0.0)
    if err > 1e-14 * max(1.0, np.max(np.abs(F), initial=0.0)):
        raise AssertionError(f"l_vector identity violated by {err:.2e}")
    return ell


def _l_vector_sym(M: sympy.Matrix) -> list:
    return [M[0, 2] + M[2, 0], M[1, 2] + M[2, 1], M[2, 2]]


def skew_A(grad_v) -> np.ndarray:
    """``[[0, -grad v], [grad v^T, 0]]`` for gradients of shape ``(..., 2)``."""
    g = np.asarray(grad_v, dtype=float)
    A = np.zeros(g.shape[:-1] + (3, 3))
    A[..., 0, 2] = -g[..., 0]
    A[..., 1, 2] = -g[..., 1]
    A[..., 2, 0] = g[..., 0]
    A[..., 2, 1] = g[..., 1]
    return A


def rotation_exp(h: float, grad_v) -> np.ndarray:
    """``exp(h A)`` by the Rodrigues formula."""
    K = h * skew_A(grad_v)
    theta = h * np.linalg.norm(np.asarray(grad_v, dtype=float), axis=-1)
    a = np.sinc(theta / np.pi)  # sin(t)/t
    b = 0.5 * np.sinc(theta / (2.0 * np.pi)) ** 2  # (1 - cos t)/t^2
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def green_density(F) -> np.ndarray:
    """``W(F) = 1/4 |F^T F - I|^2``; its quadratic form at the identity is ``2 |sym G|^2``."""
    F = np.asarray(F, dtype=float)
    E = np.swapaxes(F, -1, -2) @ F - np.eye(3)
    return 0.25 * np.sum(E * E, axis=(-2, -1))


def density_second_difference(D, step: float = 1e-4) -> float:
    """Central second difference of ``s -> W(I + s D)`` at ``s = 0``."""
    D = np.asarray(D, dtype=float)
    eye = np.eye(3)
    return float((green_density(eye + step * D) - 2.0 * green_density(eye)
                  + green_density(eye - step * D)) / step**2)


# ---------------------------------------------------------------------------
# recipe


def _lambdify(expr, args):
    fn = sympy.lambdify(args, expr, "numpy")

    def evaluate(*xs):
        xs = [np.asarray(x, dtype=float) for x in xs]
        shape = np.broadcast(*xs).shape
        return np.broadcast_to(np.asarray(fn(*xs), dtype=float), shape)

    return evaluate


def _lambdify_matrix(M: sympy.Matrix, args):
    fns = [[_lambdify(M[i, j], args) for j in range(M.shape[1])] for i in range(M.shape[0])]

    def evaluate(*xs):
        return np.stack([np.stack([f(*xs) for f in row], axis=-1) for row in fns], axis=-2)

    return evaluate


def _as_expr(e, what):
    return e if isinstance(e, sympy.Expr) else parse_expr(e, what)


@dataclass(frozen=True, eq=False)
class RecoveryRecipe:
    """Smooth limit pair ``(w, v)`` with prestrain and trace-zero corrections.

    ``c0``/``c1`` default to the optimal isotropic corrections, which only act
    on the third component. Expressions may be given as strings. ``validate=False``
    skips the trace-zero check, for probing the raw candidate formula.
    """

    v: sympy.Expr
    w: tuple
    p: PrestrainSpec
    c0: tuple | None = None
    c1: tuple | None = None
    name: str = "custom"
    density: str = "green"
    validate: bool = True

    def __post_init__(self):
        if self.density != "green":
            raise ValueError(f"unknown density {self.density!r}; only 'green' (1/4|F^T F - I|^2)")
        v = _as_expr(self.v, "v")
        w = tuple(_as_expr(e, f"w{i + 1}") for i, e in enumerate(self.w))
        if len(w) != 2:
            raise ValueError("w needs two components")
        gv = [sympy.diff(v, X1), sympy.diff(v, X2)]
        eps, kap = self.p.eps_g, self.p.kappa_g
        tr_s0 = sympy.diff(w[0], X1) + sympy.diff(w[1], X2) + (gv[0]**2 + gv[1]**2) / 2 - eps[0, 0] - eps[1, 1]
        tr_b = -(sympy.diff(v, X1, 2) + sympy.diff(v, X2, 2)) - kap[0, 0] - kap[1, 1]
        half_grad_sq = (gv[0]**2 + gv[1]**2) / 2
        c0 = ((0, 0, -tr_s0 - half_grad_sq) if self.c0 is None else self.c0)
        c1 = ((0, 0, -tr_b) if self.c1 is None else self.c1)
        c0 = tuple(sympy.sympify(_as_expr(e, "c0") if isinstance(e, str) else e) for e in c0)
        c1 = tuple(sympy.sympify(_as_expr(e, "c1") if isinstance(e, str) else e) for e in c1)
        if len(c0) != 3 or len(c1) != 3:
            raise ValueError("c0 and c1 need three components")
        for name, val in (("v", v), ("w", w), ("c0", c0), ("c1", c1)):
            object.__setattr__(self, name, val)

        # trace-zero conditions, checked on a sample lattice
        res0 = _lambdify(tr_s0 + half_grad_sq + c0[2], (X1, X2))
        res1 = _lambdify(tr_b + c1[2], (X1, X2))
        d = self.p.domain
        xs, ys = np.meshgrid(np.linspace(d.x_min, d.x_max, 7), np.linspace(d.y_min, d.y_max, 7))
        for label, fn in (("membrane", res0), ("bending", res1)):
            err = float(np.max(np.abs(fn(xs, ys))))
            if self.validate and not err <= TRACE_TOL:
                raise ValueError(f"{label} trace-zero condition violated by {err:.3e}")

        uc = self._candidate_expr(gv, eps, kap)
        jac = uc.jacobian([X1, X2, X3])
        args = (X1, X2, X3, H)
        object.__setattr__(self, "_uc", _lambdify_matrix(uc, args))
        object.__setattr__(self, "_duc", _lambdify_matrix(jac, args))
        object.__setattr__(self, "_gv", _lambdify_matrix(sympy.Matrix([gv]), (X1, X2)))
        object.__setattr__(self, "_strains", self._limit_strain_fns(w, v, gv, eps, kap, c0, c1))

    def _candidate_expr(self, gv, eps, kap) -> sympy.Matrix:
        le, lk = _l_vector_sym(eps), _l_vector_sym(kap)
        base = [X1 + H**2 * self.w[0] - X3 * H * gv[0],
                X2 + H**2 * self.w[1] - X3 * H * gv[1],
                X3 + H * self.v]
        return sympy.Matrix([base[i] + H**2 * X3 * (le[i] + self.c0[i])
                             + H * X3**2 * (lk[i] + self.c1[i]) / 2 for i in range(3)])

    @staticmethod
    def _limit_strain_fns(w, v, gv, eps, kap, c0, c1):
        e3 = sympy.Matrix([0, 0, 1])
        S0 = sympy.zeros(3, 3)
        B = sympy.zeros(3, 3)
        xs = (X1, X2)
        for a in range(2):
            for b in range(2):
                S0[a, b] = ((sympy.diff(w[a], xs[b]) + sympy.diff(w[b], xs[a])) / 2
                            + gv[a] * gv[b] / 2 - (eps[a, b] + eps[b, a]) / 2)
                B[a, b] = -sympy.diff(v, xs[a], xs[b]) - (kap[a, b] + kap[b, a]) / 2
        half = (gv[0]**2 + gv[1]**2) / 2
        G0 = S0 + (sympy.Matrix([c0[0], c0[1], c0[2] + half])) * e3.T
        G1 = B + sympy.Matrix(c1) * e3.T
        return _lambdify_matrix(G0, xs), _lambdify_matrix(G1, xs)

    def config(self) -> dict:
        return {"name": self.name, "v": str(self.v), "w": [str(e) for e in self.w],
                "c0": [str(e) for e in self.c0], "c1": [str(e) for e in self.c1],
                "prestrain": self.p.to_config(), "density": self.density}


RECIPES = ("zero", "uniform-bend", "saddle-bend", "bump")


def recipe(name: str, **params) -> RecoveryRecipe:
    """Named recipes. ``bump`` adds a smooth nonzero ``(w, v)`` to ``uniform-bend(c)``."""
    c = float(params.pop("c", 1.0))
    if name == "zero":
        r = RecoveryRecipe(sympy.Integer(0), (0, 0), preset("zero"), name="zero")
    elif name in ("uniform-bend", "saddle-bend"):
        r = RecoveryRecipe(sympy.Integer(0), (0, 0), preset(name, c=c), name=f"{name}({c:g})")
    elif name == "bump":
        amp = float(params.pop("amp", 0.5))
        a = sympy.nsimplify(amp)
        v = a * sympy.sin(sympy.pi * X1) * sympy.sin(sympy.pi * X2)
        w = (a * sympy.sin(sympy.pi * X2) / 5, a * sympy.cos(sympy.pi * X1) / 5)
        r = RecoveryRecipe(v, w, preset("uniform-bend", c=c), name=f"bump({amp:g},{c:g})")
    else:
        raise ValueError(f"unknown recipe {name!r}; known: {', '.join(RECIPES)}")
    if params:
        raise ValueError(f"recipe {name}: unknown parameters {sorted(params)}")
    return r


def recipe_from_dict(obj: dict) -> RecoveryRecipe:
    """JSON schema: ``{"preset": name, ...params}`` or explicit ``v``, ``w``, ``prestrain``."""
    from .prestrain import prestrain_from_dict

    obj = dict(obj)
    if "preset" in obj:
        return recipe(obj.pop("preset"), **obj)
    allowed = {"v", "w", "prestrain", "c0", "c1", "name", "density"}
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown recipe keys {sorted(unknown)}")
    p = prestrain_from_dict(obj["prestrain"]) if "prestrain" in obj else preset("zero")
    return RecoveryRecipe(obj.get("v", "0"), tuple(obj.get("w", ("0", "0"))), p,
                          obj.get("c0"), obj.get("c1"), obj.get("name", "custom"),
                          obj.get("density", "green"))


# ---------------------------------------------------------------------------
# pointwise maps


def build_candidate(r: RecoveryRecipe, h: float, x1, x2, x3_scaled):
    """Point ``u_c^h`` and its exact gradient, both with trailing axes ``(3,)``/``(3, 3)``."""
    x3 = h * np.asarray(x3_scaled, dtype=float)
    return r._uc(x1, x2, x3, h)[..., 0], r._duc(x1, x2, x3, h)


def f_eval(r: RecoveryRecipe, h: float, x1, x2, y, x3_scaled, with_rotation: bool = True):
    """Right-hand side of the thickness ODE at ``(x', y, x3)``."""
    y = np.asarray(y, dtype=float)
    x3_scaled = np.asarray(x3_scaled, dtype=float)
    _, duc = build_candidate(r, h, x1, x2, y)
    a_y = growth_matrix(r.p, h, x1, x2, h * y)
    a_x = growth_matrix(r.p, h, x1, x2, h * x3_scaled)
    M = duc @ np.linalg.inv(a_y)
    if with_rotation:
        R = rotation_exp(h, r._gv(x1, x2)[..., 0, :])
        M = np.swapaxes(R, -1, -2) @ M
    finv = np.linalg.det(M) * np.linalg.det(a_y @ np.linalg.inv(a_x))
    if np.any(~(finv > 0)):
        idx = np.unravel_index(int(np.argmin(np.where(np.isfinite(finv), finv, -np.inf))), finv.shape)
        loc = tuple(float(np.broadcast_to(c, finv.shape)[idx]) for c in (x1, x2, y, x3_scaled))
        raise ConstructionError(f"f is not positive at (x1, x2, y, x3) = {loc}, h = {h}")
    return 1.0 / finv


# ---------------------------------------------------------------------------
# thickness ODE


@dataclass(frozen=True)
class Slab3D:
    grid: GridSpec
    n3: int
    h: float

    def __post_init__(self):
        if self.n3 < 5 or self.n3 % 2 == 0:
            raise ValueError(f"n3 must be odd and >= 5, got {self.n3}")
        if not 0 < self.h <= 0.25:
            raise ConstructionError(f"thickness h must lie in (0, 1/4], got {self.h}")

    @property
    def t(self) -> np.ndarray:
        t = np.linspace(-0.5, 0.5, self.n3)
        t[self.n3 // 2] = 0.0
        return t

    def nodes(self):
        X, Y = self.grid.mesh()
        return X[:, :, None], Y[:, :, None], self.t[None, None, :]


@dataclass(eq=False)
class PhiSolution:
    slab: Slab3D
    phi: np.ndarray  # (nx, ny, n3)
    dphi3: np.ndarray  # f at the nodes, i.e. d phi / d x3
    iterations: int
    contraction: float
    dev_phi: float
    dev_dphi3: float
    dev_grad: float
    trace: list[float] = field(default_factory=list, repr=False)

    @property
    def grad(self) -> np.ndarray:
        """Tangential derivatives ``(2, nx, ny, n3)`` by second-order differences."""
        g = self.slab.grid
        return np.stack(np.gradient(self.phi, g.hx, g.hy, axis=(0, 1), edge_order=2))


def _integrate_from_midplane(vals: np.ndarray, dt: float) -> np.ndarray:
    m = vals.shape[-1] // 2
    up = cumulative_simpson(vals[..., m:], dx=dt, axis=-1, initial=0.0)
    down = cumulative_simpson(vals[..., m::-1], dx=-dt, axis=-1, initial=0.0)
    out = np.concatenate([down[..., :0:-1], up], axis=-1)
    out[..., m] = 0.0
    return out


def solve_phi(r: RecoveryRecipe, h: float, slab: Slab3D, tol: float = 1e-10,
              max_iter: int = 200) -> PhiSolution:
    """Picard iteration ``u <- T u`` from ``u = 0`` on the slab nodes."""
    if abs(slab.h - h) > 1e-15:
        raise ValueError(f"slab thickness {slab.h} differs from h = {h}")
    X, Y, T = slab.nodes()
    dt = 1.0 / (slab.n3 - 1)
    u = np.zeros(np.broadcast(X, Y, T).shape)
    prev_diff = None
    factor = 0.0
    trace = []
    for it in range(1, max_iter + 1):
        f = f_eval(r, h, X, Y, u, T)
        if not (np.all(f > 0.5) and np.all(f < 2.0)):
            raise ConstructionError(f"f leaves (1/2, 2) at h = {h}: range [{f.min():.4g}, {f.max():.4g}]")
        u_new = _integrate_from_midplane(f, dt)
        diff = float(np.max(np.abs(u_new - u)))
        trace.append(diff)
        if prev_diff is not None and prev_diff > 1e-13:
            factor = max(factor, diff / prev_diff)
            if factor >= 1.0:
                raise ConstructionError(f"Picard iteration does not contract at h = {h} (factor {factor:.3g})")
        u, prev_diff = u_new, diff
        if np.max(np.abs(u)) >= 1.0:
            raise ConstructionError(f"phi leaves (-1, 1) at h = {h}")
        if diff <= tol:
            break
    else:
        raise ConstructionError(f"Picard iteration did not reach tol {tol:g} in {max_iter} steps at h = {h}")
    dphi3 = f_eval(r, h, X, Y, u, T)
    g = slab.grid
    grad = np.gradient(u, g.hx, g.hy, axis=(0, 1), edge_order=2)
    return PhiSolution(slab, u, dphi3, it, factor,
                       dev_phi=float(np.max(np.abs(u - T))),
                       dev_dphi3=float(np.max(np.abs(dphi3 - 1.0))),
                       dev_grad=float(max(np.max(np.abs(grad[0])), np.max(np.abs(grad[1])))),
                       trace=trace)


# ---------------------------------------------------------------------------
# assembled deformation


def _frame(dphi1, dphi2, dphi3, h):
    M = np.zeros(np.shape(dphi3) + (3, 3))
    M[..., 0, 0] = 1.0
    M[..., 1, 1] = 1.0
    M[..., 2, 0] = h * dphi1
    M[..., 2, 1] = h * dphi2
    M[..., 2, 2] = dphi3
    return M


def _bilinear(grid: GridSpec, vals: np.ndarray, x1, x2):
    """``vals`` has shape ``(nx, ny, n)`` with one column per sample."""
    fx = (np.asarray(x1) - grid.x_min) / grid.hx
    fy = (np.asarray(x2) - grid.y_min) / grid.hy
    i = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
    j = np.clip(np.floor(fy).astype(int), 0, grid.ny - 2)
    sx, sy = fx - i, fy - j
    k = np.arange(vals.shape[-1])
    return ((1 - sx) * (1 - sy) * vals[i, j, k] + sx * (1 - sy) * vals[i + 1, j, k]
            + (1 - sx) * sy * vals[i, j + 1, k] + sx * sy * vals[i + 1, j + 1, k])


def assemble_uh(r: RecoveryRecipe, h: float, phi: PhiSolution, x1, x2, x3_scaled):
    """``u^h`` and its gradient at sample points (1D arrays of equal length)."""
    x1, x2, t = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (x1, x2, x3_scaled))
    slab = phi.slab
    if not slab.grid.contains(x1, x2) or np.any(np.abs(t) > 0.5 + 1e-12):
        raise ValueError("sample outside the slab")
    tn = slab.t
    spl = CubicHermiteSpline(tn, phi.phi, phi.dphi3, axis=2)
    dspl = spl.derivative()
    grad = phi.grad
    g1 = CubicSpline(tn, grad[0], axis=2)
    g2 = CubicSpline(tn, grad[1], axis=2)
    cols = [s(t) for s in (spl, dspl, g1, g2)]  # each (nx, ny, ns)
    ph, p3, p1, p2 = (_bilinear(slab.grid, c, x1, x2) for c in cols)
    point, duc = build_candidate(r, h, x1, x2, ph)
    return point, duc @ _frame(p1, p2, p3, h)


def det_deviation(r: RecoveryRecipe, h: float, phi: PhiSolution, x1, x2, x3_scaled) -> np.ndarray:
    _, F = assemble_uh(r, h, phi, x1, x2, x3_scaled)
    a = growth_matrix(r.p, h, x1, x2, h * np.asarray(x3_scaled, dtype=float))
    return np.linalg.det(F @ np.linalg.inv(a)) - 1.0


def random_det_deviation(r: RecoveryRecipe, h: float, phi: PhiSolution, n: int = 1000,
                         seed: int = 0) -> float:
    """Max ``|det - 1|`` over uniformly random slab samples."""
    rng = np.random.default_rng(seed)
    g = phi.slab.grid
    x1 = rng.uniform(g.x_min, g.x_max, n)
    x2 = rng.uniform(g.y_min, g.y_max, n)
    t = rng.uniform(-0.5, 0.5, n)
    return float(np.max(np.abs(det_deviation(r, h, phi, x1, x2, t))))


def _node_strain(r: RecoveryRecipe, h: float, phi: PhiSolution) -> np.ndarray:
    X, Y, T = phi.slab.nodes()
    shape = phi.phi.shape
    X, Y, T = (np.broadcast_to(a, shape) for a in (X, Y, T))
    _, duc = build_candidate(r, h, X, Y, phi.phi)
    grad = phi.grad
    F = duc @ _frame(grad[0], grad[1], phi.dphi3, h)
    return F @ np.linalg.inv(growth_matrix(r.p, h, X, Y, h * T))


@dataclass(frozen=True)
class EnergyResult:
    value: float  # h^-4 I^h
    det_dev: float  # max |det - 1| at the quadrature nodes


def energy3d_detail(r: RecoveryRecipe, h: float, slab: Slab3D, phi: PhiSolution | None = None,
                    tol: float = 1e-10) -> EnergyResult:
    phi = solve_phi(r, h, slab, tol) if phi is None else phi
    F = _node_strain(r, h, phi)
    det_dev = float(np.max(np.abs(np.linalg.det(F) - 1.0)))
    if det_dev > DET_HARD_LIMIT:
        raise ConstructionError(f"det deviation {det_dev:.3e} exceeds {DET_HARD_LIMIT:g} at h = {h}")
    W = green_density(F)
    g = slab.grid
    # (1/h) int over physical thickness = int over scaled thickness
    val = simpson(simpson(simpson(W, x=slab.t, axis=2), x=g.x2, axis=1), x=g.x1, axis=0)
    return EnergyResult(float(val) / h**4, det_dev)


def energy3d(r: RecoveryRecipe, h: float, slab: Slab3D, phi: PhiSolution | None = None,
             tol: float = 1e-10) -> float:
    """``h^-4 (1/h) int W(grad u^h (a^h)^-1)`` by tensor-product Simpson."""
    return energy3d_detail(r, h, slab, phi, tol).value


def limit_energy(r: RecoveryRecipe, n: int = 129) -> float:
    """``1/2 int Q3(G0) + 1/24 int Q3(G1)`` for the recipe's first and second order strains."""
    d = r.p.domain
    g = d.grid(n)
    X, Y = g.mesh()
    G0, G1 = (fn(X, Y) for fn in r._strains)
    m = Material(1.0, 0.0)
    integrand = 0.5 * q3_eval(m, G0) + q3_eval(m, G1) / 24.0
    return float(simpson(simpson(integrand, x=g.x2, axis=1), x=g.x1, axis=0))


# ---------------------------------------------------------------------------
# convergence study


@dataclass(frozen=True)
class StudyRow:
    h: float
    dev_phi: float
    dev_dphi3: float
    dev_grad: float
    det_dev: float
    energy: float
    gap: float
    contraction: float
    iterations: int


@dataclass
class StudyTable:
    rows: list[StudyRow]
    limit: float
    slopes: dict[str, float]
    recipe: str

    COLUMNS = ("h", "dev_phi", "dev_dphi3", "dev_grad", "det_dev", "energy", "gap",
               "contraction", "iterations")

    def as_records(self) -> list[dict]:
        return [{c: getattr(row, c) for c in self.COLUMNS} for row in self.rows]


_ZERO_FLOOR = 1e-13


def fit_slope(hs, vals) -> float:
    """Least-squares log-log slope; NaN when the column vanishes to round-off."""
    vals = np.abs(np.asarray(vals, dtype=float))
    if np.all(vals <= _ZERO_FLOOR):
        return float("nan")
    if np.any(vals <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(vals), 1)[0])


def convergence_study(r: RecoveryRecipe, h_list, grid: GridSpec, n3: int = 33, tol: float = 1e-10,
                      det_samples: int = 1000, seed: int = 0, limit_n: int = 129) -> StudyTable:
    hs = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_list must be strictly decreasing")
    limit = limit_energy(r, limit_n)
    rows = []
    for h in hs:
        slab = Slab3D(grid, n3, h)
        phi = solve_phi(r, h, slab, tol)
        en = energy3d_detail(r, h, slab, phi)
        det_dev = max(en.det_dev, random_det_deviation(r, h, phi, det_samples, seed))
        gap = abs(en.value - limit) / limit if limit > 0 else abs(en.value)
        rows.append(StudyRow(h, phi.dev_phi, phi.dev_dphi3, phi.dev_grad, det_dev, en.value,
                             gap, phi.contraction, phi.iterations))
    slopes = {c: fit_slope(hs, [getattr(row, c) for row in rows])
              for c in ("dev_phi", "dev_dphi3", "dev_grad", "gap")}
    return StudyTable(rows, limit, slopes, r.name)
