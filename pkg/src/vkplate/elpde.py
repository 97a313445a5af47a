"""Euler-Lagrange system of the incompressible prestrained von Karman plate.

    Delta^2 Phi       = -(3 mu / 2) [v, v] - 3 mu curl^T curl (sym eps_g)_2x2
    (mu / 3) Delta^2 v = [v, Phi] - (mu / 3) div^T div (K + 1/2 cof K),   K = (sym kappa_g)_2x2

Both equations are solved with clamped essential data by the composed
13-point biharmonic stencil, eliminating ghost nodes through the normal
derivative condition. Residuals are evaluated where the 13-point stencil fits
inside the grid (two-node margin).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import sympy

from .energy2d import PlateState, stretching_strain
from .prestrain import X1, X2, PrestrainSpec, sample_sym2
from .quadform import Material
from .tensorfield import (GridSpec, MatrixField2, ScalarField, bracket, cof2, curl_t_curl,
                          div_t_div, divergence, fd_gradient, fd_hessian)

RESIDUAL_MARGIN = 2


@dataclass(frozen=True, eq=False)
class ClampedData:
    """Essential data ``u = value`` and ``grad u = grad`` on the boundary nodes.

    ``None`` entries mean homogeneous data. Only boundary entries are read.
    """

    value: np.ndarray | None = None
    grad: np.ndarray | None = None

    @classmethod
    def from_field(cls, expr: sympy.Expr, grid: GridSpec) -> ClampedData:
        X1g, X2g = grid.mesh()
        f = sympy.lambdify((X1, X2), expr, "numpy")
        fx = sympy.lambdify((X1, X2), sympy.diff(expr, X1), "numpy")
        fy = sympy.lambdify((X1, X2), sympy.diff(expr, X2), "numpy")
        shape = grid.shape
        return cls(np.broadcast_to(f(X1g, X2g), shape).astype(float),
                   np.stack([np.broadcast_to(fx(X1g, X2g), shape),
                             np.broadcast_to(fy(X1g, X2g), shape)]).astype(float))


@dataclass(frozen=True)
class BCSpec:
    phi: ClampedData = field(default_factory=ClampedData)
    v: ClampedData = field(default_factory=ClampedData)


@dataclass
class ELSolution:
    v: ScalarField
    phi: ScalarField
    membrane_residual: float = float("nan")
    bending_residual: float = float("nan")
    iterations: int = 0
    converged: bool = False
    trace: list[float] = field(default_factory=list, repr=False)
    message: str = ""


# ---------------------------------------------------------------------------
# biharmonic kernel


class _Biharmonic:
    """Clamped 13-point biharmonic operator on the interior unknowns of a grid.

    The extended grid carries one ghost layer; ghost values are
    ``u[-1] = u[1] - 2 h d_x u[0]`` (and the mirrored forms on the other
    edges), which turns the normal-derivative condition into a second-order
    central difference.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        nx, ny = grid.shape
        self.ni, self.nj = nx - 2, ny - 2
        self.ext_shape = (nx + 2, ny + 2)
        ex = lambda i, j: (i + 1) * (ny + 2) + (j + 1)  # noqa: E731  (ext index of node i, j)
        hx, hy = grid.hx, grid.hy
        stencil = {(0, 0): 6 / hx**4 + 6 / hy**4 + 8 / (hx**2 * hy**2)}
        for s in (-1, 1):
            stencil[(s, 0)] = -4 / hx**4 - 4 / (hx**2 * hy**2)
            stencil[(0, s)] = -4 / hy**4 - 4 / (hx**2 * hy**2)
            stencil[(2 * s, 0)] = 1 / hx**4
            stencil[(0, 2 * s)] = 1 / hy**4
            for t in (-1, 1):
                stencil[(s, t)] = 2 / (hx**2 * hy**2)
        # S: 13-point stencil from extended values to interior nodes
        I, J = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
        rows = ((I - 1) * self.nj + (J - 1)).ravel()
        r_list, c_list, v_list = [], [], []
        for (di, dj), cval in stencil.items():
            r_list.append(rows)
            c_list.append(ex(I + di, J + dj).ravel())
            v_list.append(np.full(rows.size, cval))
        n_ext = (nx + 2) * (ny + 2)
        self.S = sp.csr_matrix((np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
                               shape=(self.ni * self.nj, n_ext))
        # E: extended values as a linear function of the interior unknowns
        e_r, e_c = [], []
        unk = lambda i, j: (i - 1) * self.nj + (j - 1)  # noqa: E731
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                e_r.append(ex(i, j))
                e_c.append(unk(i, j))
        for j in range(1, ny - 1):  # ghosts mirror the first interior row
            e_r += [ex(-1, j), ex(nx, j)]
            e_c += [unk(1, j), unk(nx - 2, j)]
        for i in range(1, nx - 1):
            e_r += [ex(i, -1), ex(i, ny)]
            e_c += [unk(i, 1), unk(i, ny - 2)]
        self.E = sp.csr_matrix((np.ones(len(e_r)), (e_r, e_c)), shape=(n_ext, self.ni * self.nj))
        self.A = (self.S @ self.E).tocsc()
        self.A_ld = self.A.tocsr().astype(np.longdouble)
        self.A_norm = float(abs(self.A).sum(axis=1).max())
        self.lu = spla.splu(self.A)

    def data_vector(self, bc: ClampedData) -> np.ndarray:
        """Extended values fixed by the data (boundary nodes and ghost offsets)."""
        nx, ny = self.grid.shape
        hx, hy = self.grid.hx, self.grid.hy
        e0 = np.zeros(self.ext_shape)
        if bc.value is not None:
            val = np.asarray(bc.value, dtype=float)
            b = self.grid.boundary_mask()
            inner = e0[1:-1, 1:-1]
            inner[b] = val[b]
            # ghost rows inherit nothing from boundary values: u[-1] = u[1] - 2h u'
        if bc.grad is not None:
            gx, gy = np.asarray(bc.grad, dtype=float)
            js = np.arange(1, ny - 1)
            e0[0, js + 1] = -2 * hx * gx[0, js]
            e0[nx + 1, js + 1] = 2 * hx * gx[nx - 1, js]
            iis = np.arange(1, nx - 1)
            e0[iis + 1, 0] = -2 * hy * gy[iis, 0]
            e0[iis + 1, ny + 1] = 2 * hy * gy[iis, ny - 1]
        return e0.ravel()

    def solve(self, rhs: np.ndarray, bc: ClampedData) -> tuple[np.ndarray, dict]:
        e0 = self.data_vector(bc)
        b = rhs[1:-1, 1:-1].ravel() - self.S @ e0
        x = self.lu.solve(b)
        for _ in range(3):  # iterative refinement with an extended-precision residual
            r = self._residual(x, b)
            if np.linalg.norm(r) <= 1e-14 * max(np.linalg.norm(b), 1e-300):
                break
            x = x + self.lu.solve(r)
        r = self._residual(x, b)
        bmax = np.abs(b).max()
        diag = {"relative": float(np.linalg.norm(r) / max(np.linalg.norm(b), 1e-300)),
                "backward": float(np.abs(r).max() / max(self.A_norm * np.abs(x).max() + bmax, 1e-300))}
        full = (self.E @ x + e0).reshape(self.ext_shape)[1:-1, 1:-1].copy()
        if bc.value is not None:
            bmask = self.grid.boundary_mask()
            full[bmask] = np.asarray(bc.value, dtype=float)[bmask]
        return full, diag

    def _residual(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        r = b.astype(np.longdouble) - self.A_ld @ x.astype(np.longdouble)
        return r.astype(float)


@functools.lru_cache(maxsize=16)
def biharmonic_operator(grid: GridSpec) -> _Biharmonic:
    return _Biharmonic(grid)


def biharmonic_solve(rhs: ScalarField, bc: ClampedData = ClampedData(),
                     return_residual: bool = False):
    """Solve ``Delta^2 u = rhs`` with clamped data by a direct sparse factorization.

    With ``return_residual`` the linear-system diagnostics are returned too:
    ``relative`` is ``|r|_2 / |b|_2`` and ``backward`` the normwise backward
    error ``|r|_inf / (|A|_inf |x|_inf + |b|_inf)``, both with the residual
    accumulated in extended precision.
    """
    op = biharmonic_operator(rhs.grid)
    u, diag = op.solve(rhs.values, bc)
    if not diag["backward"] <= 1e-10:
        raise np.linalg.LinAlgError(f"biharmonic solve backward error {diag['backward']:.2e} exceeds 1e-10")
    out = ScalarField(rhs.grid, u)
    return (out, diag) if return_residual else out


def bilaplacian(u: ScalarField) -> ScalarField:
    """Composed 13-point ``Delta^2``; entries within two nodes of the boundary are zero."""
    g = u.grid
    a = u.values
    hx, hy = g.hx, g.hy
    out = np.zeros(g.shape)
    c = a[2:-2, 2:-2]
    xx = (a[:-4, 2:-2] - 4 * a[1:-3, 2:-2] + 6 * c - 4 * a[3:-1, 2:-2] + a[4:, 2:-2]) / hx**4
    yy = (a[2:-2, :-4] - 4 * a[2:-2, 1:-3] + 6 * c - 4 * a[2:-2, 3:-1] + a[2:-2, 4:]) / hy**4
    xy = (4 * c
          - 2 * (a[1:-3, 2:-2] + a[3:-1, 2:-2] + a[2:-2, 1:-3] + a[2:-2, 3:-1])
          + a[1:-3, 1:-3] + a[1:-3, 3:-1] + a[3:-1, 1:-3] + a[3:-1, 3:-1]) / (hx**2 * hy**2)
    out[2:-2, 2:-2] = xx + 2 * xy + yy
    return ScalarField(g, out)


# ---------------------------------------------------------------------------
# right-hand sides and residuals


def _zero_like(f: ScalarField) -> ScalarField:
    return ScalarField.zeros(f.grid)


def membrane_rhs(p: PrestrainSpec, m: Material, v: ScalarField) -> ScalarField:
    E = sample_sym2(p.eps, v.grid)
    return -1.5 * m.mu * bracket(v, v) - 3.0 * m.mu * curl_t_curl(E)


def kappa_source(p: PrestrainSpec, m: Material, grid: GridSpec) -> ScalarField:
    """``-(mu / 3) div^T div (K + 1/2 cof K)`` with ``K = (sym kappa_g)_2x2``."""
    K = sample_sym2(p.kappa, grid)
    M = MatrixField2(grid, K.values + 0.5 * cof2(K).values, symmetric=True)
    return -(m.mu / 3.0) * div_t_div(M)


def bending_rhs(p: PrestrainSpec, m: Material, v: ScalarField, phi: ScalarField) -> ScalarField:
    return bracket(v, phi) + kappa_source(p, m, v.grid)


def el_residual(sol: ELSolution, p: PrestrainSpec, m: Material,
                membrane_source: ScalarField | None = None,
                bending_source: ScalarField | None = None):
    """Residual fields of both equations and their max-norms on the residual interior."""
    v, phi = sol.v, sol.phi
    rm = bilaplacian(phi) - membrane_rhs(p, m, v)
    rb = (m.mu / 3.0) * bilaplacian(v) - bending_rhs(p, m, v, phi)
    if membrane_source is not None:
        rm = rm - membrane_source
    if bending_source is not None:
        rb = rb - bending_source
    mask = v.grid.interior_mask(RESIDUAL_MARGIN)
    zero = ~mask
    rm = ScalarField(v.grid, np.where(zero, 0.0, rm.values))
    rb = ScalarField(v.grid, np.where(zero, 0.0, rb.values))
    return rm, rb, {"membrane": rm.max_abs(), "bending": rb.max_abs()}


@dataclass(frozen=True)
class ELOptions:
    tol: float = 1e-10
    max_iter: int = 200
    damping: float = 1.0
    divergence_bound: float = 1e6


def solve_el(p: PrestrainSpec, m: Material, grid: GridSpec, bc: BCSpec = BCSpec(),
             opts: ELOptions = ELOptions(), membrane_source: ScalarField | None = None,
             bending_source: ScalarField | None = None,
             v0: ScalarField | None = None) -> ELSolution:
    """Frozen-bracket Picard iteration for the coupled system.

    Each sweep solves the membrane equation for ``Phi`` from the current ``v``,
    then the bending equation for ``v`` with ``[v_n, Phi_{n+1}]`` on the right,
    and relaxes ``v`` by the damping factor.
    """
    if not 0 < opts.damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    zero = ScalarField.zeros(grid)
    sm = membrane_source if membrane_source is not None else zero
    sb = bending_source if bending_source is not None else zero
    ksrc = kappa_source(p, m, grid)
    v = v0 if v0 is not None else zero
    phi = zero
    trace = []
    converged = False
    message = ""
    it = 0
    for it in range(1, opts.max_iter + 1):
        phi_new = biharmonic_solve(membrane_rhs(p, m, v) + sm, bc.phi)
        rhs_b = bracket(v, phi_new) + ksrc + sb
        v_hat = biharmonic_solve((3.0 / m.mu) * rhs_b, bc.v)
        v_new = ScalarField(grid, (1 - opts.damping) * v.values + opts.damping * v_hat.values)
        change = max(np.max(np.abs(v_new.values - v.values)),
                     np.max(np.abs(phi_new.values - phi.values)))
        trace.append(float(change))
        v, phi = v_new, phi_new
        if not np.isfinite(change) or max(np.abs(v.values).max(), np.abs(phi.values).max()) > opts.divergence_bound:
            message = f"iterates diverged at sweep {it}"
            break
        if change <= opts.tol:
            converged = True
            break
    else:
        message = f"no convergence after {opts.max_iter} sweeps"
    sol = ELSolution(v, phi, iterations=it, converged=converged, trace=trace, message=message)
    _, _, norms = el_residual(sol, p, m, membrane_source, bending_source)
    sol.membrane_residual = norms["membrane"]
    sol.bending_residual = norms["bending"]
    return sol


# ---------------------------------------------------------------------------
# manufactured solutions


def _sym_bracket(a, b):
    d = sympy.diff
    return d(a, X1, 2) * d(b, X2, 2) + d(a, X2, 2) * d(b, X1, 2) - 2 * d(a, X1, X2) * d(b, X1, X2)


def _sym_bilap(a):
    d = sympy.diff
    return d(a, X1, 4) + 2 * d(a, X1, 2, X2, 2) + d(a, X2, 4)


def manufactured_sources(v_star: sympy.Expr, phi_star: sympy.Expr, p: PrestrainSpec,
                         m: Material, grid: GridSpec) -> tuple[ScalarField, ScalarField]:
    """Exact residuals of ``(v*, Phi*)`` in the continuous system, sampled at the nodes.

    Appending them to the right-hand sides makes ``(v*, Phi*)`` an exact
    solution of the forced continuous problem.
    """
    d = sympy.diff
    mu = sympy.nsimplify(m.mu)
    E = (p.eps_g[:2, :2] + p.eps_g[:2, :2].T) / 2
    K = (p.kappa_g[:2, :2] + p.kappa_g[:2, :2].T) / 2
    ctc = d(E[0, 0], X2, 2) + d(E[1, 1], X1, 2) - 2 * d(E[0, 1], X1, X2)
    M = K + sympy.Matrix([[K[1, 1], -K[1, 0]], [-K[0, 1], K[0, 0]]]) / 2
    dtd = d(M[0, 0], X1, 2) + d(M[1, 1], X2, 2) + 2 * d(M[0, 1], X1, X2)
    s_m = _sym_bilap(phi_star) + sympy.Rational(3, 2) * mu * _sym_bracket(v_star, v_star) + 3 * mu * ctc
    s_b = mu / 3 * _sym_bilap(v_star) - _sym_bracket(v_star, phi_star) + mu / 3 * dtd
    X1g, X2g = grid.mesh()
    out = []
    for expr in (s_m, s_b):
        fn = sympy.lambdify((X1, X2), sympy.simplify(expr), "numpy")
        out.append(ScalarField(grid, np.broadcast_to(fn(X1g, X2g), grid.shape)))
    return out[0], out[1]


def sample_expr(expr: sympy.Expr, grid: GridSpec) -> ScalarField:
    X1g, X2g = grid.mesh()
    fn = sympy.lambdify((X1, X2), expr, "numpy")
    return ScalarField(grid, np.broadcast_to(fn(X1g, X2g), grid.shape))


def clamped_bubble(scale: float = 1.0) -> sympy.Expr:
    return sympy.nsimplify(scale) * X1**2 * (1 - X1) ** 2 * X2**2 * (1 - X2) ** 2


# ---------------------------------------------------------------------------
# diagnostics


def membrane_stress(s: PlateState, p: PrestrainSpec, m: Material) -> MatrixField2:
    """Stress ``2 mu (S + (Tr S) Id)`` conjugate to ``Q2^In`` at the stretching strain."""
    S = stretching_strain(s, p).values
    tr = S[0, 0] + S[1, 1]
    N = 2.0 * m.mu * (S + tr * np.eye(2)[:, :, None, None])
    return MatrixField2(s.grid, N, symmetric=True)


def membrane_stress_check(s: PlateState, p: PrestrainSpec, m: Material,
                          margin: int = RESIDUAL_MARGIN) -> float:
    """Max-norm of the row-wise divergence of the membrane stress on interior nodes."""
    div = divergence(membrane_stress(s, p, m)).values
    mask = s.grid.interior_mask(margin)
    return float(np.max(np.abs(div[:, mask])))


def natural_bc_residual(sol: ELSolution, p: PrestrainSpec, m: Material | None = None,
                        nu: float = 0.5) -> dict[str, float]:
    """Boundary max-norms of the three natural conditions.

    ``phi``: max of ``|Phi|`` and ``|d_n Phi|``; ``moment``:
    ``Psi:n(x)n + 1/2 Psi:t(x)t``; ``shear``:
    ``(1 - nu) d_t (Psi:n(x)t) + div(Psi + 1/2 cof Psi) . n``, where
    ``Psi = grad^2 v + (sym kappa_g)_2x2``. ``nu`` defaults to the
    incompressible value 1/2; pass ``m.nu`` for the compressible ratio.
    """
    g = sol.v.grid
    K = sample_sym2(p.kappa, g).values
    Psi = fd_hessian(sol.v).values + K
    cofPsi = cof2(MatrixField2(g, Psi)).values
    divM = divergence(MatrixField2(g, Psi + 0.5 * cofPsi)).values
    gphi = fd_gradient(sol.phi).values
    dpsi12 = fd_gradient(ScalarField(g, Psi[0, 1])).values

    phi_vals, moment, shear = [], [], []
    edges = {  # (index, outward normal, tangent axis)
        "left": ((0, slice(None)), np.array([-1.0, 0.0]), 1),
        "right": ((-1, slice(None)), np.array([1.0, 0.0]), 1),
        "bottom": ((slice(None), 0), np.array([0.0, -1.0]), 0),
        "top": ((slice(None), -1), np.array([0.0, 1.0]), 0),
    }
    for idx, n, t_axis in edges.values():
        t = np.zeros(2)
        t[t_axis] = 1.0
        phi_vals.append(np.abs(sol.phi.values[idx]))
        phi_vals.append(np.abs(n[0] * gphi[0][idx] + n[1] * gphi[1][idx]))
        P = Psi[(slice(None), slice(None)) + idx]
        moment.append(np.abs(np.einsum("i,ij...,j->...", n, P, n)
                             + 0.5 * np.einsum("i,ij...,j->...", t, P, t)))
        # n (x) t picks the off-diagonal entry up to the sign n . e_normal
        sign = n[1 - t_axis]
        d_t = dpsi12[t_axis][idx] * sign
        shear.append(np.abs((1.0 - nu) * d_t + n[0] * divM[0][idx] + n[1] * divM[1][idx]))
    return {"phi": float(max(a.max() for a in phi_vals)),
            "moment": float(max(a.max() for a in moment)),
            "shear": float(max(a.max() for a in shear))}
