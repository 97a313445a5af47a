"""Uniform rectangular grids, nodal field containers and difference operators.

Fields are stored with ``indexing="ij"``: axis 0 runs along x1, axis 1 along
x2, and flattening is C order (node ``(i, j)`` has flat index ``i * ny + j``).
All derivative operators are assembled once per grid as sparse matrices so
that their exact adjoints are available to the energy gradient.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("grid extent must be positive along both axes")
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need at least 3 nodes per axis, got {self.nx}x{self.ny}")

    @classmethod
    def unit(cls, n: int, ny: int | None = None) -> GridSpec:
        return cls(0.0, 1.0, 0.0, 1.0, n, n if ny is None else ny)

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def x1(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def x2(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def refine(self) -> GridSpec:
        """Grid with every spacing halved."""
        return GridSpec(self.x_min, self.x_max, self.y_min, self.y_max,
                        2 * self.nx - 1, 2 * self.ny - 1)

    def contains(self, x1, x2, tol: float = 1e-12) -> bool:
        x1, x2 = np.asarray(x1), np.asarray(x2)
        return bool(np.all((x1 >= self.x_min - tol) & (x1 <= self.x_max + tol)
                           & (x2 >= self.y_min - tol) & (x2 <= self.y_max + tol)))

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        """Boolean mask of nodes at least ``margin`` nodes away from the boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[margin:self.nx - margin, margin:self.ny - margin] = True
        return mask

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask(1)


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"expected shape {self.grid.shape}, got {vals.shape}")
        _check_finite(vals, "ScalarField")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: GridSpec) -> ScalarField:
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> ScalarField:
        X1, X2 = grid.mesh()
        return cls(grid, np.broadcast_to(fn(X1, X2), grid.shape))

    def __add__(self, other: ScalarField) -> ScalarField:
        _same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: ScalarField) -> ScalarField:
        _same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> ScalarField:
        return ScalarField(self.grid, a * self.values)

    __rmul__ = __mul__

    def max_abs(self, mask: np.ndarray | None = None) -> float:
        vals = self.values if mask is None else self.values[mask]
        return float(np.max(np.abs(vals))) if vals.size else 0.0


@dataclass(frozen=True, eq=False)
class VectorField2:
    grid: GridSpec
    values: np.ndarray  # (2, nx, ny)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (2, *self.grid.shape):
            raise ValueError(f"expected shape {(2, *self.grid.shape)}, got {vals.shape}")
        _check_finite(vals, "VectorField2")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: GridSpec) -> VectorField2:
        return cls(grid, np.zeros((2, *grid.shape)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> VectorField2:
        X1, X2 = grid.mesh()
        a, b = fn(X1, X2)
        return cls(grid, np.stack([np.broadcast_to(a, grid.shape),
                                   np.broadcast_to(b, grid.shape)]))

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[k])


@dataclass(frozen=True, eq=False)
class MatrixField2:
    grid: GridSpec
    values: np.ndarray  # (2, 2, nx, ny)
    symmetric: bool = field(default=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (2, 2, *self.grid.shape):
            raise ValueError(f"expected shape {(2, 2, *self.grid.shape)}, got {vals.shape}")
        _check_finite(vals, "MatrixField2")
        if self.symmetric and np.max(np.abs(vals[0, 1] - vals[1, 0]), initial=0.0) > 1e-12:
            raise ValueError("field flagged symmetric but A12 != A21")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: GridSpec, fn, symmetric: bool = False) -> MatrixField2:
        X1, X2 = grid.mesh()
        rows = fn(X1, X2)
        vals = np.empty((2, 2, *grid.shape))
        for a in range(2):
            for b in range(2):
                vals[a, b] = np.broadcast_to(rows[a][b], grid.shape)
        return cls(grid, vals, symmetric)

    def entry(self, a: int, b: int) -> ScalarField:
        return ScalarField(self.grid, self.values[a, b])

    def sym(self) -> MatrixField2:
        v = self.values
        return MatrixField2(self.grid, 0.5 * (v + v.transpose(1, 0, 2, 3)), symmetric=True)

    def trace(self) -> ScalarField:
        return ScalarField(self.grid, self.values[0, 0] + self.values[1, 1])


def _same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


# ---------------------------------------------------------------------------
# 1D stencils and their 2D Kronecker lifts


def _first_derivative_1d(n: int, h: float) -> sp.csr_matrix:
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5
        D[i, i + 1] = 0.5
    D[0, 0:3] = [-1.5, 2.0, -0.5]
    D[n - 1, n - 3:n] = [0.5, -2.0, 1.5]
    return (D / h).tocsr()


def _second_derivative_1d(n: int, h: float) -> sp.csr_matrix:
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1:i + 2] = [1.0, -2.0, 1.0]
    if n >= 4:
        D[0, 0:4] = [2.0, -5.0, 4.0, -1.0]
        D[n - 1, n - 4:n] = [-1.0, 4.0, -5.0, 2.0]
    else:
        D[0, 0:3] = [1.0, -2.0, 1.0]
        D[n - 1, 0:3] = [1.0, -2.0, 1.0]
    return (D / h**2).tocsr()


@dataclass(frozen=True, eq=False)
class Operators:
    """Sparse difference operators acting on C-ordered flattened nodal values."""

    dx: sp.csr_matrix
    dy: sp.csr_matrix
    dxx: sp.csr_matrix
    dyy: sp.csr_matrix
    dxy: sp.csr_matrix
    weights: np.ndarray  # trapezoidal quadrature weights, flattened


@functools.lru_cache(maxsize=32)
def operators(grid: GridSpec) -> Operators:
    Ix = sp.identity(grid.nx, format="csr")
    Iy = sp.identity(grid.ny, format="csr")
    d1x = _first_derivative_1d(grid.nx, grid.hx)
    d1y = _first_derivative_1d(grid.ny, grid.hy)
    dx = sp.kron(d1x, Iy, format="csr")
    dy = sp.kron(Ix, d1y, format="csr")
    dxx = sp.kron(_second_derivative_1d(grid.nx, grid.hx), Iy, format="csr")
    dyy = sp.kron(Ix, _second_derivative_1d(grid.ny, grid.hy), format="csr")
    dxy = sp.kron(d1x, d1y, format="csr")
    wx = np.full(grid.nx, grid.hx)
    wx[[0, -1]] *= 0.5
    wy = np.full(grid.ny, grid.hy)
    wy[[0, -1]] *= 0.5
    weights = np.outer(wx, wy).ravel()
    weights.setflags(write=False)
    return Operators(dx, dy, dxx, dyy, dxy, weights)


def _apply(op: sp.csr_matrix, values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (op @ values.ravel()).reshape(grid.shape)


def fd_gradient(f: ScalarField) -> VectorField2:
    """Second-order gradient; central inside, one-sided three-point on the boundary."""
    ops = operators(f.grid)
    return VectorField2(f.grid, np.stack([_apply(ops.dx, f.values, f.grid),
                                          _apply(ops.dy, f.values, f.grid)]))


def fd_hessian(f: ScalarField) -> MatrixField2:
    ops = operators(f.grid)
    g = f.grid
    fxy = _apply(ops.dxy, f.values, g)
    vals = np.stack([np.stack([_apply(ops.dxx, f.values, g), fxy]),
                     np.stack([fxy, _apply(ops.dyy, f.values, g)])])
    return MatrixField2(g, vals, symmetric=True)


def bracket(v: ScalarField, u: ScalarField) -> ScalarField:
    """Monge-Ampere bracket ``v,11 u,22 + v,22 u,11 - 2 v,12 u,12``."""
    _same_grid(v, u)
    Hv = fd_hessian(v).values
    Hu = fd_hessian(u).values
    return ScalarField(v.grid, Hv[0, 0] * Hu[1, 1] + Hv[1, 1] * Hu[0, 0]
                       - 2.0 * Hv[0, 1] * Hu[0, 1])


def curl_t_curl(A: MatrixField2) -> ScalarField:
    ops = operators(A.grid)
    g = A.grid
    a = A.values
    out = (_apply(ops.dyy, a[0, 0], g) + _apply(ops.dxx, a[1, 1], g)
           - _apply(ops.dxy, a[0, 1] + a[1, 0], g))
    return ScalarField(g, out)


def div_t_div(A: MatrixField2) -> ScalarField:
    ops = operators(A.grid)
    g = A.grid
    a = A.values
    out = (_apply(ops.dxx, a[0, 0], g) + _apply(ops.dyy, a[1, 1], g)
           + _apply(ops.dxy, a[0, 1] + a[1, 0], g))
    return ScalarField(g, out)


def divergence(A: MatrixField2) -> VectorField2:
    """Row-wise divergence ``(div A)_i = sum_j d_j A_ij``."""
    ops = operators(A.grid)
    g = A.grid
    a = A.values
    rows = [_apply(ops.dx, a[i, 0], g) + _apply(ops.dy, a[i, 1], g) for i in range(2)]
    return VectorField2(g, np.stack(rows))


def cof2(A: MatrixField2) -> MatrixField2:
    a = A.values
    vals = np.stack([np.stack([a[1, 1], -a[1, 0]]),
                     np.stack([-a[0, 1], a[0, 0]])])
    return MatrixField2(A.grid, vals, symmetric=A.symmetric)


def sym_grad(w: VectorField2) -> MatrixField2:
    g = fd_gradient(w.component(0)).values
    k = fd_gradient(w.component(1)).values
    off = 0.5 * (g[1] + k[0])
    return MatrixField2(w.grid, np.stack([np.stack([g[0], off]), np.stack([off, k[1]])]),
                        symmetric=True)


def integrate(f: ScalarField) -> float:
    """Trapezoidal rule over the rectangle (fixed summation order)."""
    return float(np.dot(operators(f.grid).weights, f.values.ravel()))
