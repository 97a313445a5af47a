"""Discrete limiting plate energies and their exact gradients.

The energy is nodal collocation of

    1/2  int Q(sym grad w + 1/2 grad v (x) grad v - (sym eps_g)_2x2)
  + 1/24 int Q(grad^2 v + (sym kappa_g)_2x2)

with trapezoidal weights, where ``Q`` is ``Q2^In``, ``Q2`` or ``Q2^k``. Every
isotropic relaxed form reads ``2 mu |F|^2 + beta (Tr F)^2`` on symmetric ``F``,
so one assembly serves all three modes through ``beta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prestrain import PrestrainSpec, sample_sym2
from .quadform import Material, trace_coefficient
from .tensorfield import (GridSpec, MatrixField2, ScalarField, VectorField2, fd_hessian,
                          operators)


@dataclass(frozen=True)
class Mode:
    kind: str = "incompressible"
    k: float = 0.0

    def __post_init__(self):
        if self.kind not in ("incompressible", "compressible", "penalized"):
            raise ValueError(f"unknown energy mode {self.kind!r}")
        if self.kind == "penalized" and not self.k >= 0:
            raise ValueError(f"penalty k must be nonnegative, got {self.k}")

    @classmethod
    def parse(cls, text: str) -> Mode:
        """``incompressible``, ``compressible`` or ``penalized:<k>``."""
        if text.startswith("penalized"):
            _, _, k = text.partition(":")
            return cls("penalized", float(k) if k else 0.0)
        return cls(text)

    def beta(self, m: Material) -> float:
        return trace_coefficient(m, self.kind, self.k)

    def __str__(self):
        return f"penalized({self.k:g})" if self.kind == "penalized" else self.kind


INCOMPRESSIBLE = Mode("incompressible")
COMPRESSIBLE = Mode("compressible")


@dataclass(frozen=True, eq=False)
class PlateState:
    w: VectorField2
    v: ScalarField

    def __post_init__(self):
        if self.w.grid != self.v.grid:
            raise ValueError("w and v live on different grids")

    @property
    def grid(self) -> GridSpec:
        return self.v.grid

    @classmethod
    def zeros(cls, grid: GridSpec) -> PlateState:
        return cls(VectorField2.zeros(grid), ScalarField.zeros(grid))

    @classmethod
    def random(cls, grid: GridSpec, amplitude: float = 1e-2, seed: int = 0) -> PlateState:
        rng = np.random.default_rng(seed)
        return cls.from_vector(grid, amplitude * rng.standard_normal(3 * grid.size))

    @classmethod
    def from_vector(cls, grid: GridSpec, z: np.ndarray) -> PlateState:
        z = np.asarray(z, dtype=float).reshape(3, *grid.shape)
        return cls(VectorField2(grid, z[:2]), ScalarField(grid, z[2]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.w.values.ravel(), self.v.values.ravel()])


@dataclass(frozen=True)
class EnergyBreakdown:
    stretching: float
    bending: float
    mode: str

    @property
    def total(self) -> float:
        return self.stretching + self.bending


def _check_domain(s: PlateState, p: PrestrainSpec) -> None:
    g, d = s.grid, p.domain
    if not np.allclose([g.x_min, g.x_max, g.y_min, g.y_max],
                       [d.x_min, d.x_max, d.y_min, d.y_max], rtol=0, atol=1e-12):
        raise ValueError(f"state grid {g} does not cover prestrain domain {d}")


class _Assembly:
    """Strains and their pieces, shared by energy and gradient."""

    def __init__(self, s: PlateState, p: PrestrainSpec):
        _check_domain(s, p)
        g = s.grid
        ops = operators(g)
        w1, w2 = s.w.values[0].ravel(), s.w.values[1].ravel()
        v = s.v.values.ravel()
        E = sample_sym2(p.eps, g).values.reshape(2, 2, -1)
        K = sample_sym2(p.kappa, g).values.reshape(2, 2, -1)
        self.ops = ops
        self.vx, self.vy = ops.dx @ v, ops.dy @ v
        s11 = ops.dx @ w1 + 0.5 * self.vx**2 - E[0, 0]
        s22 = ops.dy @ w2 + 0.5 * self.vy**2 - E[1, 1]
        s12 = 0.5 * (ops.dy @ w1 + ops.dx @ w2) + 0.5 * self.vx * self.vy - E[0, 1]
        self.S = (s11, s22, s12)
        self.B = (ops.dxx @ v + K[0, 0], ops.dyy @ v + K[1, 1], ops.dxy @ v + K[0, 1])


def _form(m: Material, beta: float, F) -> np.ndarray:
    f11, f22, f12 = F
    return 2.0 * m.mu * (f11**2 + f22**2 + 2.0 * f12**2) + beta * (f11 + f22) ** 2


def _as_matrix_field(g: GridSpec, F) -> MatrixField2:
    f11, f22, f12 = (a.reshape(g.shape) for a in F)
    return MatrixField2(g, np.stack([np.stack([f11, f12]), np.stack([f12, f22])]), symmetric=True)


def stretching_strain(s: PlateState, p: PrestrainSpec) -> MatrixField2:
    return _as_matrix_field(s.grid, _Assembly(s, p).S)


def bending_strain(s: PlateState, p: PrestrainSpec) -> MatrixField2:
    _check_domain(s, p)
    K = sample_sym2(p.kappa, s.grid).values
    return MatrixField2(s.grid, fd_hessian(s.v).values + K, symmetric=True)


def energy(s: PlateState, p: PrestrainSpec, m: Material, mode: Mode = INCOMPRESSIBLE) -> EnergyBreakdown:
    a = _Assembly(s, p)
    beta = mode.beta(m)
    wts = a.ops.weights
    stretch = 0.5 * float(np.dot(wts, _form(m, beta, a.S)))
    bend = float(np.dot(wts, _form(m, beta, a.B))) / 24.0
    return EnergyBreakdown(stretch, bend, str(mode))


def energy_gradient(s: PlateState, p: PrestrainSpec, m: Material,
                    mode: Mode = INCOMPRESSIBLE) -> tuple[VectorField2, ScalarField]:
    """Exact gradient of :func:`energy` with respect to all nodal values of w and v."""
    _, grad = energy_and_gradient_vector(s, p, m, mode)
    gs = PlateState.from_vector(s.grid, grad)
    return gs.w, gs.v


def energy_and_gradient_vector(s: PlateState, p: PrestrainSpec, m: Material,
                               mode: Mode = INCOMPRESSIBLE) -> tuple[float, np.ndarray]:
    a = _Assembly(s, p)
    ops = a.ops
    beta = mode.beta(m)
    mu = m.mu
    wts = ops.weights

    s11, s22, s12 = a.S
    tr = s11 + s22
    # dE/dS with the off-diagonal entry counted once (it appears twice in |S|^2)
    p11 = 0.5 * wts * (4.0 * mu * s11 + 2.0 * beta * tr)
    p22 = 0.5 * wts * (4.0 * mu * s22 + 2.0 * beta * tr)
    p12 = 0.5 * wts * (8.0 * mu * s12)
    gw1 = ops.dx.T @ p11 + 0.5 * (ops.dy.T @ p12)
    gw2 = ops.dy.T @ p22 + 0.5 * (ops.dx.T @ p12)
    gv = (ops.dx.T @ (p11 * a.vx) + ops.dy.T @ (p22 * a.vy)
          + 0.5 * (ops.dx.T @ (p12 * a.vy) + ops.dy.T @ (p12 * a.vx)))

    b11, b22, b12 = a.B
    trb = b11 + b22
    q11 = wts / 24.0 * (4.0 * mu * b11 + 2.0 * beta * trb)
    q22 = wts / 24.0 * (4.0 * mu * b22 + 2.0 * beta * trb)
    q12 = wts / 24.0 * (8.0 * mu * b12)
    gv = gv + ops.dxx.T @ q11 + ops.dyy.T @ q22 + ops.dxy.T @ q12

    total = (0.5 * float(np.dot(wts, _form(m, beta, a.S)))
             + float(np.dot(wts, _form(m, beta, a.B))) / 24.0)
    return total, np.concatenate([gw1, gw2, gv])
