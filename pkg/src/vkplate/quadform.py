"""Quadratic forms of the stored energy at the identity and their 2D relaxations.

The isotropic closed forms broadcast over leading axes: ``F`` may have shape
``(..., 2, 2)``. The generic route represents ``Q3`` by a symmetric 6x6 matrix
acting on the orthonormal coordinates of ``sym F``

    s = (F11, F22, F33, sqrt2 F23, sqrt2 F13, sqrt2 F12),

so that ``|sym F|^2 = |s|^2``, and solves each relaxation as a small KKT
system. It serves as the oracle for the closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

SQRT2 = np.sqrt(2.0)
_TRACE = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
# positions of the in-plane coordinates (F11, F22, F12) and the free ones (F33, F23, F13)
_FIXED = (0, 1, 5)
_FREE = (2, 3, 4)


@dataclass(frozen=True)
class Material:
    mu: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    @property
    def nu(self) -> float:
        """Poisson ratio lambda / (2 (lambda + mu))."""
        return self.lam / (2.0 * (self.lam + self.mu))


@dataclass(frozen=True, eq=False)
class QuadForm3:
    """Symmetric 6x6 representation of a quadratic form on symmetric 3x3 matrices."""

    matrix: np.ndarray
    definite: bool = True

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.shape != (6, 6) or not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ValueError("QuadForm3 needs a symmetric 6x6 matrix")
        M = 0.5 * (M + M.T)
        eig = np.linalg.eigvalsh(M)
        if eig[0] < -1e-12 * max(1.0, eig[-1]) or (self.definite and eig[0] <= 0):
            raise ValueError(f"QuadForm3 not {'positive definite' if self.definite else 'PSD'}")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def isotropic(cls, m: Material, k: float = 0.0) -> QuadForm3:
        """``2 mu |sym F|^2 + (lambda + k) (Tr F)^2``."""
        return cls(2.0 * m.mu * np.eye(6) + (m.lam + k) * np.outer(_TRACE, _TRACE))

    def penalized(self, k: float) -> QuadForm3:
        return QuadForm3(self.matrix + k * np.outer(_TRACE, _TRACE), self.definite)

    def __call__(self, F) -> float:
        s = sym_coords(F)
        return float(s @ self.matrix @ s)


def sym_coords(F) -> np.ndarray:
    """Orthonormal coordinates of ``sym F`` for a 3x3 matrix."""
    F = np.asarray(F, dtype=float)
    S = 0.5 * (F + F.T)
    return np.array([S[0, 0], S[1, 1], S[2, 2], SQRT2 * S[1, 2], SQRT2 * S[0, 2], SQRT2 * S[0, 1]])


def from_sym_coords(s: np.ndarray) -> np.ndarray:
    r = 1.0 / SQRT2
    return np.array([[s[0], r * s[5], r * s[4]],
                     [r * s[5], s[1], r * s[3]],
                     [r * s[4], r * s[3], s[2]]])


def embed(F) -> np.ndarray:
    """``(F)*``: the 3x3 matrix with ``F`` in its 2x2 block and zeros elsewhere."""
    F = np.asarray(F, dtype=float)
    out = np.zeros(F.shape[:-2] + (3, 3))
    out[..., :2, :2] = F
    return out


# ---------------------------------------------------------------------------
# isotropic closed forms


def _sym_sq_and_trace(F):
    F = np.asarray(F, dtype=float)
    S = 0.5 * (F + np.swapaxes(F, -1, -2))
    return np.sum(S * S, axis=(-2, -1)), np.trace(F, axis1=-2, axis2=-1)


def q3_eval(m: Material, F):
    """``2 mu |sym F|^2 + lambda (Tr F)^2`` for 3x3 ``F``."""
    ss, tr = _sym_sq_and_trace(F)
    return 2.0 * m.mu * ss + m.lam * tr**2


def trace_coefficient(m: Material, mode: str = "compressible", k: float = 0.0) -> float:
    """Coefficient ``beta`` in ``Q(F) = 2 mu |sym F|^2 + beta (Tr F)^2`` for 2x2 ``F``."""
    mu, lam = m.mu, m.lam
    if mode == "incompressible":
        return 2.0 * mu
    if mode == "compressible":
        k = 0.0
    elif mode != "penalized":
        raise ValueError(f"unknown relaxation {mode!r}")
    if k < 0:
        raise ValueError(f"penalty k must be nonnegative, got {k}")
    return 2.0 * mu * (lam + k) / (2.0 * mu + lam + k)


def q2_relax(m: Material, F):
    ss, tr = _sym_sq_and_trace(F)
    return 2.0 * m.mu * ss + trace_coefficient(m, "compressible") * tr**2


def q2_incomp(m: Material, F):
    ss, tr = _sym_sq_and_trace(F)
    return 2.0 * m.mu * (ss + tr**2)


def q2_penalized(m: Material, k: float, F):
    ss, tr = _sym_sq_and_trace(F)
    return 2.0 * m.mu * ss + trace_coefficient(m, "penalized", k) * tr**2


def sandwich_gap(m: Material, k: float, F):
    """``Q2^In(F) - Q2^k(F)``, which equals ``4 mu^2 (Tr F)^2 / (2 mu + lambda + k)``."""
    if not k > 0:
        raise ValueError(f"penalty k must be positive, got {k}")
    _, tr = _sym_sq_and_trace(F)
    return 4.0 * m.mu**2 * tr**2 / (2.0 * m.mu + m.lam + k)


# ---------------------------------------------------------------------------
# generic KKT route


Constraint = Literal["none", "trace_free"] | float


@dataclass(frozen=True)
class Extension3:
    F_full: np.ndarray
    c: np.ndarray
    value: float


def _as_form(q: Material | QuadForm3) -> QuadForm3:
    return q if isinstance(q, QuadForm3) else QuadForm3.isotropic(q)


def _kkt_minimize(M: np.ndarray, F2: np.ndarray, trace_free: bool) -> np.ndarray:
    """Minimize ``s^T M s`` subject to the in-plane coordinates of ``s`` matching ``F2``."""
    S2 = 0.5 * (F2 + F2.T)
    fixed_vals = np.array([S2[0, 0], S2[1, 1], SQRT2 * S2[0, 1]])
    C = np.zeros((3, 6))
    for row, col in enumerate(_FIXED):
        C[row, col] = 1.0
    d = fixed_vals
    if trace_free:
        C = np.vstack([C, _TRACE])
        d = np.append(d, 0.0)
    nc = C.shape[0]
    K = np.zeros((6 + nc, 6 + nc))
    K[:6, :6] = 2.0 * M
    K[:6, 6:] = C.T
    K[6:, :6] = C
    rhs = np.concatenate([np.zeros(6), d])
    return np.linalg.solve(K, rhs)[:6]


def optimal_extension(q: Material | QuadForm3, F, constraint: Constraint = "none") -> Extension3:
    """Minimizing third row/column for ``F``.

    ``constraint`` is ``"none"`` (Q2), ``"trace_free"`` (Q2^In) or a nonnegative
    number ``k`` (Q2^k). The returned matrix keeps ``F`` (including any skew
    part) in its 2x2 block; ``c`` satisfies ``sym(F_full - (F)*) = sym(c e3)``.
    """
    form = _as_form(q)
    F2 = np.asarray(F, dtype=float)
    M = form.matrix
    trace_free = False
    if constraint == "trace_free":
        trace_free = True
    elif constraint != "none":
        k = float(constraint)
        if k < 0:
            raise ValueError(f"penalty k must be nonnegative, got {k}")
        M = form.penalized(k).matrix
    s = _kkt_minimize(M, F2, trace_free)
    if trace_free:
        # pin the trace exactly; the KKT solve leaves round-off of order 1e-16 |F|
        s[2] = -(s[0] + s[1])
    S = from_sym_coords(s)
    F_full = embed(F2)
    F_full[:2, 2] = S[:2, 2]
    F_full[2, :2] = S[2, :2]
    F_full[2, 2] = S[2, 2]
    c = np.array([2.0 * S[0, 2], 2.0 * S[1, 2], S[2, 2]])
    return Extension3(F_full, c, float(s @ M @ s))


def oracle_q2(q: Material | QuadForm3, F, constraint: Constraint = "none") -> float:
    """Relaxed value through the KKT route."""
    return optimal_extension(q, F, constraint).value


def schur_q2(q: Material | QuadForm3, k: float = 0.0) -> np.ndarray:
    """3x3 Schur-complement matrix of the unconstrained relaxation in (F11, F22, sqrt2 F12)."""
    M = _as_form(q).penalized(k).matrix
    Mff = M[np.ix_(_FIXED, _FIXED)]
    Mfy = M[np.ix_(_FIXED, _FREE)]
    Myy = M[np.ix_(_FREE, _FREE)]
    return Mff - Mfy @ np.linalg.solve(Myy, Mfy.T)
