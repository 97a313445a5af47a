"""Limited-memory quasi-Newton minimization of the discrete plate energy."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .energy2d import (INCOMPRESSIBLE, EnergyBreakdown, Mode, PlateState, energy,
                       energy_and_gradient_vector)
from .prestrain import PrestrainSpec
from .quadform import Material


@dataclass(frozen=True)
class MinimizeOptions:
    max_iter: int = 2000
    gtol: float = 1e-8
    memory: int = 10
    c1: float = 1e-4
    max_halvings: int = 60
    seed: int | None = None


@dataclass
class SolveReport:
    state: PlateState
    energy: EnergyBreakdown
    grad_max: float
    iterations: int
    line_search_failures: int
    converged: bool
    wall_time: float
    seed: int | None = None
    energy_trace: list[float] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {"energy": {"stretching": self.energy.stretching, "bending": self.energy.bending,
                           "total": self.energy.total, "mode": self.energy.mode},
                "grad_max": self.grad_max, "iterations": self.iterations,
                "line_search_failures": self.line_search_failures,
                "converged": self.converged, "wall_time": self.wall_time, "seed": self.seed}


def _gauge(z: np.ndarray, n: int) -> np.ndarray:
    # translations of w and vertical shifts of v are energy-neutral
    parts = z.reshape(3, n)
    return (parts - parts.mean(axis=1, keepdims=True)).ravel()


def _two_loop(g: np.ndarray, hist: deque) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(hist):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if hist:
        s, y, _ = hist[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    else:
        q /= max(np.linalg.norm(g), 1.0)
    for (s, y, rho), a in zip(hist, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def minimize_energy(p: PrestrainSpec, m: Material, mode: Mode = INCOMPRESSIBLE,
                    init: PlateState | None = None, opts: MinimizeOptions = MinimizeOptions(),
                    grid=None) -> SolveReport:
    """L-BFGS with backtracking (Armijo) line search and mean-value gauge fixing.

    Either ``init`` or ``grid`` must be given; with only a grid the start is zero.
    """
    t0 = time.perf_counter()
    if init is None:
        if grid is None:
            raise ValueError("need an initial state or a grid")
        init = PlateState.zeros(grid)
    g_spec = init.grid
    n = g_spec.size

    def fg(z):
        # overflowing trial steps are rejected by the finiteness test below
        with np.errstate(over="ignore", invalid="ignore"):
            return energy_and_gradient_vector(PlateState.from_vector(g_spec, z), p, m, mode)

    z = _gauge(init.to_vector(), n)
    f, g = fg(z)
    if not np.isfinite(f):
        raise ValueError("initial energy is not finite")
    hist: deque = deque(maxlen=opts.memory)
    trace = [f]
    failures = 0
    converged = False
    it = 0
    while it < opts.max_iter:
        if np.max(np.abs(g)) <= opts.gtol:
            converged = True
            break
        d = _two_loop(g, hist)
        slope = float(np.dot(g, d))
        if slope >= 0:
            hist.clear()
            d = _two_loop(g, hist)
            slope = float(np.dot(g, d))
        t = 1.0
        accepted = False
        for _ in range(opts.max_halvings):
            z_new = _gauge(z + t * d, n)
            f_new, g_new = fg(z_new)
            if np.isfinite(f_new) and f_new <= f + opts.c1 * t * slope:
                accepted = True
                break
            t *= 0.5
        it += 1
        if not accepted:
            failures += 1
            if not hist:
                break  # steepest descent cannot decrease either: stagnation
            hist.clear()
            continue
        s_vec, y_vec = z_new - z, g_new - g
        sy = float(np.dot(s_vec, y_vec))
        if sy > 1e-16 * np.dot(y_vec, y_vec):
            hist.append((s_vec, y_vec, 1.0 / sy))
        z, f, g = z_new, f_new, g_new
        trace.append(f)
    else:
        converged = bool(np.max(np.abs(g)) <= opts.gtol)

    state = PlateState.from_vector(g_spec, z)
    return SolveReport(state=state, energy=energy(state, p, m, mode),
                       grad_max=float(np.max(np.abs(g))), iterations=it,
                       line_search_failures=failures, converged=converged,
                       wall_time=time.perf_counter() - t0, seed=opts.seed, energy_trace=trace)


def gradient_check(p: PrestrainSpec, m: Material, mode: Mode, s: PlateState,
                   n_dirs: int = 20, step: float = 1e-5, seed: int = 0) -> float:
    """Worst relative error of analytic directional derivatives vs central differences."""
    rng = np.random.default_rng(seed)
    z = s.to_vector()
    _, grad = energy_and_gradient_vector(s, p, m, mode)
    worst = 0.0
    for _ in range(n_dirs):
        d = rng.standard_normal(z.size)
        d /= np.linalg.norm(d)
        fp = energy(PlateState.from_vector(s.grid, z + step * d), p, m, mode).total
        fm = energy(PlateState.from_vector(s.grid, z - step * d), p, m, mode).total
        fd = (fp - fm) / (2.0 * step)
        an = float(np.dot(grad, d))
        worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
    return worst
