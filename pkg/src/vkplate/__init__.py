"""Incompressible prestrained von Karman plates: relaxed quadratic forms, the
limiting 2D energy and its minimization, the Euler-Lagrange system, and a 3D
verifier for incompressible recovery deformations."""

__version__ = "0.1.0"

from .energy2d import COMPRESSIBLE, INCOMPRESSIBLE, EnergyBreakdown, Mode, PlateState, energy
from .minimize import MinimizeOptions, SolveReport, minimize_energy
from .prestrain import PrestrainSpec, preset
from .quadform import Material
from .tensorfield import GridSpec

__all__ = [
    "COMPRESSIBLE", "INCOMPRESSIBLE", "EnergyBreakdown", "GridSpec", "Material", "MinimizeOptions",
    "Mode", "PlateState", "PrestrainSpec", "SolveReport", "energy", "minimize_energy", "preset",
]
