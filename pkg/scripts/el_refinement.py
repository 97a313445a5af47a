#!/usr/bin/env python3
"""Grid refinement of the Euler-Lagrange solver against a manufactured solution."""

import argparse

import numpy as np

from vkplate.elpde import clamped_bubble, manufactured_sources, sample_expr, solve_el
from vkplate.prestrain import preset
from vkplate.quadform import Material
from vkplate.tensorfield import GridSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--prestrain", default="incompatible-stretch")
    ap.add_argument("--grids", default="17,33,65,129")
    args = ap.parse_args()
    p, m = preset(args.prestrain), Material(1.0, 0.0)
    vs = ps = clamped_bubble(16)
    prev = None
    for n in map(int, args.grids.split(",")):
        g = GridSpec.unit(n)
        sm, sb = manufactured_sources(vs, ps, p, m, g)
        sol = solve_el(p, m, g, membrane_source=sm, bending_source=sb)
        err = max(np.abs(sol.v.values - sample_expr(vs, g).values).max(),
                  np.abs(sol.phi.values - sample_expr(ps, g).values).max())
        ratio = f"{prev / err:6.3f}" if prev else "     -"
        print(f"n={n:4d}  picard={sol.iterations:3d}  error={err:.3e}  ratio={ratio}")
        prev = err


if __name__ == "__main__":
    main()
