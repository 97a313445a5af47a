#!/usr/bin/env python3
"""Minimal plate energies across compressibility, penalty and grid size."""

import argparse

from vkplate import COMPRESSIBLE, INCOMPRESSIBLE, Material, MinimizeOptions, Mode, minimize_energy, preset
from vkplate.tensorfield import GridSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--prestrain", default="incompatible-stretch")
    ap.add_argument("--grids", default="9,17")
    args = ap.parse_args()
    p = preset(args.prestrain)
    opts = MinimizeOptions(max_iter=4000)
    for n in map(int, args.grids.split(",")):
        g = GridSpec.unit(n)
        ref = minimize_energy(p, Material(1.0, 0.0), INCOMPRESSIBLE, grid=g, opts=opts)
        print(f"n={n} incompressible E={ref.energy.total:.6e} (it {ref.iterations})")
        for lam in (1.0, 10.0, 1e2, 1e6):
            rep = minimize_energy(p, Material(1.0, lam), COMPRESSIBLE, grid=g, opts=opts)
            print(f"  compressible lambda={lam:<8g} E={rep.energy.total:.6e}")
        for k in (1.0, 1e2, 1e4):
            rep = minimize_energy(p, Material(1.0, 0.0), Mode("penalized", k), grid=g, opts=opts)
            print(f"  penalized    k={k:<13g} E={rep.energy.total:.6e}")


if __name__ == "__main__":
    main()
