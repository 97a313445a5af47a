#!/usr/bin/env python3
"""Thickness refinement of the incompressible recovery deformation for several recipes."""

import argparse
from fractions import Fraction

import numpy as np

from vkplate.recovery3d import RECIPES, convergence_study, recipe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--recipes", default="uniform-bend,saddle-bend,bump")
    ap.add_argument("--h", default="1/8,1/16,1/32,1/64")
    ap.add_argument("--n", type=int, default=17)
    ap.add_argument("--n3", type=int, default=33)
    args = ap.parse_args()
    hs = [float(Fraction(x)) for x in args.h.split(",")]
    for name in args.recipes.split(","):
        if name not in RECIPES:
            ap.error(f"unknown recipe {name!r}; known: {', '.join(RECIPES)}")
        r = recipe(name)
        tab = convergence_study(r, hs, r.p.domain.grid(args.n), n3=args.n3)
        print(f"\n{name}: limit energy {tab.limit:.6g}")
        print("  " + "  ".join(f"{c:>11}" for c in tab.COLUMNS))
        for rec in tab.as_records():
            print("  " + "  ".join(f"{rec[c]:11.4g}" for c in tab.COLUMNS))
        print("  slopes: " + ", ".join(f"{k} {v:.2f}" if np.isfinite(v) else f"{k} n/a"
                                      for k, v in tab.slopes.items()))


if __name__ == "__main__":
    main()
