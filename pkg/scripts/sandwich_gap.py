#!/usr/bin/env python3
"""Penalized-to-incompressible gap of the relaxed plate forms against its 1/k bounds."""

import numpy as np

from vkplate.quadform import Material, q2_incomp, q2_penalized


def main():
    rng = np.random.default_rng(0)
    m = Material(1.0, 0.0)
    Fs = [np.eye(2), np.diag([1.0, -1.0]), *rng.standard_normal((200, 2, 2))]
    print(f"{'k':>8}  {'max gap':>10}  {'max k*gap/(4 mu^2 |F|^2)':>26}")
    for k in (1.0, 10.0, 1e2, 1e4, 1e6):
        gaps = np.array([q2_incomp(m, F) - q2_penalized(m, k, F) for F in Fs])
        scaled = k * gaps / np.array([4 * m.mu**2 * np.sum(F * F) for F in Fs])
        print(f"{k:8g}  {gaps.max():10.3e}  {scaled.max():26.4f}")


if __name__ == "__main__":
    main()
