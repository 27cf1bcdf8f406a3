"""Sequence spaces on a dyadic grid: embeddings, the adaptivity scale and n-term rates.

Run: python3 demos/sequence_spaces.py
"""

import math

import numpy as np

from besovkit.grid import build_dyadic_grid
from besovkit.nterm import diagram_export, rate_experiment
from besovkit.seq import (BesovParams, adaptivity, counterexample_sequence, embedding_exists, lp_norm,
                          quasi_norm, random_sequence)


def main():
    grid = build_dyadic_grid(1, 8)
    rng = np.random.default_rng(0)
    a = random_sequence(grid, rng, density=0.2, level_decay=1.0)

    # On the line 1/tau = alpha/d + 1/2 the quasi-norm is a plain l_tau norm.
    for alpha in (0.5, 1.0, 2.0):
        tau = adaptivity(alpha, 1)
        print(f"alpha={alpha}: tau={tau:.4f}  b-norm={quasi_norm(a, BesovParams(alpha, tau, tau, 1)):.6f}"
              f"  l_tau={lp_norm(a, tau):.6f}")

    # An embedding that fails: the norm ratio of the standard witness keeps growing with depth.
    src, dst = BesovParams(0.0, 0.5, 2, 1), BesovParams(0.0, 2, 2, 1)
    print("embeds:", embedding_exists(src, dst))
    for J in (4, 8, 12):
        w = counterexample_sequence("gamma-boundary", src, dst, build_dyadic_grid(1, J))
        print(f"  J={J:2d}  ratio {quasi_norm(w, dst) / quasi_norm(w, src):10.2f}")

    # Best n-term approximation in l_2 of sequences with gamma extra smoothness.
    target = BesovParams(0.0, 2, 2, 1)
    for gamma in (0.5, 1.0, 1.5):
        rep = rate_experiment(BesovParams(gamma, 2, 2, 1), target, J=10, trials=5)
        print(f"gamma={gamma}: fitted slope {rep.slope:.3f}, predicted {rep.predicted:.3f}")

    print(diagram_export([BesovParams(0, 2, 2, 1), BesovParams(1, 2 / 3, 2 / 3, 1),
                          BesovParams(1, 2, math.inf, 1)], 1))


if __name__ == "__main__":
    main()
