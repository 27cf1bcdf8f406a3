"""Almost diagonal matrices: membership, fitted decay and empirical operator norms.

Run: python3 demos/almost_diagonal.py
"""

from besovkit.admat import AdParams, ad_fit_epsilon, ad_membership, empirical_operator_norm, random_ad_matrix
from besovkit.grid import build_dyadic_grid
from besovkit.seq import BesovParams


def main():
    for p, eps in ((2.0, 1.0), (1.0, 0.25)):
        prm = AdParams(0.0, 0.0, p, eps, 1)
        src = BesovParams(0.0, p, p, 1)
        print(f"p={p}, eps={eps}")
        for J in (4, 5, 6, 7):
            g = build_dyadic_grid(1, J)
            M = random_ad_matrix(g, g, prm, seed=1, signs="sign")
            print(f"  J={J}  sup|m|/omega={ad_membership(M, prm).sup_ratio:.3f}"
                  f"  fitted eps={ad_fit_epsilon(M, 0.0, 0.0, p):.3f}"
                  f"  norm estimate={empirical_operator_norm(M, src, src, trials=50):.3f}")
    # The estimates are lower bounds; for small eps p they are still climbing at J=7.


if __name__ == "__main__":
    main()
