"""E*(R) for the scalar Gaussian model with K equal sensors at equal rates.

Prints one column per K along with the centralized cap, and compares K = 1
against a grid search over quantized observations (real-valued model).
"""

import argparse

import numpy as np

from rateex.dm_region import grid_search_dm_exponent
from rateex.model import discretize_scalar_gaussian
from rateex.vg_region import centralized_exponent, optimize_scalar_exponent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigma-x2", type=float, default=1.0)
    ap.add_argument("--sigma2", type=float, default=1.0)
    ap.add_argument("--k-list", default="1,2,4")
    ap.add_argument("--r-max", type=float, default=2.0)
    ap.add_argument("--points", type=int, default=9)
    ap.add_argument("--discrete-check", action="store_true")
    a = ap.parse_args()

    ks = [int(k) for k in a.k_list.split(",")]
    rates = np.linspace(0, a.r_max, a.points)
    print("per-sensor R  " + "  ".join(f"K={k:<8}" for k in ks))
    for R in rates:
        vals = [optimize_scalar_exponent(a.sigma_x2, [a.sigma2] * k, [R] * k).exponent for k in ks]
        print(f"{R:12.3f}  " + "  ".join(f"{v:<10.6f}" for v in vals))
    print("cap          " + "  ".join(f"{centralized_exponent(a.sigma_x2, [a.sigma2] * k):<10.6f}" for k in ks))

    if a.discrete_check:
        inst = discretize_scalar_gaussian(a.sigma_x2, [a.sigma2], list(np.linspace(-2.5, 2.5, 21)), [-0.6, 0.0, 0.6])
        print("\nreal-valued K=1: grid search on quantized data vs closed form")
        for R in (0.1, 0.3, 0.6):
            g = grid_search_dm_exponent(inst, [R], u_sizes=[2], divisions=20).exponent
            e = 0.5 * optimize_scalar_exponent(a.sigma_x2, [a.sigma2], [2 * R]).exponent
            print(f"R={R:.1f}  grid {g:.5f}  closed form {e:.5f}")


if __name__ == "__main__":
    main()
