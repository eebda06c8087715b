"""Exact finite-n exponent of a fixed symbolwise encoder, with an optional Monte Carlo cross-check.

Default: BSC(0.1) source pair, identity encoder, eps = 0.2, n = 1..8.
"""

import argparse

from rateex.model import bsc_instance
from rateex.qbt_sim import EncoderSpec, empirical_exponent_curve, qbt_simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--crossover", type=float, default=0.1)
    ap.add_argument("--eps", type=float, default=0.2)
    ap.add_argument("--n-max", type=int, default=8)
    ap.add_argument("--trials", type=int, default=0, help="Monte Carlo trials per n (0 skips)")
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    inst = bsc_instance(a.crossover)
    enc = EncoderSpec.identity(inst)
    pts = empirical_exponent_curve(inst, enc, a.eps, range(1, a.n_max + 1))
    print(f"single-letter ceiling I(X;Y) = {pts[0].ceiling:.6f} nats")
    print(f"{'n':>3} {'beta':>12} {'-(1/n) ln beta':>15} {'envelope':>10} {'MC beta':>18}")
    for p in pts:
        mc = ""
        if a.trials:
            r = qbt_simulate(inst, enc, p.n, a.trials, eps=a.eps, seed=a.seed, detector="np")
            mc = f"{r.beta_hat:.5f}+-{r.beta_radius:.5f}"
        print(f"{p.n:>3} {p.beta:>12.6g} {p.exponent_exact:>15.6f} {p.upper_envelope:>10.4f} {mc:>18}")


if __name__ == "__main__":
    main()
