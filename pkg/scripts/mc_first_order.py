"""Monte Carlo D at a high level for iid Pareto margins against d^(1/alpha - 1)."""
import argparse
import os

from heavytail_div import aggregate as ag
from heavytail_div import empirical as em
from heavytail_div import models as M
from heavytail_div.tails import ParetoOne


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=20_000_000)
    p.add_argument("--beta", type=float, default=0.999)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    args = p.parse_args()
    for a in (0.5, 1.5, 2.0, 3.0):
        for d in (2, 4):
            m = M.IidRV(ParetoOne(a), d=d)
            K = ag.first_order_limit(m)
            est = em.div_index(m, args.beta, "monte_carlo", n=args.n, seed=args.seed, threads=args.threads)
            z = (est.value - K) / est.se
            exact = f"{em.div_index(m, args.beta).value:.5f}" if d == 2 else "-"
            print(f"alpha {a:3}  d {d}  D {est.value:.5f} +/- {est.se:.5f}  K {K:.5f}  z {z:+6.1f}  exact {exact}")


if __name__ == "__main__":
    main()
