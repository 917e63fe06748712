"""Second-order aggregation constants for the catalogued bivariate models."""
import argparse

from heavytail_div import aggregate as ag
from heavytail_div import models as M

MODELS = [
    M.SurvClaytonLomax(2.0, 0.5),
    M.SurvClaytonLomax(1.5, 2.0),
    M.SurvClaytonParetoOne(2.0),
    M.SurvClaytonParetoOne(1.0),
    M.HrvMixture(2.0),
    M.HallWelshIid(2.0, -1.0),
    M.SurvClaytonLomax(1.0, 2.0),
]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--convention", default="paper", choices=["paper", "prelimit"])
    args = p.parse_args()
    print(f"{'model':<40} {'K_d':>10} {'c_d':>12} {'c_1':>12} {'C':>12}  degenerate")
    for m in MODELS:
        c = ag.aggregation_constants(m, convention=args.convention)
        c1 = "-" if c.c_1 is None else f"{c.c_1:12.6f}"
        print(f"{m!r:<40} {c.K_d:10.6f} {c.c_d:12.6f} {c1:>12} {c.C:12.6f}  {c.degenerate_rate}")


if __name__ == "__main__":
    main()
