"""Normalized deviation of D at the tail level gamma against its second-order limit."""
import argparse

import numpy as np

from heavytail_div import empirical as em
from heavytail_div import models as M


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--model", default="surv_clayton_pareto1")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--form", default="display", choices=["raw", "display"])
    args = p.parse_args()
    spec = {"name": args.model, "alpha": args.alpha}
    if args.theta is not None:
        spec["theta"] = args.theta
    model = M.model_from_dict(spec)
    gammas = [1e-4, 1e-5, 1e-6, 1e-7, 1e-8]
    for x in (0.5, 2.0, 4.0, 9.0):
        tab = em.convergence_table(model, gammas, x, form=args.form)
        print(f"x = {x}  theory {tab.theory:.6f}")
        for r in tab.rows:
            print(f"  gamma {r.gamma:8.0e}  deviation {r.deviation:12.6f}")
    fit = em.fit_rate_coefficient(model, 1e-8, np.linspace(1, 8, 8), form=args.form)
    print(f"fitted slope {fit.slope:.6f}  intercept {fit.intercept:.6f}  theory slope {fit.theory_slope:.6f}")


if __name__ == "__main__":
    main()
