"""Predict D at an extreme level from two moderate anchors and compare with the exact oracle."""
from heavytail_div import aggregate as ag
from heavytail_div import empirical as em
from heavytail_div import models as M

model = M.SurvClaytonParetoOne(2.0)
roa = ag.aggregation_constants(model).rho_over_alpha
for lo, hi in [(0.9, 0.95), (0.99, 0.995), (0.995, 0.999)]:
    d_lo, d_hi = em.div_index(model, lo).value, em.div_index(model, hi).value
    for p in (0.999, 0.9999, 0.99999):
        pred = ag.extrapolate_div_index(d_lo, d_hi, lo, hi, roa, p)
        exact = em.div_index(model, p).value
        print(f"anchors ({lo}, {hi}) -> {p}: predicted {pred:.6f}  exact {exact:.6f}  error {pred - exact:+.2e}")
