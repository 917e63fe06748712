import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavytail_div import aggregate as ag
from heavytail_div import empirical as em
from heavytail_div import models as M
from heavytail_div.errors import CapabilityError, DomainError, ParameterError, SampleSizeError
from heavytail_div.tails import ParetoOne

LOMAX = M.SurvClaytonLomax(2.0, 0.5)
PARETO = M.SurvClaytonParetoOne(2.0)
HRV = M.HrvMixture(2.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=300), st.floats(0.001, 0.999))
@settings(max_examples=150, deadline=None)
def test_order_statistic_definition(xs, beta):
    q = em.empirical_var(xs, beta, min_tail_count=0)
    nb = len(xs) * beta
    # left-continuous inverse: smallest x with F_n(x) >= beta; n beta within rounding of an integer counts as it
    k = round(nb) if abs(nb - round(nb)) < 1e-9 * max(1.0, nb) else math.ceil(nb)
    assert q.index == max(k, 1)
    assert q.estimate == sorted(xs)[q.index - 1]
    assert q.ci_lower <= q.estimate <= q.ci_upper


def test_order_statistic_exact_grid():
    xs = np.arange(1.0, 101.0)
    assert em.empirical_var(xs, 0.95, min_tail_count=0).estimate == 95.0
    assert em.empirical_var(xs, 0.951, min_tail_count=0).estimate == 96.0
    # n beta lands on an integer up to rounding
    assert em.empirical_var(np.arange(1.0, 11.0), 0.7, min_tail_count=0).estimate == 7.0


def test_empirical_var_guards():
    with pytest.raises(SampleSizeError) as exc:
        em.empirical_var(np.ones(100), 0.999)
    assert exc.value.required_n == 10_000
    with pytest.raises(DomainError):
        em.empirical_var(np.ones(100), 1.0)
    with pytest.raises(SampleSizeError):
        em.empirical_var([], 0.5)


def test_ci_calibration():
    m = ParetoOne(2.0)
    beta, n = 0.99, 20_000
    truth = m.quantile(1 - beta)
    covered = 0
    for seed in range(100):
        xs = M.sample(M.IidRV(m, d=1), n, seed=seed).values[:, 0]
        q = em.empirical_var(xs, beta)
        covered += abs(q.estimate - truth) <= q.ci_half_width
    assert covered >= 93


def test_exact_div_index_examples():
    d = em.div_index(PARETO, 0.999)
    assert d.mode == "exact" and d.se is None
    assert abs(d.value - math.sqrt(3) / 2) < 0.05
    # d = 1 is trivially 1
    assert em.div_index(M.IidRV(ParetoOne(2.0), d=1), 0.99).value == 1.0


@pytest.mark.xfail(strict=True, reason="finite-level convolution term keeps D_0.999 at 0.7399; see ledger")
def test_iid_pareto_div_index_near_limit():
    assert abs(em.div_index(M.IidRV(ParetoOne(2.0)), 0.999).value - 2**-0.5) <= 1e-2


@pytest.mark.slow
@pytest.mark.parametrize("model", [PARETO, M.IidRV(ParetoOne(2.0)), HRV], ids=repr)
@pytest.mark.parametrize("beta", [0.99, 0.999])
def test_exact_vs_monte_carlo(model, beta):
    exact = em.div_index(model, beta).value
    mc = em.div_index(model, beta, "monte_carlo", n=10_000_000, seed=17, threads=4)
    assert mc.ci_lower <= mc.value <= mc.ci_upper
    assert abs(mc.value - exact) <= 4 * mc.se


def test_monte_carlo_thread_invariance():
    a = em.div_index(LOMAX, 0.99, "monte_carlo", n=300_000, seed=2, threads=1)
    b = em.div_index(LOMAX, 0.99, "monte_carlo", n=300_000, seed=2, threads=4)
    assert a == b


def test_monte_carlo_floor():
    with pytest.raises(SampleSizeError) as exc:
        em.div_index(PARETO, 0.999, "monte_carlo", n=10_000, seed=1)
    assert exc.value.required_n == 50_000
    with pytest.raises(ParameterError):
        em.div_index(PARETO, 0.99, "monte_carlo")
    with pytest.raises(CapabilityError):
        em.div_index(M.AxisMixture(), 0.99)


FIRST_ORDER_OK = [LOMAX, PARETO, M.SurvClaytonParetoOne(1.0), M.HallWelshIid(2.0, -0.5), M.HallWelshIid(1.0, -0.5)]


def _first_order_ok(model):
    c = ag.aggregation_constants(model)
    coef = abs(c.C * c.K_d / (c.alpha * c.rho))
    for g in (1e-6, 1e-7, 1e-8):
        gap = abs(em.div_index_at_tail(model, g) - c.K_d)
        assert gap <= 2 * coef * abs(c.A(c.b(1 / g))), (g, gap)


@pytest.mark.parametrize("model", FIRST_ORDER_OK, ids=repr)
def test_first_order_convergence(model):
    _first_order_ok(model)


@pytest.mark.xfail(strict=True, reason="gap/A(b) settles at about 3x the rate coefficient; see ledger")
def test_first_order_convergence_hrv():
    _first_order_ok(HRV)


@pytest.mark.xfail(strict=True, reason="iid convolution term of the same order as A; see ledger")
def test_first_order_convergence_hall_welsh_unit_rho():
    _first_order_ok(M.HallWelshIid(2.0, -1.0))


def test_convergence_table_display():
    tab = em.convergence_table(PARETO, [1e-4, 1e-6, 1e-8], 4.0, form="display")
    assert tab.theory == pytest.approx(4 / 3)
    assert tab.abs_error <= 1e-2
    assert tab.last_error <= 1e-2
    s = tab.summary()
    assert s["pass"] and s["abs_error"] == tab.abs_error
    lines = tab.to_csv().splitlines()
    assert lines[0] == "gamma,x,deviation,theory,source,se"
    assert len(lines) == 4
    json.loads(tab.to_json())


def test_convergence_table_x_one_theory_zero():
    tab = em.convergence_table(PARETO, [1e-4, 1e-6], 1.0)
    assert all(r.theory == 0 for r in tab.rows)


def test_convergence_table_monte_carlo_floor():
    with pytest.raises(SampleSizeError):
        em.convergence_table(PARETO, [1e-3, 1e-6], 1.0, "monte_carlo", n=100_000, seed=1)
    tab = em.convergence_table(PARETO, [1e-2, 5e-3], 1.0, "monte_carlo", n=200_000, seed=1)
    assert all(r.source == "monte-carlo" and r.se > 0 for r in tab.rows)


def test_convergence_table_guards():
    with pytest.raises(DomainError):
        em.convergence_table(PARETO, [1e-6, 1e-4], 1.0)
    with pytest.raises(DomainError):
        em.convergence_table(PARETO, [1e-4], 1.0)


def test_rate_fit_clayton_lomax():
    a = 2.0
    target = (a + 1) ** (1 / a) - (a + 2) / (a + 1)
    fit = em.fit_rate_coefficient(LOMAX, 1e-8, np.linspace(1, 8, 8))
    assert fit.slope == pytest.approx(target, abs=1e-2)
    assert fit.theory_slope == pytest.approx(target, abs=1e-3)


@pytest.mark.parametrize("model", [LOMAX, PARETO], ids=repr)
def test_assumption1(model):
    rep = em.verify_assumptions(model)
    assert rep.kind == "assumption1"
    assert rep.decreasing
    assert abs(rep.slope_a + 1) <= 0.2 and abs(rep.slope_b + 1) <= 0.2
    assert rep.passed()


def test_assumption1_cond4_ratio():
    rep = em.verify_assumption1(PARETO, (1e4, 1e6))
    assert rep.rows[1].sup_a / rep.rows[0].sup_a == pytest.approx(1e-2, rel=0.05)


def test_density_gap_against_direct_ratio():
    # f(t x) / (t^-2 F1(t)) for the Pareto-Clayton pair: a(a+1) (t x1 + t x2 - 1)^(-a-2) t^(a+2)
    a, t = 2.0, 50.0
    x1, x2 = 0.6, 0.8
    direct = a * (a + 1) * (t * x1 + t * x2 - 1) ** (-a - 2) * t ** (a + 2)
    lam, gap = em.density_gap(PARETO, t, x1, x2)
    assert lam + gap == pytest.approx(direct, rel=1e-12)


def test_assumption2_hrv():
    rep = em.verify_assumptions(HRV)
    assert rep.kind == "assumption2"
    assert rep.passed()
    assert rep.extra["cond7_at_2"][1e8] == pytest.approx(-3 / 16, abs=1e-4)


def test_assumption_capabilities():
    with pytest.raises(CapabilityError):
        em.verify_assumptions(M.AxisMixture())
    with pytest.raises(CapabilityError):
        em.verify_assumption1(HRV)
    with pytest.raises(CapabilityError):
        em.verify_assumption2(PARETO)


def test_sphere_grid():
    g = em.sphere_grid()
    assert g.shape == (181, 2)
    np.testing.assert_allclose(np.hypot(g[:, 0], g[:, 1]), 1.0, rtol=1e-15)
    assert g.min() > 0
