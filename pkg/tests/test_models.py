import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from heavytail_div import models as M
from heavytail_div.errors import CapabilityError, DomainError, ParameterError, ShapeError
from heavytail_div.tails import MixtureA, MixtureB, ParetoLomax, ParetoOne

VARIANTS = [
    M.SurvClaytonLomax(2.0, 0.5),
    M.SurvClaytonLomax(1.5, 2.0),
    M.SurvClaytonParetoOne(2.0),
    M.HrvMixture(2.0),
    M.IidRV(ParetoOne(1.5)),
    M.IidRV(MixtureA(2.0)),
    M.HallWelshIid(2.0, -1.0),
]
GRID = [(1.5, 1.5), (2.0, 3.0), (3.0, 1.2), (4.0, 4.0), (1.1, 6.0)]


@pytest.mark.parametrize("model", VARIANTS + [M.AxisMixture()], ids=lambda m: repr(m))
def test_margin_consistency(model):
    xs = np.array([0.5, 1.0, 2.0, 7.5, 40.0]) + model.floor
    for i in range(model.d):
        pts = np.full((xs.size, model.d), model.floor)
        pts[:, i] = xs
        np.testing.assert_allclose(M.joint_survival(model, pts), model.margin(i).survival(xs), rtol=1e-12)


def test_clayton_pareto_joint_closed_form():
    # survival Clayton with theta = 1/a on Pareto(a) margins: (x1 + x2 - 1)^-a
    m = M.SurvClaytonParetoOne(2.0)
    assert M.joint_survival(m, (2.0, 3.0)) == pytest.approx(4.0**-2, rel=1e-14)
    assert M.joint_survival(m, (2.0, 0.3)) == pytest.approx(0.25, rel=1e-14)


def test_hrv_joint_values():
    # construction: w.p. 1/2 a Pareto(2a) point on the diagonal, else a Pareto(a) point on an axis
    m = M.HrvMixture(2.0)
    assert M.joint_survival(m, (2.0, 2.0)) == pytest.approx(0.5 * 2.0**-4, rel=1e-15)
    p1 = 0.25 * 2.0**-2 + 0.5 * 2.0**-4
    assert M.box_complement_prob(m, (2.0, 2.0)) == pytest.approx(2 * p1 - 1 / 32, rel=1e-15)
    assert M.box_complement_prob(m, (2.0, 2.0)) == pytest.approx(0.15625, rel=1e-15)


def test_box_complement_independent():
    m = M.IidRV(ParetoOne(2.0))
    p = 1 - (1 - 2.0**-2) * (1 - 3.0**-2)
    assert M.box_complement_prob(m, (2.0, 3.0)) == pytest.approx(p, rel=1e-14)
    with pytest.raises(ShapeError):
        M.joint_survival(m, (1.0, 2.0, 3.0))


def _binom_ok(freq, p, n, k=4.0):
    return abs(freq - p) <= k * math.sqrt(max(p * (1 - p), 1e-300) / n) + 1e-12


@pytest.mark.parametrize("model", VARIANTS, ids=lambda m: repr(m))
def test_sampler_matches_joint_survival(model):
    n = 200_000 if isinstance(model, M.HallWelshIid) else 1_000_000
    xs = M.sample(model, n, seed=11).values
    for g in GRID:
        p = M.joint_survival(model, g)
        freq = np.mean((xs[:, 0] > g[0]) & (xs[:, 1] > g[1]))
        assert _binom_ok(freq, p, n), (g, freq, p)


@pytest.mark.parametrize("model", [
    M.SurvClaytonLomax(2.0, 0.5), M.SurvClaytonLomax(2.0, 1.5), M.SurvClaytonParetoOne(2.0),
    M.HrvMixture(2.0), M.IidRV(ParetoOne(2.0)), M.IidRV(MixtureB(1.0)),
], ids=repr)
def test_sum_tail_matches_monte_carlo(model):
    n = 1_000_000
    s = M.sample(model, n, seed=5).sums()
    for q in (0.90, 0.99, 0.999):
        level = float(np.quantile(s, q))
        p = M.sum_tail_exact(model, level)
        assert _binom_ok(np.mean(s > level), p, n)


def test_lomax_unit_sum_tail_against_2d_quadrature():
    # alpha * theta = 1: joint survival (1 + x1 + x2)^-a, density a(a+1)(1 + x1 + x2)^(-a-2)
    a = 2.0
    m = M.SurvClaytonLomax(a, 1 / a)
    dens = lambda x2, x1: a * (a + 1) * (1 + x1 + x2) ** (-a - 2)
    for s in (0.5, 3.0, 40.0):
        inside, _ = integrate.dblquad(dens, 0, s, 0, lambda x1: s - x1, epsabs=0, epsrel=1e-12)
        assert M.sum_tail_exact(m, s) == pytest.approx(1 - inside, rel=1e-8, abs=1e-14)
        assert M.sum_tail_exact(m, s) == pytest.approx((a + 1) * (1 + s) ** -a - a * (1 + s) ** (-a - 1), rel=1e-14)


def test_general_theta_sum_tail_against_2d_quadrature():
    a, th = 2.0, 1.5
    m = M.SurvClaytonLomax(a, th)
    u = lambda x: (1 + x) ** (-a)

    def dens(x2, x1):
        u1, u2 = u(x1), u(x2)
        c = (1 + th) * (u1 * u2) ** (-th - 1) * (u1**-th + u2**-th - 1) ** (-1 / th - 2)
        return c * a * (1 + x1) ** (-a - 1) * a * (1 + x2) ** (-a - 1)

    s = 5.0
    inside, _ = integrate.dblquad(dens, 0, s, 0, lambda x1: s - x1, epsabs=0, epsrel=1e-11)
    assert M.sum_tail_method(m) == "quadrature"
    assert M.sum_tail_exact(m, s) == pytest.approx(1 - inside, rel=1e-8)


def test_iid_sum_tail_convolution():
    # Pareto(1) pair: P(X1 + X2 > s) = 2/s + 2 log(s - 1)/s^2 for s >= 2
    m = M.IidRV(ParetoOne(1.0))
    for s in (2.5, 10.0, 1e4):
        assert M.sum_tail_exact(m, s) == pytest.approx(2 / s + 2 * math.log(s - 1) / s**2, rel=1e-10)


@pytest.mark.parametrize("model", [M.SurvClaytonParetoOne(2.0), M.HrvMixture(2.0), M.SurvClaytonLomax(2.0, 0.5)],
                         ids=repr)
def test_sum_quantile_inverts_tail(model):
    for p in (0.3, 1e-2, 1e-6, 1e-10):
        s = M.sum_quantile_exact(model, p)
        assert M.sum_tail_exact(model, s) == pytest.approx(p, rel=1e-9)


def test_sum_tail_capability():
    with pytest.raises(CapabilityError):
        M.sum_tail_exact(M.IidRV(ParetoOne(2.0), d=4), 10.0)
    with pytest.raises(DomainError):
        M.sum_quantile_exact(M.HrvMixture(2.0), 0.0)


@pytest.mark.parametrize("threads", [1, 3, 8])
def test_sampler_deterministic_across_threads(threads):
    model = M.SurvClaytonLomax(2.0, 0.5)
    n = 3 * M.CHUNK_ROWS + 17
    ref = M.sample(model, n, seed=99, threads=1).values
    got = M.sample(model, n, seed=99, threads=threads).values
    assert np.array_equal(ref, got)
    assert not got.flags.writeable


def test_sampler_seed_sensitive():
    model = M.HrvMixture(1.0)
    a = M.sample(model, 1000, seed=1).values
    assert np.array_equal(a, M.sample(model, 1000, seed=1).values)
    assert not np.array_equal(a, M.sample(model, 1000, seed=2).values)


def test_hrv_margin_atom_at_zero():
    m = M.HrvMixture(2.0).margin()
    assert m.survival(0.5) == 0.75
    assert m.quantile(0.9) == 0.0
    assert m.quantile(0.1) == MixtureB(2.0).quantile(0.1)
    xs = M.sample(M.HrvMixture(2.0), 200_000, seed=3).values[:, 0]
    assert _binom_ok(np.mean(xs == 0), 0.25, xs.size)


def test_thread_env(monkeypatch):
    monkeypatch.setenv("HEAVYTAIL_DIV_THREADS", "4")
    assert M.resolve_threads() == 4
    assert M.resolve_threads(2) == 2
    monkeypatch.delenv("HEAVYTAIL_DIV_THREADS")
    assert M.resolve_threads() == 1


def test_sample_validation():
    model = M.IidRV(ParetoOne(2.0))
    with pytest.raises(DomainError):
        M.sample(model, 0, seed=1)
    with pytest.raises(ParameterError):
        M.sample(model, 10, seed=-1)
    with pytest.raises(ParameterError):
        M.sample(model, 2.5, seed=1)


def test_csv_round_trip(tmp_path):
    s = M.sample(M.SurvClaytonParetoOne(2.0), 500, seed=7)
    s.write(tmp_path / "a.csv", tmp_path / "a.json")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "x1,x2"
    back = np.loadtxt(tmp_path / "a.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back, s.values)
    meta = json.loads((tmp_path / "a.json").read_text())
    assert meta["seed"] == 7 and meta["n"] == 500


def test_identical_margins():
    assert not M.identical_margins(M.AxisMixture())
    assert all(M.identical_margins(m) for m in VARIANTS)


def test_model_validation():
    with pytest.raises(ParameterError):
        M.SurvClaytonLomax(2.0, 0.0)
    with pytest.raises(ParameterError):
        M.HallWelshIid(2.0, 0.5)
    with pytest.raises(ParameterError):
        M.IidRV(ParetoOne(2.0), d=0)


model_dicts = st.one_of(
    st.builds(lambda a, t: {"name": "surv_clayton_lomax", "alpha": a, "theta": t},
              st.floats(0.2, 5), st.floats(0.1, 5)),
    st.builds(lambda a: {"name": "surv_clayton_pareto1", "alpha": a}, st.floats(0.2, 5)),
    st.builds(lambda a: {"name": "hrv_mixture", "alpha": a}, st.floats(0.2, 5)),
    st.builds(lambda a, r: {"name": "hall_welsh", "alpha": a, "rho": r}, st.floats(0.2, 5), st.floats(-5, -0.1)),
    st.builds(lambda f, a, d: {"name": "iid", "margin": f, "alpha": a, "d": d},
              st.sampled_from(["pareto_lomax", "pareto1", "mixture_a", "mixture_b"]), st.floats(0.2, 5),
              st.integers(1, 6)),
)


@given(model_dicts)
@settings(max_examples=80, deadline=None)
def test_model_dict_round_trip(spec):
    model = M.model_from_dict(spec)
    assert M.model_from_dict(M.model_to_dict(model)) == model


@pytest.mark.parametrize("spec", [
    {"name": "nope"},
    {"name": "hrv_mixture"},
    {"name": "hrv_mixture", "alpha": 2, "theta": 1},
    {"name": "hrv_mixture", "alpha": "2"},
    {"name": "iid", "margin": "cauchy", "alpha": 1},
    {"name": "iid", "margin": "pareto1", "alpha": 1, "d": 2.5},
    {"alpha": 1},
])
def test_model_dict_rejects(spec):
    with pytest.raises(ParameterError):
        M.model_from_dict(spec)


def test_lomax_margin_is_lomax():
    assert M.SurvClaytonLomax(2.0, 1.0).margin() == ParetoLomax(2.0)
