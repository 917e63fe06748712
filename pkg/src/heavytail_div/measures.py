"""Limit measures, second-order signed measures and their evaluation.

A measure is one of

* ``Density``      absolutely continuous on the open quadrant (d = 2)
* ``AxisAtomic``   mass on the coordinate axes, tail ``w_i z^-index`` on axis i
* ``DiagonalAtomic`` mass on the diagonal ``z_1 = ... = z_d = v``, tail ``w v^-index``
* ``Analytic``     closed forms on the two region types
* ``Split``        a signed combination ``sum(positive) - sum(negative)``

Regions are ``GammaD(d, k)`` (``{sum z > k}``, or ``{z_1 > k}`` when ``d = 1``)
and ``BoxComplement(x)`` (``[0, x]^c``).

Density integrals use nested adaptive Gauss-Kronrod (``scipy.integrate.quad``)
in the coordinates ``u = z_1``, ``v = z_2 / z_1``: the outer variable is
``w = log v`` split into fixed panels, the inner one ``u = u_min(v) e^s``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import integrate

from .errors import (
    AccuracyError,
    CapabilityError,
    DegenerateEstimateWarning,
    DomainError,
    ParameterError,
    RateUnavailableError,
    ShapeError,
)
from .models import (
    AxisMixture,
    HallWelshIid,
    HrvMixture,
    IidRV,
    ModelSpec,
    SurvClaytonLomax,
    SurvClaytonParetoOne,
    box_complement_prob,
    sample,
)

# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class GammaD:
    d: int
    k: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError("region dimension must be a positive integer")
        if not (np.isfinite(self.k) and self.k > 0):
            raise DomainError("region scale k must be finite and > 0")

    def scaled(self, c: float) -> "GammaD":
        return GammaD(self.d, self.k * c)

    def contains(self, z: np.ndarray) -> np.ndarray:
        if self.d == 1:
            return z[..., 0] > self.k
        return z.sum(axis=-1) > self.k


@dataclass(frozen=True)
class BoxComplement:
    x: Tuple[float, ...]

    def __post_init__(self):
        arr = np.asarray(self.x, dtype=float)
        if arr.ndim != 1 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise DomainError("box corner must be a finite vector with positive entries")
        object.__setattr__(self, "x", tuple(float(v) for v in arr))

    def scaled(self, c: float) -> "BoxComplement":
        return BoxComplement(tuple(c * v for v in self.x))

    def contains(self, z: np.ndarray) -> np.ndarray:
        return np.any(z > np.asarray(self.x), axis=-1)


Region = Union[GammaD, BoxComplement]


# ---------------------------------------------------------------------------
# measure representations


@dataclass(frozen=True)
class Density:
    """Measure with (possibly signed) density ``f(z1, z2)`` on the open quadrant."""

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    label: str = ""
    breakpoints: Tuple[float, ...] = ()


@dataclass(frozen=True)
class AxisAtomic:
    weights: Tuple[float, ...]
    index: float


@dataclass(frozen=True)
class DiagonalAtomic:
    weight: float
    index: float


@dataclass(frozen=True)
class Analytic:
    gamma: Callable[[int, float], float]
    box: Optional[Callable[[Tuple[float, ...]], float]] = None
    label: str = ""


@dataclass(frozen=True)
class Split:
    positive: Tuple = ()
    negative: Tuple = ()


LimitMeasure = Union[Density, AxisAtomic, Analytic]
SignedMeasure = Union[Density, Split, Analytic]


@dataclass(frozen=True)
class Evaluation:
    value: float
    error_bound: float
    method: str  # closed-form | quadrature


_PANELS = tuple(range(-40, 41, 5))


def _inner(f, v, u_min, rel):
    def g(s):
        if s > 300:
            return 0.0
        u = u_min * math.exp(s)
        return float(f(u, u * v)) * u * u

    val, err = integrate.quad(g, 0.0, np.inf, epsabs=0.0, epsrel=rel, limit=200)
    return val, err


def _density_integral(f, u_min: Callable[[float], float], breaks=(), rel=1e-8) -> Evaluation:
    """Integral of ``f`` over ``{u > u_min(v)}`` in the ratio coordinates."""
    inner_err = [0.0]
    inner_abs = [0.0]

    def outer(w):
        if abs(w) > 300:
            return 0.0
        v = math.exp(w)
        val, err = _inner(f, v, u_min(v), rel * 1e-2)
        inner_err[0] += err * v
        inner_abs[0] += abs(val) * v
        return val * v

    cuts = sorted(set(_PANELS) | {float(b) for b in breaks if -40 < b < 40})
    edges = [-np.inf] + cuts + [np.inf]
    total, err_total, abs_total = 0.0, 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(outer, a, b, epsabs=0.0, epsrel=rel * 1e-2, limit=200)
            except integrate.IntegrationWarning:
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(outer, a, b, epsabs=0.0, epsrel=rel * 1e-2, limit=400)
                err = max(err, abs(val))
        total += val
        err_total += err
        abs_total += abs(val)
    # inner errors were accumulated per evaluation; scale them to the panel widths by
    # comparing against the accumulated magnitudes
    inner_rel = inner_err[0] / inner_abs[0] if inner_abs[0] > 0 else 0.0
    bound = err_total + inner_rel * abs_total
    if bound > rel * max(abs(total), 1e-300) and bound > 1e-14 * max(abs_total, 1.0):
        raise AccuracyError("density quadrature did not reach tolerance", total, bound)
    return Evaluation(total, bound, "quadrature")


def _eval_density(m: Density, region: Region, rel: float) -> Evaluation:
    if isinstance(region, GammaD):
        if region.d == 1:
            k = region.k
            return _density_integral(m.f, lambda v: k, m.breakpoints, rel)
        if region.d != 2:
            raise CapabilityError("density quadrature is implemented for d = 2 only; use mc_measure_eval")
        k = region.k
        return _density_integral(m.f, lambda v: k / (1.0 + v), m.breakpoints, rel)
    if len(region.x) != 2:
        raise ShapeError("density measures live in dimension 2")
    x1, x2 = region.x
    brk = tuple(m.breakpoints) + (math.log(x2 / x1),)
    return _density_integral(m.f, lambda v: min(x1, x2 / v), brk, rel)


def _eval_axis(m: AxisAtomic, region: Region) -> float:
    w = np.asarray(m.weights, dtype=float)
    if isinstance(region, GammaD):
        if region.d == 1:
            return float(w[0] * region.k ** (-m.index))
        if region.d != len(w):
            raise ShapeError("region dimension differs from the measure's")
        return float(w.sum() * region.k ** (-m.index))
    x = np.asarray(region.x)
    if len(x) != len(w):
        raise ShapeError("box dimension differs from the measure's")
    return float(np.sum(w * x ** (-m.index)))


def _eval_diagonal(m: DiagonalAtomic, region: Region, dim: Optional[int]) -> float:
    if isinstance(region, GammaD):
        thresh = region.k if region.d == 1 else region.k / region.d
        return float(m.weight * thresh ** (-m.index))
    return float(m.weight * min(region.x) ** (-m.index))


def _evaluate(m, region: Region, rel: float) -> Evaluation:
    if isinstance(m, Density):
        return _eval_density(m, region, rel)
    if isinstance(m, AxisAtomic):
        return Evaluation(_eval_axis(m, region), 0.0, "closed-form")
    if isinstance(m, DiagonalAtomic):
        return Evaluation(_eval_diagonal(m, region, None), 0.0, "closed-form")
    if isinstance(m, Analytic):
        if isinstance(region, GammaD):
            return Evaluation(float(m.gamma(region.d, region.k)), 0.0, "closed-form")
        if m.box is None:
            raise CapabilityError("no closed form on box complements for this measure")
        return Evaluation(float(m.box(region.x)), 0.0, "closed-form")
    if isinstance(m, Split):
        parts = [(1, p) for p in m.positive] + [(-1, p) for p in m.negative]
        val, err, methods = 0.0, 0.0, set()
        for sgn, p in parts:
            e = _evaluate(p, region, rel)
            val += sgn * e.value
            err += e.error_bound
            methods.add(e.method)
        return Evaluation(val, err, "quadrature" if "quadrature" in methods else "closed-form")
    raise CapabilityError(f"unknown measure representation {type(m).__name__}")


def nu_eval(repr: LimitMeasure, region: Region, rel: float = 1e-8, *, detail: bool = False):
    """Limit-measure mass of ``region``; with ``detail`` returns an :class:`Evaluation`."""
    e = _evaluate(repr, region, rel)
    return e if detail else e.value


def chi_eval(repr: SignedMeasure, region: Region, rel: float = 1e-8, *, detail: bool = False):
    """Signed-measure value of ``region``; same quadrature scheme as :func:`nu_eval`."""
    e = _evaluate(repr, region, rel)
    return e if detail else e.value


# ---------------------------------------------------------------------------
# model catalog


def clayton_lambda(alpha: float, theta: float):
    """Limit density of the survival-Clayton model with Lomax or Pareto margins."""
    a, th = alpha, theta
    at = a * th
    coef = a * a * (1 + th)

    def lam(z1, z2):
        # homogeneous of degree -a-2: evaluate at z / max(z) to avoid overflow
        r, y1, y2 = _rescale(z1, z2)
        s = y1**at + y2**at
        return coef * r ** (-a - 2) * y1 ** (at - 1) * y2 ** (at - 1) * s ** (-1 / th - 2)

    return lam


def _rescale(z1, z2):
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    r = np.maximum(z1, z2)
    return r, z1 / r, z2 / r


def _lomax_h_paper(alpha: float, theta: float):
    """Mixed partial derivative of the three-branch H (positive sign convention)."""
    a, th = alpha, theta
    at = a * th
    if math.isclose(at, 1.0, rel_tol=1e-12):

        def h(z1, z2):
            s = np.asarray(z1) + np.asarray(z2)
            return a * a * (a + 1) * s ** (-a - 2) - a * (a + 1) * (a + 2) * s ** (-a - 3)

        return h
    if at < 1:
        coef = a * a * (th + 1) * (2 + 1 / th)

        def h(z1, z2):
            # homogeneous of degree -a-2-at
            r, y1, y2 = _rescale(z1, z2)
            return coef * r ** (-a - 2 - at) * y1 ** (at - 1) * y2 ** (at - 1) * (y1**at + y2**at) ** (-3 - 1 / th)

        return h
    m = 1 + 1 / th

    def h(z1, z2):
        # every term scales as r^(-a-2) once the "-1" shifts are written as 1/r
        r, y1, y2 = _rescale(z1, z2)
        s = y1**at + y2**at
        s1, s2 = at * y1 ** (at - 1), at * y2 ** (at - 1)
        p = y1 ** (at - 1) * (y1 - 1 / r) + y2 ** (at - 1) * (y2 - 1 / r)
        p1 = at * y1 ** (at - 1) - (at - 1) * y1 ** (at - 2) / r
        p2 = at * y2 ** (at - 1) - (at - 1) * y2 ** (at - 2) / r
        inner = m * (m + 1) * s ** (-m - 2) * s1 * s2 * p - m * s ** (-m - 1) * (s2 * p1 + s1 * p2)
        return a * r ** (-a - 2) * inner

    return h


def _negate(f):
    return lambda z1, z2: -f(z1, z2)


def h_surface(model: ModelSpec, x, convention: str = "paper") -> float:
    """The second-order limit ``H(x1, x2)`` on box complements, in closed form.

    For the hidden-regular-variation mixture the catalogued closed form carries
    ``min(x1^-2a, x2^-2a)``; the limit of the finite-t ratio is
    ``min(x1, x2)^-2a`` instead, returned with ``convention="prelimit"``.
    Other models have a single form.
    """
    if convention not in CONVENTIONS:
        raise ParameterError(f"convention must be one of {CONVENTIONS}")
    arr = np.asarray(x, dtype=float)
    if arr.shape != (2,):
        raise ShapeError("h_surface takes a point with 2 coordinates")
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise DomainError("h_surface needs x1, x2 > 0")
    x1, x2 = arr
    if isinstance(model, SurvClaytonLomax):
        a, th = model.alpha, model.theta
        at = a * th
        if model.unit_product:
            return float(a * ((x1 + x2) ** (-a - 1) * (x1 + x2 - 1) - x1 ** (-a - 1) * (x1 - 1) - x2 ** (-a - 1) * (x2 - 1)))
        s = x1**at + x2**at
        if at < 1:
            return float(s ** (-1 - 1 / th) / th)
        p = x1 ** (at - 1) * (x1 - 1) + x2 ** (at - 1) * (x2 - 1)
        return float(a * (s ** (-1 - 1 / th) * p - x1 ** (-a - 1) * (x1 - 1) - x2 ** (-a - 1) * (x2 - 1)))
    if isinstance(model, SurvClaytonParetoOne):
        return float(model.alpha * (x1 + x2) ** (-model.alpha - 1))
    if isinstance(model, HrvMixture):
        a = model.alpha
        diag = min(x1 ** (-2 * a), x2 ** (-2 * a)) if convention == "paper" else min(x1, x2) ** (-2 * a)
        return float(-(x1 ** (-a) + x2 ** (-a)) + diag)
    if isinstance(model, AxisMixture):
        return float(0.25 * (x1**-3.0 - x2**-3.0))
    if isinstance(model, HallWelshIid):
        a, r = model.alpha, model.rho
        if a + r > 0:
            return float(0.5 * (x1 ** (r - a) + x2 ** (r - a)))
        if a + r == 0:
            return float(0.5 * (x1 ** (-2 * a) + x2 ** (-2 * a)) - 0.25 * x1 ** (-a) * x2 ** (-a))
        raise RateUnavailableError("not 2MRV (alpha + rho < 0): the second-order limit diverges")
    raise RateUnavailableError(f"no second-order surface catalogued for {model.name}")


def classify_2mrv(alpha: float, rho: float) -> str:
    """``"yes"`` iff the iid Hall-Welsh pair is second-order MRV, decided from the sign of alpha + rho."""
    if not (np.isfinite(alpha) and alpha > 0):
        raise ParameterError("alpha must be > 0")
    if not (np.isfinite(rho) and rho < 0):
        raise ParameterError("rho must be < 0")
    return "yes" if alpha + rho >= 0 else "no"


def hall_welsh_prelimit(alpha: float, rho: float, x, t: float) -> float:
    """Finite-t second-level ratio for the iid Hall-Welsh pair with b(t) = t^(1/alpha), A(t) = t^rho."""
    classify_2mrv(alpha, rho)
    x1, x2 = (float(v) for v in x)
    if x1 <= 0 or x2 <= 0:
        raise DomainError("x must be positive")
    if not t > 1:
        raise DomainError("t must exceed 1")
    a, r = alpha, rho
    tr = t ** (r / a)
    first = 0.5 * (x1 ** (r - a) + x2 ** (r - a))
    cross = 0.25 * t ** (-1 - r / a) * x1 ** (-a) * x2 ** (-a) * (1 + tr * x1**r) * (1 + tr * x2**r)
    return first - cross


@dataclass(frozen=True)
class JointTail:
    """Catalogued second-order description of a joint model.

    ``b`` and ``A`` are the normalizing functions, ``nu`` the limit measure,
    ``chi`` the signed measure in the requested convention (``None`` when the
    rate is unavailable, with ``chi_reason`` saying why).  ``display_scale`` and
    ``display_power`` give ``A(b(1/gamma)) ~ display_scale * gamma**display_power``.
    """

    alpha: float
    rho: float
    b: Callable[[float], float]
    A: Callable[[float], float]
    nu: LimitMeasure
    chi: Optional[SignedMeasure]
    margin_2rv: bool
    display_scale: float
    display_power: float
    dependence: str
    lam: Optional[Callable] = None
    chi_reason: str = ""
    nu_provenance: str = "closed-form"


CONVENTIONS = ("paper", "prelimit")


def joint_tail(model: ModelSpec, convention: str = "paper") -> JointTail:
    """Catalog entry for ``model``.

    ``convention="paper"`` uses the signed densities obtained as the plain mixed
    partial derivative of H; ``"prelimit"`` uses the measure whose values on
    box complements are exactly H (opposite interior sign, plus axis mass
    where needed).
    """
    if convention not in CONVENTIONS:
        raise ParameterError(f"convention must be one of {CONVENTIONS}")
    if isinstance(model, SurvClaytonParetoOne):
        a = model.alpha
        lam = clayton_lambda(a, 1 / a)
        h = lambda z1, z2: a * (a + 1) * (a + 2) * (np.asarray(z1) + np.asarray(z2)) ** (-a - 3)
        if convention == "paper":
            chi = Density(h, "interior")
        else:
            chi = Split(positive=(AxisAtomic((a, a), a + 1),), negative=(Density(h, "interior"),))
        nu = Analytic(
            gamma=lambda d, k: k ** (-a) if d == 1 else (a + 1) * k ** (-a),
            box=lambda x: x[0] ** (-a) + x[1] ** (-a) - (x[0] + x[1]) ** (-a),
            label="clayton-pareto1",
        )
        return JointTail(
            alpha=a, rho=-1.0, b=lambda t: t ** (1 / a), A=lambda t: -1.0 / t, nu=nu, chi=chi,
            margin_2rv=False, display_scale=-1.0, display_power=1 / a, dependence="asymptotic-dependence", lam=lam,
        )
    if isinstance(model, SurvClaytonLomax):
        a, th = model.alpha, model.theta
        mu = min(a * th, 1.0)
        lam = clayton_lambda(a, th)
        h = _lomax_h_paper(a, th)
        if convention == "paper":
            chi = Density(h, "interior")
        elif a * th < 1 and not model.unit_product:
            # H keeps mass on the axes: H(x1, inf) = x1^(-a(1+theta)) / theta
            chi = Split(positive=(AxisAtomic((1 / th, 1 / th), a * (1 + th)),), negative=(Density(h, "interior"),))
        else:
            chi = Density(_negate(h), "interior")
        if model.unit_product:
            nu = Analytic(
                gamma=lambda d, k: k ** (-a) if d == 1 else (a + 1) * k ** (-a),
                box=lambda x: x[0] ** (-a) + x[1] ** (-a) - (x[0] + x[1]) ** (-a),
                label="clayton-lomax-unit",
            )
            prov = "closed-form"
        else:
            nu = Density(lam, "clayton-lambda")
            prov = "quadrature"
        return JointTail(
            alpha=a, rho=-mu, b=lambda t: t ** (1 / a) - 1, A=lambda t: -((t + 1) ** (-mu)), nu=nu, chi=chi,
            margin_2rv=True, display_scale=-1.0, display_power=mu / a, dependence="asymptotic-dependence",
            lam=lam, nu_provenance=prov,
        )
    if isinstance(model, HrvMixture):
        a = model.alpha
        margin = model.margin()
        chi = Split(positive=(DiagonalAtomic(1.0, 2 * a),), negative=(AxisAtomic((1.0, 1.0), a),))
        return JointTail(
            alpha=a, rho=-a, b=lambda t: float(margin.scaling_b(t)), A=lambda t: 2.0 * t ** (-a),
            nu=AxisAtomic((1.0, 1.0), a), chi=chi, margin_2rv=True, display_scale=8.0, display_power=1.0,
            dependence="asymptotic-independence",
        )
    if isinstance(model, HallWelshIid):
        a, r = model.alpha, model.rho
        chi, reason = None, ""
        if a + r > 0:
            chi = AxisAtomic((0.5, 0.5), a - r)
        elif a + r == 0:
            reason = "signed limit has an interior part that is not integrable near the axes"
        else:
            reason = "not 2MRV (alpha + rho < 0)"
        return JointTail(
            alpha=a, rho=r, b=lambda t: t ** (1 / a), A=lambda t: t**r, nu=AxisAtomic((0.5, 0.5), a), chi=chi,
            margin_2rv=True, display_scale=1.0, display_power=-r / a, dependence="asymptotic-independence",
            chi_reason=reason,
        )
    if isinstance(model, IidRV):
        m = model.margin()
        a = m.alpha
        return JointTail(
            alpha=a, rho=float("nan"), b=lambda t: float(m.scaling_b(t)), A=lambda t: float("nan"),
            nu=AxisAtomic((1.0,) * model.d, a), chi=None, margin_2rv=m.second_order().is_2rv,
            display_scale=float("nan"), display_power=float("nan"), dependence="asymptotic-independence",
            chi_reason="second-order signed measure of iid sums is not catalogued",
        )
    if isinstance(model, AxisMixture):
        chi = Split(positive=(AxisAtomic((0.25, 0.0), 3.0),), negative=(AxisAtomic((0.0, 0.25), 3.0),))
        return JointTail(
            alpha=2.0, rho=-1.0, b=lambda t: t**0.5, A=lambda t: t**-1.0, nu=AxisAtomic((0.25, 0.5), 2.0), chi=chi,
            margin_2rv=True, display_scale=float("nan"), display_power=float("nan"),
            dependence="asymptotic-independence",
        )
    raise CapabilityError(f"model {model!r} is not catalogued")


def limit_measure(model: ModelSpec) -> LimitMeasure:
    return joint_tail(model).nu


def signed_measure(model: ModelSpec, convention: str = "paper") -> SignedMeasure:
    jt = joint_tail(model, convention)
    if jt.chi is None:
        raise RateUnavailableError(jt.chi_reason)
    return jt.chi


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    hits: int
    n: int
    prelimit: Optional[float] = None
    prelimit_se: Optional[float] = None
    upper_bound: Optional[float] = None


def mc_measure_eval(model: ModelSpec, region: Region, t: float, n: int, seed: int,
                    threads: Optional[int] = None, reference: Optional[float] = None) -> MCEstimate:
    """Estimate ``t P(X / b(t) in region)`` and, given ``reference = nu(region)``, the normalized prelimit.

    Zero hits emit :class:`DegenerateEstimateWarning`; the estimate then carries
    the one-sided 95% bound ``3 t / n``.
    """
    jt = joint_tail(model)
    bt = jt.b(t)
    if not bt > model.floor:
        raise DomainError("t too small: b(t) must exceed the support floor")
    dim = region.d if isinstance(region, GammaD) else len(region.x)
    if dim not in (1, model.d):
        raise ShapeError("region dimension does not match the model")
    xs = sample(model, n, seed, threads).values
    hits = int(np.count_nonzero(region.contains(xs / bt)))
    p = hits / n
    value = t * p
    se = t * math.sqrt(p * (1 - p) / n)
    bound = None
    if hits == 0:
        bound = 3.0 * t / n
        warnings.warn(DegenerateEstimateWarning(f"no sample hit the region; one-sided bound {bound:.3g}"))
    pre = pre_se = None
    if reference is not None:
        a = jt.A(bt)
        pre = (value - reference) / a
        pre_se = se / abs(a)
    return MCEstimate(value, se, hits, n, pre, pre_se, bound)


def exact_region_prob(model: ModelSpec, region: Region, t: float) -> float:
    """``t P(X / b(t) in region)`` for box complements, from the joint survival."""
    if not isinstance(region, BoxComplement):
        raise CapabilityError("exact evaluation is available on box complements only")
    bt = joint_tail(model).b(t)
    return t * box_complement_prob(model, np.asarray(region.x) * bt)
