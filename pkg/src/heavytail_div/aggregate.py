"""Aggregation constants, diversification limits and quantile-level extrapolation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import CapabilityError, DomainError, ParameterError, RateUnavailableError, ShapeError
from .measures import (
    AxisAtomic,
    Analytic,
    GammaD,
    SignedMeasure,
    chi_eval,
    joint_tail,
    nu_eval,
)
from .models import ModelSpec, identical_margins, model_to_dict


def _nu_provenance(nu) -> str:
    return "closed-form" if isinstance(nu, (AxisAtomic, Analytic)) else "quadrature"


def _rho_factor(alpha: float, rho: float) -> float:
    # rho 2^a / (2^rho - 1), with its rho -> 0 limit 2^a / log 2
    if rho == 0:
        return 2**alpha / math.log(2)
    return rho * 2**alpha / math.expm1(rho * math.log(2))


@dataclass(frozen=True)
class AggregationConstants:
    """Second-order constants of the sum ``S_d``.

    ``A`` is the joint auxiliary function, so that ``A_d(b_d(t)) = A(b(t))``.
    ``c_1`` is ``None`` when the margin is not second-order regularly varying,
    in which case ``C = c_d``.
    """

    d: int
    alpha: float
    rho: float
    nu_gamma_d: float
    nu_gamma_1: float
    c_d: float
    c_1: Optional[float]
    K_d: float
    C: float
    chi_gamma_d: float
    chi_gamma_1: Optional[float]
    degenerate_rate: bool
    chi_near_equal: bool
    display_scale: float
    display_power: float
    convention: str
    model: Dict
    provenance: Dict[str, str]
    error_bounds: Dict[str, float]
    A: Callable[[float], float] = field(repr=False, compare=False)
    b: Callable[[float], float] = field(repr=False, compare=False)
    chi: SignedMeasure = field(repr=False, compare=False)

    @property
    def b_d_scale(self) -> float:
        return self.nu_gamma_d ** (1 / self.alpha)

    @property
    def rho_over_alpha(self) -> float:
        return self.rho / self.alpha

    def b_d(self, t):
        return self.b_d_scale * self.b(t)

    def A_d(self, t):
        return self.A(t / self.b_d_scale)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "d": self.d,
            "alpha": self.alpha,
            "rho": self.rho,
            "rho_over_alpha": self.rho_over_alpha,
            "nu_gamma_d": self.nu_gamma_d,
            "nu_gamma_1": self.nu_gamma_1,
            "b_d_scale": self.b_d_scale,
            "c_d": self.c_d,
            "c_1": self.c_1,
            "C": self.C,
            "K_d": self.K_d,
            "chi_gamma_d": self.chi_gamma_d,
            "chi_gamma_1": self.chi_gamma_1,
            "degenerate_rate": self.degenerate_rate,
            "chi_near_equal": self.chi_near_equal,
            "display_normalization": {"scale": self.display_scale, "power": self.display_power},
            "convention": self.convention,
            "provenance": self.provenance,
            "error_bounds": self.error_bounds,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)


def _check_model(model: ModelSpec, d: Optional[int]) -> int:
    d = model.d if d is None else d
    if d != model.d:
        raise ShapeError(f"model has dimension {model.d}, got d={d}")
    if not identical_margins(model):
        raise CapabilityError(f"{model.name}: non-identical margins, aggregation constants are not defined")
    return d


def first_order_limit(model: ModelSpec, d: Optional[int] = None, rel: float = 1e-8) -> float:
    """``K_d = (1/d) (nu(Gamma_d) / nu(Gamma_1))^(1/alpha)``; equals 1 for a single risk."""
    d = _check_model(model, d)
    jt = joint_tail(model)
    if d == 1:
        return 1.0
    nu_d = nu_eval(jt.nu, GammaD(d, 1.0), rel)
    nu_1 = nu_eval(jt.nu, GammaD(1, 1.0), rel)
    return (nu_d / nu_1) ** (1 / jt.alpha) / d


def aggregation_constants(model: ModelSpec, d: Optional[int] = None, convention: str = "paper",
                          rel: float = 1e-8) -> AggregationConstants:
    d = _check_model(model, d)
    if d < 2:
        raise DomainError("aggregation needs d >= 2")
    jt = joint_tail(model, convention)
    if jt.chi is None:
        raise RateUnavailableError(f"{model.name}: {jt.chi_reason}")
    a, r = jt.alpha, jt.rho
    prov, errs = {}, {}
    e_nd = nu_eval(jt.nu, GammaD(d, 1.0), rel, detail=True)
    e_n1 = nu_eval(jt.nu, GammaD(1, 1.0), rel, detail=True)
    prov["nu_gamma_d"], errs["nu_gamma_d"] = _nu_provenance(jt.nu), e_nd.error_bound
    prov["nu_gamma_1"], errs["nu_gamma_1"] = _nu_provenance(jt.nu), e_n1.error_bound
    nu_d, nu_1 = e_nd.value, e_n1.value
    K = (nu_d / nu_1) ** (1 / a) / d
    factor = _rho_factor(a, r)
    e_cd = chi_eval(jt.chi, GammaD(d, 2 * nu_d ** (1 / a)), rel, detail=True)
    if not np.isfinite(e_cd.value):
        raise RateUnavailableError("signed measure of the scaled sum region is not finite")
    c_d = factor * e_cd.value
    prov["c_d"], errs["c_d"] = e_cd.method, abs(factor) * e_cd.error_bound
    c_1 = chi_1 = None
    if jt.margin_2rv:
        e_c1 = chi_eval(jt.chi, GammaD(1, 2 * nu_1 ** (1 / a)), rel, detail=True)
        chi_1 = e_c1.value
        c_1 = factor * chi_1
        prov["c_1"], errs["c_1"] = e_c1.method, abs(factor) * e_c1.error_bound
    C = c_d - c_1 if c_1 is not None else c_d
    scale = max(1.0, abs(c_d), abs(c_1 or 0.0))
    degenerate = abs(C) <= 1e-12 * scale
    near = chi_1 is not None and abs(abs(e_cd.value) - abs(chi_1)) <= 1e-10
    prov["K_d"] = prov["nu_gamma_d"]
    prov["C"] = "quadrature" if "quadrature" in (prov["c_d"], prov.get("c_1")) else "closed-form"
    return AggregationConstants(
        d=d, alpha=a, rho=r, nu_gamma_d=nu_d, nu_gamma_1=nu_1, c_d=c_d, c_1=c_1, K_d=K, C=C,
        chi_gamma_d=e_cd.value, chi_gamma_1=chi_1, degenerate_rate=degenerate, chi_near_equal=near,
        display_scale=jt.display_scale, display_power=jt.display_power, convention=convention,
        model=model_to_dict(model), provenance=prov, error_bounds=errs, A=jt.A, b=jt.b, chi=jt.chi,
    )


def second_order_limit(consts: AggregationConstants, x, form: str = "raw"):
    """Limit of the normalized diversification gap at level ``1 - gamma x``.

    ``form="raw"``: ``C K_d / (alpha rho) (x^(-rho/alpha) - 1)``, the limit of
    ``(D - K_d) / A(b(1/gamma))``.

    ``form="display"``: the same limit for ``d (D - K_d) / gamma^q``, i.e. the
    VaR-ratio gap ``VaR(S_d)/VaR(X_1) - d K_d`` scaled by ``gamma^-q``, where
    ``A(b(1/gamma)) ~ s gamma^q`` is the model's display normalization.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("x must be > 0")
    a, r = consts.alpha, consts.rho
    raw = consts.C * consts.K_d / (a * r) * np.expm1(-r / a * np.log(arr))
    if form == "raw":
        out = raw
    elif form == "display":
        out = consts.d * consts.display_scale * raw
    else:
        raise ParameterError("form must be 'raw' or 'display'")
    return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True)
class HdValue:
    closed: float
    chi: float

    @property
    def gap(self) -> float:
        return abs(self.closed - self.chi)


def h_d(consts: AggregationConstants, x: float, rel: float = 1e-8) -> HdValue:
    """``H_d(x)`` two ways: the closed shape ``c_d x^-a (x^rho - 1)/rho`` and the signed measure of ``x nu(Gamma_d)^(1/a) Gamma_d``."""
    if not x > 0:
        raise DomainError("x must be > 0")
    a, r = consts.alpha, consts.rho
    shape = math.log(x) if r == 0 else math.expm1(r * math.log(x)) / r
    closed = consts.c_d * x ** (-a) * shape
    via_chi = chi_eval(consts.chi, GammaD(consts.d, x * consts.b_d_scale), rel)
    return HdValue(closed, via_chi)


def extrapolate_div_index(D_lo: float, D_hi: float, beta_lo: float, beta_hi: float,
                          rho_over_alpha: float, p: float) -> float:
    """Predict ``D_p`` from two measured indices using the second-order shape in the level.

    ``D_p = D_lo + r(p) (D_hi - D_lo)`` with
    ``r(p) = (((1-p)/(1-beta_lo))^(-rho/alpha) - 1) / (((1-beta_hi)/(1-beta_lo))^(-rho/alpha) - 1)``.
    """
    if not (0 < beta_lo < beta_hi < 1):
        raise DomainError("anchors must satisfy 0 < beta_lo < beta_hi < 1")
    if not (beta_lo <= p < 1):
        raise DomainError("target level p must satisfy beta_lo <= p < 1")
    if rho_over_alpha == 0:
        raise DomainError("rho/alpha = 0 makes the extrapolation ratio undefined")
    if not rho_over_alpha < 0:
        raise ParameterError("rho/alpha must be negative")
    e = -rho_over_alpha
    num = math.expm1(e * math.log((1 - p) / (1 - beta_lo)))
    den = math.expm1(e * math.log((1 - beta_hi) / (1 - beta_lo)))
    return D_lo + num / den * (D_hi - D_lo)
