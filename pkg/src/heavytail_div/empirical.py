"""Empirical quantiles, diversification indices, the convergence harness and assumption checks."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .aggregate import AggregationConstants, aggregation_constants, second_order_limit
from .errors import CapabilityError, DomainError, ParameterError, SampleSizeError
from .measures import joint_tail
from .models import (
    HrvMixture,
    IidRV,
    ModelSpec,
    SurvClaytonLomax,
    SurvClaytonParetoOne,
    box_complement_prob,
    identical_margins,
    iter_chunks,
    sum_quantile_exact,
    sum_tail_method,
)
from .tails import second_order_h, second_order_prelimit

MC_TAIL_FLOOR = 50
_Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# quantiles


@dataclass(frozen=True)
class QuantileEstimate:
    level: float
    estimate: float
    index: int  # 1-based order statistic
    ci_half_width: float
    ci_lower: float
    ci_upper: float


def _order_index(n: int, beta: float) -> int:
    # ceil(n beta) with a guard against n*beta landing a rounding error above an integer
    k = math.ceil(n * beta - 1e-9 * max(1.0, n * beta))
    return min(max(k, 1), n)


def _ci_indices(n: int, beta: float):
    half = _Z95 * math.sqrt(n * beta * (1 - beta))
    k = n * beta
    return max(1, math.floor(k - half)), min(n, math.ceil(k + half) + 1)


def empirical_var(samples, beta: float, min_tail_count: float = 10) -> QuantileEstimate:
    """Left-continuous empirical quantile: the ``ceil(n beta)``-th order statistic.

    ``min_tail_count`` enforces ``n (1 - beta) >= min_tail_count``; pass 0 to
    disable the guard.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if not 0 < beta < 1:
        raise DomainError("beta must lie in (0, 1)")
    n = x.size
    if n == 0:
        raise SampleSizeError("empty sample", required_n=1)
    if min_tail_count and n * (1 - beta) < min_tail_count:
        need = math.ceil(min_tail_count / (1 - beta))
        raise SampleSizeError(f"n={n} leaves fewer than {min_tail_count} tail points at beta={beta}; need n >= {need}",
                              required_n=need)
    k = _order_index(n, beta)
    lo_i, hi_i = _ci_indices(n, beta)
    part = np.partition(x, sorted({k - 1, lo_i - 1, hi_i - 1}))
    est, lo, hi = part[k - 1], part[lo_i - 1], part[hi_i - 1]
    return QuantileEstimate(beta, float(est), k, float(0.5 * (hi - lo)), float(lo), float(hi))


# ---------------------------------------------------------------------------
# diversification index


@dataclass(frozen=True)
class DivIndex:
    beta: float
    value: float
    mode: str
    se: Optional[float] = None
    ci_lower: Optional[float] = None
    ci_upper: Optional[float] = None
    n: Optional[int] = None


def div_index_at_tail(model: ModelSpec, p: float) -> float:
    """Exact ``D`` at level ``1 - p``; taking the tail probability avoids rounding ``1 - p``."""
    if not identical_margins(model):
        raise CapabilityError(f"{model.name}: non-identical margins")
    if model.d == 1:
        return 1.0
    try:
        sum_tail_method(model)
    except CapabilityError as exc:
        raise CapabilityError(f"{exc}; use monte_carlo mode") from exc
    vs = sum_quantile_exact(model, p)
    vx = float(model.margin().quantile(p))
    return vs / (model.d * vx)


class _TopK:
    """Largest ``k`` values of a stream, per column."""

    def __init__(self, k: int, cols: int):
        self.k = k
        self.buf = [np.empty(0) for _ in range(cols)]

    def push(self, block: np.ndarray):
        for j in range(block.shape[1]):
            merged = np.concatenate([self.buf[j], block[:, j]])
            if merged.size > self.k:
                merged = np.partition(merged, merged.size - self.k)[-self.k:]
            self.buf[j] = merged

    def order_stat(self, j: int, n: int, i: int) -> float:
        """The ``i``-th smallest (1-based) of ``n`` values, which must lie in the kept tail."""
        from_top = n - i  # 0-based rank from the top
        if from_top >= self.k:
            raise SampleSizeError("order statistic outside the retained tail")
        arr = np.sort(self.buf[j])[::-1]
        return float(arr[from_top])


def _mc_div_index(model, beta, n, seed, threads, batches=20):
    gamma = 1 - beta
    if gamma * n < MC_TAIL_FLOOR:
        need = math.ceil(MC_TAIL_FLOOR / gamma)
        raise SampleSizeError(
            f"monte carlo needs gamma*n >= {MC_TAIL_FLOOR} expected exceedances (n >= {need} at beta={beta})",
            required_n=need,
        )
    d = model.d
    nb = n // batches
    if nb * gamma < MC_TAIL_FLOOR / batches:
        batches = 1
        nb = n
    keep_full = (n - _ci_indices(n, beta)[0]) + 2
    keep_b = (nb + batches - _order_index(nb, beta)) + 2
    full = _TopK(keep_full, d + 1)
    per = [_TopK(keep_b, d + 1) for _ in range(batches)]
    seen = 0
    for block in iter_chunks(model, n, seed, threads):
        aug = np.column_stack([block.sum(axis=1), block])
        full.push(aug)
        # rows are assigned to batches by global row index
        start = seen
        while start < seen + len(aug):
            b = min(start // nb, batches - 1)
            end = seen + len(aug) if b == batches - 1 else min(seen + len(aug), (b + 1) * nb)
            per[b].push(aug[start - seen:end - seen])
            start = end
        seen += len(aug)

    def ratio(top, m):
        k = _order_index(m, beta)
        vs = top.order_stat(0, m, k)
        vx = sum(top.order_stat(j, m, k) for j in range(1, d + 1))
        return vs / vx

    value = ratio(full, n)
    se = None
    if batches > 1:
        sizes = [nb] * (batches - 1) + [n - nb * (batches - 1)]
        vals = np.array([ratio(per[b], sizes[b]) for b in range(batches)])
        se = float(vals.std(ddof=1) / math.sqrt(batches))
    return value, se


def div_index(model: ModelSpec, beta: float, mode: str = "exact", n: Optional[int] = None,
              seed: Optional[int] = None, threads: Optional[int] = None) -> DivIndex:
    """``D_beta = VaR_beta(S_d) / sum_i VaR_beta(X_i)``.

    ``mode="exact"`` uses the sum-quantile oracle; ``mode="monte_carlo"``
    streams ``n`` draws and reports a batch-means standard error.
    """
    if not 0 < beta < 1:
        raise DomainError("beta must lie in (0, 1)")
    if mode == "exact":
        return DivIndex(beta, div_index_at_tail(model, 1 - beta), "exact")
    if mode != "monte_carlo":
        raise ParameterError("mode must be 'exact' or 'monte_carlo'")
    if n is None or seed is None:
        raise ParameterError("monte_carlo mode needs n and seed")
    value, se = _mc_div_index(model, beta, int(n), int(seed), threads)
    lo = hi = None
    if se is not None:
        lo, hi = value - _Z95 * se, value + _Z95 * se
    return DivIndex(beta, value, "monte_carlo", se, lo, hi, int(n))


# ---------------------------------------------------------------------------
# convergence harness


@dataclass(frozen=True)
class ConvergenceRow:
    gamma: float
    x: float
    deviation: float
    theory: float
    source: str
    se: Optional[float] = None
    noise_dominated: bool = False
    scale: float = float("nan")  # A(b(1/gamma)) or gamma^q, the normalizer used


@dataclass(frozen=True)
class ConvergenceTable:
    rows: List[ConvergenceRow]
    x: float
    form: str
    fitted: float
    theory: float
    constants: AggregationConstants = field(repr=False)

    @property
    def abs_error(self) -> float:
        return abs(self.fitted - self.theory)

    @property
    def last_error(self) -> float:
        return abs(self.rows[-1].deviation - self.theory)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "x", "deviation", "theory", "source", "se"])
        for r in self.rows:
            w.writerow([f"{r.gamma:.17g}", f"{r.x:.17g}", f"{r.deviation:.17g}", f"{r.theory:.17g}", r.source,
                        "" if r.se is None else f"{r.se:.17g}"])
        return buf.getvalue()

    def summary(self, tol: float = 1e-2) -> dict:
        return {
            "x": self.x,
            "form": self.form,
            "fitted_limit": self.fitted,
            "theory": self.theory,
            "abs_error": self.abs_error,
            "last_row_abs_error": self.last_error,
            "tolerance": tol,
            "pass": bool(self.last_error <= tol),
            "noise_dominated_rows": sum(r.noise_dominated for r in self.rows),
        }

    def to_json(self, tol: float = 1e-2) -> str:
        return json.dumps(self.summary(tol), indent=2)


def _normalizer(consts: AggregationConstants, gamma: float, form: str) -> float:
    if form == "raw":
        return consts.A(consts.b(1 / gamma))
    return gamma**consts.display_power / consts.d


def convergence_table(model: ModelSpec, gamma_grid: Sequence[float], x: float, mode: str = "exact",
                      n: Optional[int] = None, seed: Optional[int] = None, form: str = "raw",
                      convention: str = "paper", threads: Optional[int] = None) -> ConvergenceTable:
    """Normalized gaps ``(D_{1-gamma x} - K_d) / A(b(1/gamma))`` along a decreasing gamma grid.

    ``form="display"`` reports ``d (D - K_d) / gamma^q`` instead.  The fitted
    limit is a one-step Richardson extrapolation, linear in ``A(b(1/gamma))``,
    through the two smallest gammas.
    """
    g = [float(v) for v in gamma_grid]
    if len(g) < 2:
        raise DomainError("gamma grid needs at least two points")
    if any(not 0 < v < 1 for v in g) or any(b >= a for a, b in zip(g, g[1:])):
        raise DomainError("gamma grid must be strictly decreasing inside (0, 1)")
    if not x > 0 or g[0] * x >= 1:
        raise DomainError("need x > 0 and gamma x < 1")
    consts = aggregation_constants(model, convention=convention)
    theory = second_order_limit(consts, x, form)
    rows = []
    for gam in g:
        norm = _normalizer(consts, gam, form)
        if mode == "exact":
            D = div_index_at_tail(model, gam * x)
            se = None
            source = "exact-oracle"
        elif mode == "monte_carlo":
            if n is None or seed is None:
                raise ParameterError("monte_carlo mode needs n and seed")
            if gam * x * n < MC_TAIL_FLOOR:
                raise SampleSizeError(f"gamma={gam}: below the Monte Carlo floor gamma*x*n >= {MC_TAIL_FLOOR}",
                                      required_n=math.ceil(MC_TAIL_FLOOR / (gam * x)))
            r = div_index(model, 1 - gam * x, "monte_carlo", n, seed, threads)
            D, se = r.value, (None if r.se is None else r.se / abs(norm))
            source = "monte-carlo"
        else:
            raise ParameterError("mode must be 'exact' or 'monte_carlo'")
        dev = (D - consts.K_d) / norm
        noisy = se is not None and abs(dev) < 2 * se
        rows.append(ConvergenceRow(gam, x, dev, theory, source, se, noisy, norm))
    a1 = consts.A(consts.b(1 / g[-2]))
    a2 = consts.A(consts.b(1 / g[-1]))
    d1, d2 = rows[-2].deviation, rows[-1].deviation
    fitted = (d2 * a1 - d1 * a2) / (a1 - a2)
    return ConvergenceTable(rows, x, form, fitted, theory, consts)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    theory_slope: float
    gamma: float


def fit_rate_coefficient(model: ModelSpec, gamma: float, x_grid: Sequence[float], form: str = "display",
                         convention: str = "paper") -> RateFit:
    """Least-squares fit of exact gaps at one small gamma against ``x^(-rho/alpha) - 1``.

    The free intercept absorbs any x-independent offset, so the slope isolates
    the rate coefficient ``C K_d / (alpha rho)`` (times the display factor).
    """
    consts = aggregation_constants(model, convention=convention)
    xs = np.asarray(x_grid, dtype=float)
    if xs.size < 2 or np.any(xs <= 0):
        raise DomainError("x grid needs at least two positive points")
    norm = _normalizer(consts, gamma, form)
    devs = np.array([(div_index_at_tail(model, gamma * x) - consts.K_d) / norm for x in xs])
    basis = np.expm1(-consts.rho_over_alpha * np.log(xs))
    slope, intercept = np.polyfit(basis, devs, 1)
    theory = second_order_limit(consts, math.e, form) / math.expm1(-consts.rho_over_alpha)
    return RateFit(float(slope), float(intercept), float(theory), gamma)


# ---------------------------------------------------------------------------
# assumption checks


@dataclass(frozen=True)
class AssumptionRow:
    t: float
    sup_a: float
    sup_b: float


@dataclass(frozen=True)
class AssumptionReport:
    kind: str  # "assumption1" | "assumption2"
    rows: List[AssumptionRow]
    slope_a: float
    slope_b: float
    theory_slope: float
    labels: tuple
    extra: dict = field(default_factory=dict)

    @property
    def decreasing(self) -> bool:
        a = [r.sup_a for r in self.rows]
        b = [r.sup_b for r in self.rows]
        return all(y < x for x, y in zip(a, a[1:])) and all(y < x for x, y in zip(b, b[1:]))

    def passed(self, slope_tol: float = 0.2) -> bool:
        ok = self.decreasing
        ok = ok and abs(self.slope_a - self.theory_slope) <= slope_tol
        ok = ok and abs(self.slope_b - self.theory_slope) <= slope_tol
        return bool(ok and self.extra.get("identical_margins", True))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "labels": list(self.labels),
            "rows": [asdict(r) for r in self.rows],
            "slope_a": self.slope_a,
            "slope_b": self.slope_b,
            "theory_slope": self.theory_slope,
            "decreasing": self.decreasing,
            "pass": self.passed(),
            **self.extra,
        }


def sphere_grid(points: int = 181, offset: float = 1e-3) -> np.ndarray:
    """Points on the positive quarter of the unit circle, kept ``offset`` radians off the axes."""
    phi = np.linspace(offset, math.pi / 2 - offset, points)
    return np.column_stack([np.cos(phi), np.sin(phi)])


def density_gap(model: ModelSpec, t: float, x1, x2):
    """``(lambda(x), f(t x) / (t^-2 F1(t)) - lambda(x))``, with the gap formed without cancellation."""
    jt = joint_tail(model)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    lam = jt.lam(x1, x2)
    if isinstance(model, SurvClaytonParetoOne):
        a = model.alpha
        expo = -(a + 2) * np.log1p(-1.0 / (t * (x1 + x2)))
    elif isinstance(model, SurvClaytonLomax):
        a, th = model.alpha, model.theta
        at = a * th
        l1, l2 = np.log1p(1.0 / (t * x1)), np.log1p(1.0 / (t * x2))
        s = x1**at + x2**at
        q = x1**at * np.expm1(at * l1) + x2**at * np.expm1(at * l2) - t ** (-at)
        expo = (at - 1) * (l1 + l2) - (1 / th + 2) * np.log1p(q / s) + a * math.log1p(1.0 / t)
    else:
        raise CapabilityError(f"{model.name} has no joint density; use verify_assumption2")
    return lam, lam * np.expm1(expo)


def _slope(ts, vals):
    return float(np.polyfit(np.log(ts), np.log(vals), 1)[0])


def verify_assumption1(model: ModelSpec, t_grid: Sequence[float] = (1e4, 1e6, 1e8),
                       sphere: Optional[np.ndarray] = None) -> AssumptionReport:
    """Sup over the arc of the density-ratio gap (first order) and its normalized remainder (second order).

    The second-order column compares against the interior density of the
    signed measure in the prelimit convention.
    """
    if not isinstance(model, (SurvClaytonParetoOne, SurvClaytonLomax)):
        if isinstance(model, HrvMixture):
            raise CapabilityError("hrv_mixture has no joint density; use verify_assumption2")
        raise CapabilityError(f"{model.name}: no joint density catalogued")
    pts = sphere_grid() if sphere is None else np.asarray(sphere, dtype=float)
    jt = joint_tail(model, "prelimit")
    chi = jt.chi.negative[0] if hasattr(jt.chi, "negative") else jt.chi
    sign = -1.0 if hasattr(jt.chi, "negative") else 1.0
    chi_prime = sign * chi.f(pts[:, 0], pts[:, 1])
    rows = []
    for t in t_grid:
        _, gap = density_gap(model, t, pts[:, 0], pts[:, 1])
        second = gap / jt.A(t) - chi_prime
        rows.append(AssumptionRow(float(t), float(np.max(np.abs(gap))), float(np.max(np.abs(second)))))
    ts = [r.t for r in rows]
    return AssumptionReport(
        "assumption1", rows, _slope(ts, [r.sup_a for r in rows]), _slope(ts, [r.sup_b for r in rows]),
        jt.rho, ("cond4_sup", "cond5_sup"), {"identical_margins": True, "points": int(len(pts))},
    )


def verify_assumption2(model: ModelSpec, t_grid: Sequence[float] = (1e4, 1e6, 1e8),
                       x_grid: Optional[Sequence[float]] = None) -> AssumptionReport:
    """Axis-form MRV prelimit and the marginal second-order prelimit for asymptotically independent models.

    Both sup deviations should decay like ``A(b(t))``, i.e. with log-log slope ``rho / alpha`` in t.
    """
    if not identical_margins(model):
        raise CapabilityError(f"{model.name}: non-identical margins")
    if not isinstance(model, (HrvMixture, IidRV)):
        raise CapabilityError(f"{model.name} is asymptotically dependent; use verify_assumption1")
    if model.d != 2:
        raise CapabilityError("assumption-2 checks are implemented for d = 2")
    margin = model.margin()
    tail = margin.second_order()
    if not tail.is_2rv:
        raise CapabilityError("margin is not second-order regularly varying")
    xs = np.linspace(0.5, 4.0, 15) if x_grid is None else np.asarray(x_grid, dtype=float)
    jt = joint_tail(model)
    grid = np.array([(u, v) for u in xs for v in xs])
    limit_mrv = grid[:, 0] ** (-jt.alpha) + grid[:, 1] ** (-jt.alpha)
    limit7 = second_order_h(tail, xs)
    rows = []
    at2 = {}
    for t in t_grid:
        bt = jt.b(t)
        mrv = t * box_complement_prob(model, grid * bt) - limit_mrv
        c7 = second_order_prelimit(margin, t, xs) - limit7
        rows.append(AssumptionRow(float(t), float(np.max(np.abs(mrv))), float(np.max(np.abs(c7)))))
        at2[t] = float(second_order_prelimit(margin, t, 2.0))
    ts = [r.t for r in rows]
    return AssumptionReport(
        "assumption2", rows, _slope(ts, [r.sup_a for r in rows]), _slope(ts, [r.sup_b for r in rows]),
        tail.rho / tail.alpha, ("mrv_sup", "cond7_sup"),
        {"identical_margins": True, "cond7_at_2": at2, "cond7_limit_at_2": float(second_order_h(tail, 2.0))},
    )


def verify_assumptions(model: ModelSpec, t_grid: Sequence[float] = (1e4, 1e6, 1e8)) -> AssumptionReport:
    """Route to the density-based or axis-based check according to the catalogued dependence."""
    if not identical_margins(model):
        raise CapabilityError(f"{model.name}: non-identical margins; neither assumption applies")
    if joint_tail(model).dependence == "asymptotic-dependence":
        return verify_assumption1(model, t_grid)
    return verify_assumption2(model, t_grid)
