"""Joint models, exact sum-tail oracles and seeded samplers.

Variants:

* ``SurvClaytonLomax(alpha, theta)``   Pareto-Lomax margins, survival Clayton copula
* ``SurvClaytonParetoOne(alpha)``      Pareto type-1 margins, survival Clayton with theta = 1/alpha
* ``HrvMixture(alpha)``                axis mixture plus a diagonal Pareto(2 alpha) component
* ``IidRV(margin, d)``                 iid margins in dimension d
* ``HallWelshIid(alpha, rho)``         iid Hall-Welsh margins, d = 2
* ``AxisMixture()``                    mass on the two axes only, non-identical margins

Sampling is chunked: chunk ``i`` of a run with seed ``s`` always draws from
the same Philox stream (key derived from ``s``, counter offset ``i``), so the
output does not depend on how chunks are scheduled across threads.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Union

import numpy as np
from scipy import integrate, optimize

from .errors import CapabilityError, DomainError, ParameterError, ShapeError
from .tails import MarginFamily, MixtureB, ParetoLomax, ParetoOne, _Margin, _check_alpha

CHUNK_ROWS = 1 << 16
_SEED_MAX = 1 << 64


# ---------------------------------------------------------------------------
# margins given only by a survival formula


class _BisectMargin(_Margin):
    """Margin on [floor, inf) inverted by bisection in log-space."""

    floor = 1.0
    _iters = 80

    def _isf(self, p):
        p = np.asarray(p, dtype=float)
        lo = np.zeros_like(p)
        hi = np.full_like(p, 1.0)
        # grow the bracket until F(hi) <= p everywhere
        while True:
            bad = self._sf(np.exp(hi)) > p
            if not np.any(bad):
                break
            hi = np.where(bad, 2 * hi, hi)
        for _ in range(self._iters):
            mid = 0.5 * (lo + hi)
            above = self._sf(np.exp(mid)) > p
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        return np.exp(hi)


@dataclass(frozen=True)
class HallWelshMargin(_BisectMargin):
    """F(x) = x^-a (1 + x^rho) / 2 for x >= 1."""

    alpha: float
    rho: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not self.rho < 0:
            raise ParameterError("Hall-Welsh margin needs rho < 0")

    def _sf(self, x):
        xx = np.maximum(x, 1.0)
        return np.where(x < 1, 1.0, 0.5 * xx ** (-self.alpha) * (1 + xx**self.rho))

    def _pdf(self, x):
        a, r = self.alpha, self.rho
        xx = np.maximum(x, 1.0)
        return np.where(x < 1, 0.0, 0.5 * (a * xx ** (-a - 1) + (a - r) * xx ** (r - a - 1)))


@dataclass(frozen=True)
class _AxisZ1(_BisectMargin):
    alpha: float = 2.0

    def _sf(self, x):
        xx = np.maximum(x, 1.0)
        return np.where(x < 1, 1.0, 0.5 * xx**-2.0 * (1 + 1 / xx))

    def _pdf(self, x):
        xx = np.maximum(x, 1.0)
        return np.where(x < 1, 0.0, xx**-3.0 + 1.5 * xx**-4.0)


@dataclass(frozen=True)
class _AxisZ2(_BisectMargin):
    alpha: float = 2.0

    def _sf(self, x):
        xx = np.maximum(x, 1.0)
        return np.where(x < 1, 1.0, xx**-2.0 * (1 - 0.5 / xx + 0.5 / xx**2))

    def _pdf(self, x):
        xx = np.maximum(x, 1.0)
        return np.where(x < 1, 0.0, 2 * xx**-3.0 - 1.5 * xx**-4.0 + 2 * xx**-5.0)


@dataclass(frozen=True)
class AxisMargin(_Margin):
    """Margin of one coordinate of ``AxisMixture``: 0 w.p. 1/2, else the axis variable."""

    axis: int
    alpha: float = 2.0
    floor = 0.0

    def _z(self):
        return _AxisZ1() if self.axis == 0 else _AxisZ2()

    def _sf(self, x):
        return np.where(x <= 0, 1.0, 0.5 * self._z()._sf(x))

    def _isf(self, p):
        p = np.asarray(p, dtype=float)
        q = self._z()._isf(np.minimum(2 * p, 1.0))
        return np.where(p >= 0.5, 0.0, q)

    def _pdf(self, x):
        return 0.5 * self._z()._pdf(x)


@dataclass(frozen=True)
class HrvMargin(MixtureB):
    """Coordinate of ``HrvMixture``: atom 1/4 at 0, ``MixtureB`` tail above 1."""

    alpha: float
    floor = 0.0

    def _sf(self, x):
        return np.where(x <= 0, 1.0, np.where(x < 1, 0.75, MixtureB._sf(self, x)))

    def _isf(self, p):
        p = np.asarray(p, dtype=float)
        return np.where(p >= 0.75, 0.0, MixtureB._isf(self, np.minimum(p, 0.5)))


# ---------------------------------------------------------------------------
# model variants


@dataclass(frozen=True)
class SurvClaytonLomax:
    alpha: float
    theta: float
    d: int = field(default=2, init=False)
    name = "surv_clayton_lomax"
    floor = 0.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not (np.isfinite(self.theta) and self.theta > 0):
            raise ParameterError(f"Clayton parameter theta must be > 0, got {self.theta!r}")

    def margin(self, i: int = 0) -> MarginFamily:
        return ParetoLomax(self.alpha)

    @property
    def unit_product(self) -> bool:
        return math.isclose(self.alpha * self.theta, 1.0, rel_tol=1e-12)


@dataclass(frozen=True)
class SurvClaytonParetoOne:
    alpha: float
    d: int = field(default=2, init=False)
    name = "surv_clayton_pareto1"
    floor = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def theta(self) -> float:
        return 1.0 / self.alpha

    def margin(self, i: int = 0) -> MarginFamily:
        return ParetoOne(self.alpha)


@dataclass(frozen=True)
class HrvMixture:
    alpha: float
    d: int = field(default=2, init=False)
    name = "hrv_mixture"
    floor = 0.0

    def __post_init__(self):
        _check_alpha(self.alpha)

    def margin(self, i: int = 0) -> MarginFamily:
        return HrvMargin(self.alpha)


@dataclass(frozen=True)
class IidRV:
    margin_family: MarginFamily
    d: int = 2
    name = "iid"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError("dimension d must be a positive integer")

    @property
    def alpha(self) -> float:
        return self.margin_family.alpha

    @property
    def floor(self) -> float:
        return self.margin_family.floor

    def margin(self, i: int = 0):
        return self.margin_family


@dataclass(frozen=True)
class HallWelshIid:
    alpha: float
    rho: float
    d: int = field(default=2, init=False)
    name = "hall_welsh"
    floor = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not self.rho < 0:
            raise ParameterError("Hall-Welsh model needs rho < 0")

    def margin(self, i: int = 0):
        return HallWelshMargin(self.alpha, self.rho)


@dataclass(frozen=True)
class AxisMixture:
    """Negative-test fixture: realizations on the two axes, margins differ."""

    d: int = field(default=2, init=False)
    alpha = 2.0
    rho = -1.0
    name = "axis_mixture"
    floor = 0.0

    def margin(self, i: int = 0):
        return AxisMargin(axis=i)


ModelSpec = Union[SurvClaytonLomax, SurvClaytonParetoOne, HrvMixture, IidRV, HallWelshIid, AxisMixture]


def identical_margins(model: ModelSpec) -> bool:
    return all(model.margin(i) == model.margin(0) for i in range(model.d))


# ---------------------------------------------------------------------------
# joint tails


def _clayton(u1, u2, theta):
    return (u1 ** (-theta) + u2 ** (-theta) - 1.0) ** (-1.0 / theta)


def _joint_sf(model: ModelSpec, x: np.ndarray) -> np.ndarray:
    """P(X_i > x_i for every coordinate with x_i > floor); x has shape (..., d)."""
    free = x <= model.floor
    if isinstance(model, (SurvClaytonLomax, SurvClaytonParetoOne)):
        m = model.margin()
        u = np.where(free, 1.0, m._sf(np.maximum(x, m.floor)))
        return _clayton(u[..., 0], u[..., 1], model.theta)
    if isinstance(model, (IidRV, HallWelshIid)):
        m = model.margin()
        u = np.where(free, 1.0, m._sf(np.maximum(x, m.floor)))
        return np.prod(u, axis=-1)
    if isinstance(model, HrvMixture):
        a = model.alpha
        hi = np.max(np.where(free, -np.inf, x), axis=-1)
        n_con = np.sum(~free, axis=-1)
        diag = 0.5 * np.minimum(1.0, np.maximum(hi, 1.0) ** (-2 * a))
        axis_part = 0.25 * np.minimum(1.0, np.maximum(hi, 1.0) ** (-a))
        return np.where(n_con == 0, 1.0, np.where(n_con == 1, axis_part + diag, diag))
    if isinstance(model, AxisMixture):
        s1 = model.margin(0)._sf(np.maximum(x[..., 0], 0.0))
        s2 = model.margin(1)._sf(np.maximum(x[..., 1], 0.0))
        return np.where(free[..., 0] & free[..., 1], 1.0,
                        np.where(free[..., 1], s1, np.where(free[..., 0], s2, 0.0)))
    raise CapabilityError(f"unknown model {model!r}")


def _coerce_point(model, x):
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (model.d,):
        raise ShapeError(f"expected trailing dimension {model.d}, got shape {arr.shape}")
    if np.any(np.isnan(arr)):
        raise DomainError("x must not contain NaN")
    return arr


def joint_survival(model: ModelSpec, x) -> Union[float, np.ndarray]:
    """Joint exceedance probability P(X_1 > x_1, ..., X_d > x_d).

    Coordinates at or below the model's support floor are clamped to it and
    impose no constraint, so ``joint_survival(model, (x, floor))`` is the
    marginal survival of the first coordinate.
    """
    arr = _coerce_point(model, x)
    out = _joint_sf(model, arr)
    return float(out) if arr.ndim == 1 else out


def box_complement_prob(model: ModelSpec, x) -> Union[float, np.ndarray]:
    """P(X not in [0, x]) = P(X_i > x_i for some i), by inclusion-exclusion."""
    arr = _coerce_point(model, x)
    d = model.d
    total = np.zeros(arr.shape[:-1])
    for r in range(1, d + 1):
        for idx in itertools.combinations(range(d), r):
            sub = np.full_like(arr, -np.inf)
            sub[..., list(idx)] = arr[..., list(idx)]
            total = total + (-1) ** (r + 1) * _joint_sf(model, sub)
    return float(total) if arr.ndim == 1 else total


# ---------------------------------------------------------------------------
# sum tails


def sum_floor(model: ModelSpec) -> float:
    """Largest s with P(S_d > s) = 1 (the left end of the sum's tail)."""
    if isinstance(model, HrvMixture):
        return 1.0
    return model.d * model.floor


def sum_tail_method(model: ModelSpec) -> str:
    """``"closed-form"`` or ``"quadrature"``, the route used by :func:`sum_tail_exact`."""
    if isinstance(model, SurvClaytonParetoOne) or isinstance(model, (HrvMixture, AxisMixture)):
        return "closed-form"
    if isinstance(model, SurvClaytonLomax):
        return "closed-form" if model.unit_product else "quadrature"
    if isinstance(model, IidRV) and model.d == 1:
        return "closed-form"
    if isinstance(model, (IidRV, HallWelshIid)) and model.d == 2:
        return "quadrature"
    raise CapabilityError(f"no exact sum tail for {model.name} with d={model.d}")


def _sum_tail_by_conditioning(model, s):
    """P(X1 + X2 > s) = P(X1 > s - f2) + int f1(x) P(X2 > s - x | X1 = x) dx."""
    m = model.margin()
    lo, f2 = m.floor, m.floor
    hi = s - f2
    if hi <= lo:
        return 1.0
    if isinstance(model, SurvClaytonLomax):
        th = model.theta

        def cond(x1, y):
            u1 = m._sf(x1)
            u2 = m._sf(max(y, f2))
            return (u1 ** (-th) + u2 ** (-th) - 1) ** (-1 / th - 1) * u1 ** (-th - 1)
    else:

        def cond(x1, y):
            return m._sf(max(y, f2))

    def integrand(x1):
        return float(m._pdf(x1) * cond(x1, s - x1))

    mid = 0.5 * (lo + hi)
    # breakpoints cluster near both ends where the integrand varies on an O(1) scale
    offsets = [o for o in (0.25, 1.0, 4.0, 16.0, 64.0) if lo + o < mid]
    left = [lo] + [lo + o for o in offsets] + [mid]
    right = [mid] + [hi - o for o in reversed(offsets)] + [hi]
    total = float(m._sf(np.asarray(hi)))
    with warnings.catch_warnings():
        # epsrel=1e-13 sits at the roundoff floor; quad warns even when the panel has converged
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in itertools.chain(zip(left[:-1], left[1:]), zip(right[:-1], right[1:])):
            val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
            total += val
    if isinstance(m, MixtureB):
        # atom of mass 1/4 at x1 = 1
        total += 0.25 * float(cond(1.0, s - 1.0))
    return total


def sum_tail_exact(model: ModelSpec, s: float) -> float:
    """Exact P(S_d > s) for the sum of the coordinates."""
    s = float(s)
    if not np.isfinite(s):
        raise DomainError("s must be finite")
    method = sum_tail_method(model)
    if s <= sum_floor(model):
        return 1.0
    if isinstance(model, SurvClaytonParetoOne):
        a, m = model.alpha, s - 1.0
        return (a + 1) * m ** (-a) - a * m ** (-a - 1)
    if isinstance(model, SurvClaytonLomax) and method == "closed-form":
        a, m = model.alpha, 1.0 + s
        return (a + 1) * m ** (-a) - a * m ** (-a - 1)
    if isinstance(model, HrvMixture):
        a = model.alpha
        if s < 2:
            return 0.5 * s ** (-a) + 0.5
        return 0.5 * s ** (-a) + 2 ** (2 * a - 1) * s ** (-2 * a)
    if isinstance(model, AxisMixture):
        return float(model.margin(0)._sf(np.asarray(s)) + model.margin(1)._sf(np.asarray(s)))
    if isinstance(model, IidRV) and model.d == 1:
        return float(model.margin()._sf(np.asarray(s)))
    return _sum_tail_by_conditioning(model, s)


def sum_quantile_exact(model: ModelSpec, p: float) -> float:
    """The s with ``sum_tail_exact(model, s) = p`` (relative tolerance 1e-13)."""
    p = float(p)
    if not 0 < p < 1:
        raise DomainError("tail level p must lie in (0, 1)")
    lo = sum_floor(model)
    if isinstance(model, HrvMixture):
        a = model.alpha
        if p > sum_tail_exact(model, 2.0):
            if p <= 0.5:
                raise DomainError("level not attained by the sum")
            return (2 * p - 1) ** (-1 / a)
        qa, qb = 2 ** (2 * a - 1), 0.5
        w = 2 * p / (qb + math.sqrt(qb * qb + 4 * qa * p))
        return w ** (-1 / a)
    if isinstance(model, IidRV) and model.d == 1:
        return float(model.margin().quantile(p))
    if p >= sum_tail_exact(model, lo + 1e-12 * max(1.0, lo)):
        raise DomainError(f"level {p} is not below the tail at the support floor")
    step = max(1.0, lo)
    hi = lo + step
    for _ in range(2000):
        if sum_tail_exact(model, hi) < p:
            break
        hi = lo + 2 * (hi - lo)
    else:
        raise DomainError("no bracket found for the sum quantile")
    return optimize.brentq(lambda s: sum_tail_exact(model, s) - p, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=500)


# ---------------------------------------------------------------------------
# sampling


def chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    """Counter-based stream for one chunk: Philox keyed by the seed, counter offset by chunk."""
    key = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, chunk]))


def _uniform_open(rng, size):
    # (0, 1]: quantile functions are finite there
    return 1.0 - rng.random(size)


def _draw(model: ModelSpec, rng: np.random.Generator, m: int) -> np.ndarray:
    if isinstance(model, (SurvClaytonLomax, SurvClaytonParetoOne)):
        th = model.theta
        g = rng.gamma(1.0 / th, size=(m, 1))
        e = rng.standard_exponential(size=(m, 2))
        w = np.exp(-np.log1p(e / g) / th)
        w = np.clip(w, np.finfo(float).tiny, 1.0)
        return model.margin()._isf(w)
    if isinstance(model, HrvMixture):
        a = model.alpha
        b1 = rng.random(m) < 0.5
        b2 = rng.random(m) < 0.5
        xi = _uniform_open(rng, m) ** (-1 / a)
        v = _uniform_open(rng, m) ** (-1 / (2 * a))
        out = np.empty((m, 2))
        out[:, 0] = np.where(b1, np.where(b2, xi, 0.0), v)
        out[:, 1] = np.where(b1, np.where(b2, 0.0, xi), v)
        return out
    if isinstance(model, (IidRV, HallWelshIid)):
        return model.margin()._isf(_uniform_open(rng, (m, model.d)))
    if isinstance(model, AxisMixture):
        b = rng.random(m) < 0.5
        z1 = _AxisZ1()._isf(_uniform_open(rng, m))
        z2 = _AxisZ2()._isf(_uniform_open(rng, m))
        return np.column_stack([np.where(b, z1, 0.0), np.where(b, 0.0, z2)])
    raise CapabilityError(f"no sampler for {model!r}")


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.environ.get("HEAVYTAIL_DIV_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


@dataclass(frozen=True)
class SampleMatrix:
    values: np.ndarray
    seed: int
    model: ModelSpec

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def sums(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(self.d)])
            for row in self.values:
                w.writerow([f"{v:.17g}" for v in row])

    def metadata(self) -> dict:
        return {
            "model": model_to_dict(self.model),
            "n": self.n,
            "seed": self.seed,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }

    def write(self, csv_path, meta_path) -> None:
        self.to_csv(csv_path)
        with open(meta_path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


def _check_run(n, seed):
    if int(n) != n or n < 0:
        raise ParameterError("n must be a non-negative integer")
    if int(n) == 0:
        raise DomainError("cannot build an empty sample matrix (n = 0)")
    if int(seed) != seed or not 0 <= seed < _SEED_MAX:
        raise ParameterError("seed must be an integer in [0, 2^64)")
    return int(n), int(seed)


def chunk_sizes(n: int):
    return [min(CHUNK_ROWS, n - i * CHUNK_ROWS) for i in range((n + CHUNK_ROWS - 1) // CHUNK_ROWS)]


def iter_chunks(model: ModelSpec, n: int, seed: int, threads: Optional[int] = None):
    """Yield the row blocks of ``sample(model, n, seed)`` in order without holding them all."""
    n, seed = _check_run(n, seed)
    sizes = chunk_sizes(n)

    def work(i):
        return _draw(model, chunk_generator(seed, i), sizes[i])

    workers = resolve_threads(threads)
    if workers == 1 or len(sizes) == 1:
        for i in range(len(sizes)):
            yield work(i)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, len(sizes), 4 * workers):
            yield from pool.map(work, range(start, min(start + 4 * workers, len(sizes))))


def sample(model: ModelSpec, n: int, seed: int, threads: Optional[int] = None) -> SampleMatrix:
    """Draw ``n`` iid rows from ``model``; bit-identical for fixed (model, n, seed)."""
    n, seed = _check_run(n, seed)
    values = np.ascontiguousarray(np.concatenate(list(iter_chunks(model, n, seed, threads)), axis=0))
    values.setflags(write=False)
    return SampleMatrix(values=values, seed=seed, model=model)


# ---------------------------------------------------------------------------
# (de)serialization


def model_to_dict(model: ModelSpec) -> dict:
    if isinstance(model, SurvClaytonLomax):
        return {"name": model.name, "alpha": model.alpha, "theta": model.theta}
    if isinstance(model, (SurvClaytonParetoOne, HrvMixture)):
        return {"name": model.name, "alpha": model.alpha}
    if isinstance(model, HallWelshIid):
        return {"name": model.name, "alpha": model.alpha, "rho": model.rho}
    if isinstance(model, IidRV):
        fam = {v: k for k, v in margin_families().items()}[type(model.margin_family)]
        return {"name": model.name, "margin": fam, "alpha": model.alpha, "d": model.d}
    return {"name": model.name}


def margin_families() -> dict:
    from .tails import MixtureA

    return {"pareto_lomax": ParetoLomax, "pareto1": ParetoOne, "mixture_a": MixtureA, "mixture_b": MixtureB}


def model_from_dict(spec: dict) -> ModelSpec:
    """Inverse of :func:`model_to_dict`; raises ``ParameterError`` on unknown names or keys."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise ParameterError("model must be an object with a 'name'")
    name = spec["name"]
    params = {k: v for k, v in spec.items() if k != "name"}
    allowed = {
        "surv_clayton_lomax": {"alpha", "theta"},
        "surv_clayton_pareto1": {"alpha"},
        "hrv_mixture": {"alpha"},
        "iid": {"margin", "alpha", "d"},
        "hall_welsh": {"alpha", "rho"},
        "axis_mixture": set(),
    }
    if name not in allowed:
        raise ParameterError(f"unknown model name {name!r}; expected one of {sorted(allowed)}")
    extra = set(params) - allowed[name]
    if extra:
        raise ParameterError(f"unexpected parameters for {name}: {sorted(extra)}")
    missing = allowed[name] - set(params) - {"d"}
    if missing:
        raise ParameterError(f"missing parameters for {name}: {sorted(missing)}")

    def num(key):
        v = params[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParameterError(f"{key} must be a number")
        return float(v)

    if name == "surv_clayton_lomax":
        return SurvClaytonLomax(num("alpha"), num("theta"))
    if name == "surv_clayton_pareto1":
        return SurvClaytonParetoOne(num("alpha"))
    if name == "hrv_mixture":
        return HrvMixture(num("alpha"))
    if name == "hall_welsh":
        return HallWelshIid(num("alpha"), num("rho"))
    if name == "axis_mixture":
        return AxisMixture()
    fams = margin_families()
    if params["margin"] not in fams:
        raise ParameterError(f"unknown margin {params['margin']!r}; expected one of {sorted(fams)}")
    d = params.get("d", 2)
    if isinstance(d, bool) or not isinstance(d, int):
        raise ParameterError("d must be an integer")
    return IidRV(fams[params["margin"]](num("alpha")), d)
