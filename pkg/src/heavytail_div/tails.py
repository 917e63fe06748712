"""Univariate margin families and their second-order tail descriptors.

Four families are supported, all with closed-form survival and quantile
functions:

* ``ParetoLomax``   F(x) = (1+x)^-a,               x > 0
* ``ParetoOne``     F(x) = x^-a,                   x >= 1
* ``MixtureA``      F(x) = (x^-a + x^-2a) / 2,     x >= 1
* ``MixtureB``      F(x) = x^-a / 4 + x^-2a / 2,   x >= 1

(F denotes the survival function.)  ``MixtureB`` has an atom of mass 1/4 at
the support floor; its survival jumps from 1 to 3/4 at x = 1.

Every function accepts scalars or numpy arrays and returns the same kind.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import DomainError, ParameterError

ArrayLike = Union[float, np.ndarray]

__all__ = [
    "ParetoLomax",
    "ParetoOne",
    "MixtureA",
    "MixtureB",
    "MarginFamily",
    "SecondOrderTail",
    "survival",
    "quantile",
    "density",
    "scaling_b",
    "second_order_h",
    "vervaat_quantile_limit",
    "second_order_prelimit",
    "vervaat_prelimit",
]


def _check_alpha(alpha):
    if not (np.isfinite(alpha) and alpha > 0):
        raise ParameterError(f"tail index must be finite and > 0, got {alpha!r}")


def _as_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite")
    return arr


def _ret(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class SecondOrderTail:
    """Second-order regular variation descriptor of a univariate tail.

    ``b`` is the scaling (quantile) function, ``A`` the auxiliary function and
    ``c`` the constant in the limit ``c x^-alpha (x^rho - 1)/rho``.  Margins
    that are regularly varying but not second-order regularly varying carry
    ``is_2rv=False`` with ``A`` and ``c`` unset.
    """

    alpha: float
    rho: float
    b: Callable[[ArrayLike], ArrayLike]
    A: Optional[Callable[[ArrayLike], ArrayLike]]
    c: Optional[float]
    is_2rv: bool = True

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.rho > 0:
            raise ParameterError("second-order index rho must be <= 0")
        if self.is_2rv and (self.c is None or self.c == 0 or self.A is None):
            raise ParameterError("a 2RV tail needs a nonzero constant c and an auxiliary A")


class _Margin:
    alpha: float
    floor: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)

    def _check_x(self, x):
        arr = _as_array(x)
        if np.any(arr < 0):
            raise DomainError("survival is defined for x >= 0")
        return arr

    def survival(self, x: ArrayLike) -> ArrayLike:
        arr = self._check_x(x)
        return _ret(self._sf(arr), x)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        arr = _as_array(p, "p")
        if np.any((arr <= 0) | (arr > 1)):
            raise DomainError("quantile level must lie in (0, 1]")
        return _ret(self._isf(arr), p)

    def density(self, x: ArrayLike) -> ArrayLike:
        """Density of the absolutely continuous part (atoms are ignored)."""
        arr = self._check_x(x)
        return _ret(self._pdf(arr), x)

    def scaling_b(self, t: ArrayLike) -> ArrayLike:
        arr = _as_array(t, "t")
        if np.any(arr <= 1):
            raise DomainError("scaling function needs t > 1")
        return _ret(self._isf(1.0 / arr), t)


@dataclass(frozen=True)
class ParetoLomax(_Margin):
    alpha: float
    floor = 0.0

    def _sf(self, x):
        return np.exp(-self.alpha * np.log1p(x))

    def _isf(self, p):
        return np.expm1(-np.log(p) / self.alpha)

    def _pdf(self, x):
        return self.alpha * np.exp(-(self.alpha + 1) * np.log1p(x))

    def second_order(self) -> SecondOrderTail:
        return SecondOrderTail(
            alpha=self.alpha,
            rho=-1.0,
            b=self.scaling_b,
            A=lambda t: 1.0 / (1.0 + np.asarray(t, dtype=float)),
            c=self.alpha,
        )


@dataclass(frozen=True)
class ParetoOne(_Margin):
    alpha: float

    def _sf(self, x):
        return np.where(x < 1, 1.0, np.power(np.maximum(x, 1.0), -self.alpha))

    def _isf(self, p):
        return np.power(p, -1.0 / self.alpha)

    def _pdf(self, x):
        return np.where(x < 1, 0.0, self.alpha * np.power(np.maximum(x, 1.0), -self.alpha - 1))

    def second_order(self) -> SecondOrderTail:
        # exactly Pareto: no second-order term
        return SecondOrderTail(alpha=self.alpha, rho=-self.alpha, b=self.scaling_b, A=None, c=None, is_2rv=False)


@dataclass(frozen=True)
class MixtureA(_Margin):
    alpha: float

    def _sf(self, x):
        y = np.power(np.maximum(x, 1.0), -self.alpha)
        return np.where(x < 1, 1.0, 0.5 * (y + y * y))

    def _isf(self, p):
        # positive root of y^2 + y - 2p = 0, written without cancellation
        y = 4.0 * p / (1.0 + np.sqrt(1.0 + 8.0 * p))
        return np.maximum(np.power(y, -1.0 / self.alpha), 1.0)

    def _pdf(self, x):
        a = self.alpha
        xx = np.maximum(x, 1.0)
        return np.where(x < 1, 0.0, 0.5 * (a * xx ** (-a - 1) + 2 * a * xx ** (-2 * a - 1)))

    def second_order(self) -> SecondOrderTail:
        a = self.alpha
        return SecondOrderTail(
            alpha=a, rho=-a, b=self.scaling_b, A=lambda t: np.power(np.asarray(t, dtype=float), -a), c=-a
        )


@dataclass(frozen=True)
class MixtureB(_Margin):
    alpha: float

    def _sf(self, x):
        y = np.power(np.maximum(x, 1.0), -self.alpha)
        return np.where(x < 1, 1.0, 0.25 * y + 0.5 * y * y)

    def _isf(self, p):
        # positive root of 2y^2 + y - 4p = 0; levels >= 3/4 fall on the atom at 1
        y = 8.0 * p / (1.0 + np.sqrt(1.0 + 32.0 * p))
        return np.where(p >= 0.75, 1.0, np.maximum(np.power(y, -1.0 / self.alpha), 1.0))

    def _pdf(self, x):
        a = self.alpha
        xx = np.maximum(x, 1.0)
        return np.where(x <= 1, 0.0, 0.25 * a * xx ** (-a - 1) + a * xx ** (-2 * a - 1))

    def second_order(self) -> SecondOrderTail:
        a = self.alpha
        return SecondOrderTail(
            alpha=a, rho=-a, b=self.scaling_b, A=lambda t: 2.0 * np.power(np.asarray(t, dtype=float), -a), c=-a
        )


MarginFamily = Union[ParetoLomax, ParetoOne, MixtureA, MixtureB]


def survival(margin: MarginFamily, x: ArrayLike) -> ArrayLike:
    return margin.survival(x)


def quantile(margin: MarginFamily, p: ArrayLike) -> ArrayLike:
    """Left-continuous inverse of the survival function: inf{x : F(x) <= p}."""
    return margin.quantile(p)


def density(margin: MarginFamily, x: ArrayLike) -> ArrayLike:
    return margin.density(x)


def scaling_b(margin: MarginFamily, t: ArrayLike) -> ArrayLike:
    """``quantile(margin, 1/t)`` for t > 1."""
    return margin.scaling_b(t)


def second_order_h(tail: SecondOrderTail, x: ArrayLike) -> ArrayLike:
    """The second-order limit ``c x^-alpha (x^rho - 1)/rho`` (``c log x`` at rho = 0)."""
    if tail.c is None:
        raise DomainError("tail has no second-order constant")
    arr = _as_array(x)
    if np.any(arr <= 0):
        raise DomainError("x must be > 0")
    a, r, c = tail.alpha, tail.rho, tail.c
    if r == 0:
        out = c * np.log(arr)
    else:
        out = c * arr ** (-a) * np.expm1(r * np.log(arr)) / r
    return _ret(out, x)


def vervaat_quantile_limit(tail: SecondOrderTail, x: ArrayLike) -> ArrayLike:
    """Second-order limit of the normalized quantile, ``c/(a r) x^(-1/a) (x^(-r/a) - 1)``.

    At rho = 0 the continuous extension ``-c/a^2 x^(-1/a) log x`` is returned.
    """
    if tail.c is None:
        raise DomainError("tail has no second-order constant")
    arr = _as_array(x)
    if np.any(arr <= 0):
        raise DomainError("x must be > 0")
    a, r, c = tail.alpha, tail.rho, tail.c
    if r == 0:
        out = -c / a**2 * arr ** (-1 / a) * np.log(arr)
    else:
        out = c / (a * r) * arr ** (-1 / a) * np.expm1(-r / a * np.log(arr))
    return _ret(out, x)


def second_order_prelimit(margin: MarginFamily, t: float, x: ArrayLike) -> ArrayLike:
    """Finite-t value of ``(t F(b(t) x) - x^-alpha) / A(b(t))``.

    Each family is rearranged so that the difference is formed analytically
    rather than by subtracting two nearly equal floats.
    """
    tail = margin.second_order()
    if not tail.is_2rv:
        raise DomainError(f"{type(margin).__name__} margin is not second-order regularly varying")
    arr = _as_array(x)
    a = margin.alpha
    if isinstance(margin, ParetoLomax):
        # 1 + b x = x t^(1/a) (1 + (1-x)/(x t^(1/a)))
        s = t ** (1 / a)
        diff = arr ** (-a) * np.expm1(-a * np.log1p((1 - arr) / (arr * s)))
        out = diff / tail.A(margin.scaling_b(t))
    else:
        # with y = b(t)^-a the level identity gives t = 1/F(b(t)) in closed form
        b = float(margin.scaling_b(t))
        # the closed form needs b(t) x above the support floor
        if b <= 1 or np.any(b * arr < 1):
            raise DomainError("t too small for the closed-form rearrangement")
        y = b ** (-a)
        if isinstance(margin, MixtureA):
            out = arr ** (-a) * (arr ** (-a) - 1) / (1 + y)
        else:
            out = arr ** (-a) * (arr ** (-a) - 1) / (1 + 2 * y)
    return _ret(out, x)


def vervaat_prelimit(margin: MarginFamily, gamma: float, x: ArrayLike) -> ArrayLike:
    """Finite-gamma value of ``(Q(gamma x)/b(1/gamma) - x^(-1/alpha)) / A(b(1/gamma))``."""
    tail = margin.second_order()
    if not tail.is_2rv:
        raise DomainError(f"{type(margin).__name__} margin is not second-order regularly varying")
    arr = _as_array(x)
    a = margin.alpha
    b = margin.scaling_b(1.0 / gamma)
    out = (margin.quantile(gamma * arr) / b - arr ** (-1 / a)) / tail.A(b)
    return _ret(out, x)
