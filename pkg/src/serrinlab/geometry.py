"""Constant-curvature space forms written as warped products.

A space form of curvature ``k`` is modelled in geodesic polar coordinates
about a pole as ``g = dt^2 + h(t)^2 g_S``, with ``g_S`` the round metric of
the unit (n-1)-sphere and ``h`` one of ``t``, ``sin(sqrt(k) t)/sqrt(k)`` or
``sinh(sqrt(-k) t)/sqrt(-k)``.  Mean curvatures follow the trace convention
(sum of principal curvatures) throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .exceptions import DegenerateSphere, InadmissibleDomain

__all__ = [
    "SpaceForm",
    "Ball",
    "Annulus",
    "RadialDomain",
    "warp",
    "warp_deriv",
    "conformal_factor",
    "sphere_mean_curvature",
    "unit_sphere_area",
    "ball_measures",
    "gauss_legendre",
    "adaptive_gauss_legendre",
    "check_admissible",
]

GL_ORDER = 8
QUAD_TOL = 1e-12


def warp(k, t):
    """Warp function h(t) of the space form with curvature ``k``."""
    t = np.asarray(t, dtype=float)
    if k > 0:
        s = math.sqrt(k)
        out = np.sin(s * t) / s
    elif k < 0:
        s = math.sqrt(-k)
        out = np.sinh(s * t) / s
    else:
        out = t.copy()
    return out[()] if out.ndim == 0 else out


def warp_deriv(k, t):
    t = np.asarray(t, dtype=float)
    if k > 0:
        out = np.cos(math.sqrt(k) * t)
    elif k < 0:
        out = np.cosh(math.sqrt(-k) * t)
    else:
        out = np.ones_like(t)
    return out[()] if out.ndim == 0 else out


def warp_deriv2(k, t):
    # h'' = -k h on every branch
    return -k * warp(k, t)


def conformal_factor(k, t):
    """Factor phi = h' of the closed conformal field X = h d/dt."""
    return warp_deriv(k, t)


@dataclass(frozen=True)
class SpaceForm:
    n: int
    k: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not math.isfinite(float(self.k)):
            raise ValueError(f"curvature must be finite, got {self.k!r}")
        object.__setattr__(self, "k", float(self.k))

    @property
    def max_radius(self) -> float:
        """Radius bound for admissible domains (inf unless k > 0)."""
        return math.pi / math.sqrt(self.k) if self.k > 0 else math.inf

    def h(self, t):
        return warp(self.k, t)

    def dh(self, t):
        return warp_deriv(self.k, t)

    def ricci_constant(self) -> float:
        """Einstein constant (n-1)k, so that Ric = (n-1)k g holds identically."""
        return (self.n - 1) * self.k


@dataclass(frozen=True)
class Ball:
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise InadmissibleDomain(f"ball radius must be positive, got {self.R}")

    @property
    def outer(self) -> float:
        return self.R

    @property
    def inner(self) -> float:
        return 0.0

    @property
    def radii(self) -> tuple[float, ...]:
        return (self.R,)


@dataclass(frozen=True)
class Annulus:
    R_in: float
    R_out: float

    def __post_init__(self):
        if not self.R_in > 0:
            raise InadmissibleDomain(f"inner radius must be positive, got {self.R_in}")
        if not self.R_out > self.R_in:
            raise InadmissibleDomain(
                f"need R_in < R_out, got R_in={self.R_in}, R_out={self.R_out}"
            )

    @property
    def outer(self) -> float:
        return self.R_out

    @property
    def inner(self) -> float:
        return self.R_in

    @property
    def radii(self) -> tuple[float, ...]:
        return (self.R_out, self.R_in)


RadialDomain = Union[Ball, Annulus]


def check_admissible(sf: SpaceForm, dom: RadialDomain) -> None:
    if dom.outer >= sf.max_radius:
        raise InadmissibleDomain(
            f"radius {dom.outer} exceeds the injectivity bound {sf.max_radius} for k={sf.k}"
        )


def sphere_mean_curvature(sf: SpaceForm, R: float) -> float:
    """Mean curvature (n-1) h'(R)/h(R) of the geodesic sphere of radius R.

    Computed with respect to the normal pointing away from the pole.
    """
    hR = float(sf.h(R))
    if R <= 0 or abs(hR) < 1e-300 or R >= sf.max_radius:
        raise DegenerateSphere(f"geodesic sphere of radius {R} is degenerate for k={sf.k}")
    return (sf.n - 1) * float(sf.dh(R)) / hR


def unit_sphere_area(m: int) -> float:
    """Area of the unit m-sphere S^m in R^(m+1)."""
    return 2.0 * math.pi ** ((m + 1) / 2.0) / math.gamma((m + 1) / 2.0)


@lru_cache(maxsize=None)
def _gl_rule(order: int):
    return np.polynomial.legendre.leggauss(order)


def gauss_legendre(func: Callable, a: float, b: float, panels: int = 1, order: int = GL_ORDER) -> float:
    """Composite Gauss-Legendre rule with ``panels`` equal panels on [a, b]."""
    x, w = _gl_rule(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return float(np.dot(wts, func(pts)))


def adaptive_gauss_legendre(
    func: Callable, a: float, b: float, tol: float = QUAD_TOL, order: int = GL_ORDER, max_panels: int = 1 << 14
) -> tuple[float, int]:
    """Double the panel count until two successive estimates agree to ``tol``.

    Returns the integral and the panel count used.
    """
    panels = 1
    prev = gauss_legendre(func, a, b, panels, order)
    while panels < max_panels:
        panels *= 2
        cur = gauss_legendre(func, a, b, panels, order)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur, panels
        prev = cur
    return prev, panels


def ball_measures(sf: SpaceForm, dom: RadialDomain) -> tuple[float, tuple[float, ...]]:
    """Volume of the domain and the area of each boundary sphere.

    Boundary areas are listed outer sphere first, then the inner sphere for
    annuli.
    """
    check_admissible(sf, dom)
    sigma = unit_sphere_area(sf.n - 1)
    vol, _ = adaptive_gauss_legendre(lambda t: sf.h(t) ** (sf.n - 1), dom.inner, dom.outer)
    areas = tuple(sigma * float(sf.h(R)) ** (sf.n - 1) for R in dom.radii)
    return sigma * vol, areas
