"""Star-shaped boundary curves r = r(theta) in a geodesic polar chart."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import warp, warp_deriv


@dataclass(frozen=True)
class FourierCurve:
    """r(theta) = a0 + sum_m (cos[m-1] cos(m theta) + sin[m-1] sin(m theta))."""

    a0: float
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(c) for c in self.sin))
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")

    @classmethod
    def circle(cls, R: float) -> "FourierCurve":
        return cls(R)

    @property
    def modes(self) -> int:
        return max(len(self.cos), len(self.sin))

    def _terms(self, theta, order):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta) + (self.a0 if order == 0 else 0.0)
        for m in range(1, self.modes + 1):
            a = self.cos[m - 1] if m <= len(self.cos) else 0.0
            b = self.sin[m - 1] if m <= len(self.sin) else 0.0
            c, s = np.cos(m * theta), np.sin(m * theta)
            # derivative of order j multiplies by m^j and rotates (cos, sin)
            if order == 0:
                out = out + a * c + b * s
            elif order == 1:
                out = out + m * (-a * s + b * c)
            elif order == 2:
                out = out - m * m * (a * c + b * s)
            else:
                raise ValueError(order)
        return out

    def r(self, theta):
        return self._terms(theta, 0)

    def dr(self, theta):
        return self._terms(theta, 1)

    def d2r(self, theta):
        return self._terms(theta, 2)

    def is_circle(self) -> bool:
        return not any(self.cos) and not any(self.sin)

    def bounds(self, samples: int = 4096) -> tuple[float, float]:
        r = self.r(np.linspace(0.0, 2 * math.pi, samples, endpoint=False))
        return float(r.min()), float(r.max())

    def scaled(self, lam: float) -> "FourierCurve":
        return FourierCurve(lam * self.a0, tuple(lam * c for c in self.cos), tuple(lam * s for s in self.sin))

    def rotated(self, theta0: float) -> "FourierCurve":
        """The curve r(theta - theta0)."""
        cs, sn = [], []
        for m in range(1, self.modes + 1):
            a = self.cos[m - 1] if m <= len(self.cos) else 0.0
            b = self.sin[m - 1] if m <= len(self.sin) else 0.0
            c, s = math.cos(m * theta0), math.sin(m * theta0)
            cs.append(a * c - b * s)
            sn.append(a * s + b * c)
        return FourierCurve(self.a0, tuple(cs), tuple(sn))

    def speed(self, k: float, theta):
        """Metric arclength density ds/dtheta = sqrt(r'^2 + h(r)^2)."""
        r = self.r(theta)
        return np.hypot(self.dr(theta), warp(k, r))

    def geodesic_curvature(self, k: float, theta):
        """Geodesic curvature of the counter-clockwise curve in dr^2 + h(r)^2 dtheta^2.

        Positive when the curve bends towards the pole, e.g. h'(R)/h(R) on
        the circle r = R.
        """
        r = self.r(theta)
        r1, r2 = self.dr(theta), self.d2r(theta)
        h, hp = warp(k, r), warp_deriv(k, r)
        L2 = r1 * r1 + h * h
        return (2.0 * hp * r1 * r1 - h * r2 + hp * h * h) / L2**1.5

    def radial_normal_component(self, k: float, theta):
        """<d/dr, nu> for the normal pointing away from the pole: h / sqrt(r'^2 + h^2)."""
        r = self.r(theta)
        h = warp(k, r)
        return h / np.hypot(self.dr(theta), h)

    def to_dict(self) -> dict:
        return {"a0": self.a0, "cos": list(self.cos), "sin": list(self.sin)}
