"""Polynomial source terms f(u) = c0 + c1 u + ... + cd u^d."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial


@dataclass(frozen=True)
class Nonlinearity:
    coeffs: tuple[float, ...]
    _poly: Polynomial = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.coeffs))
        if not c or not all(np.isfinite(c)):
            raise ValueError(f"coefficients must be a non-empty list of finite reals, got {self.coeffs!r}")
        # drop trailing zeros so the degree is meaningful
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "_poly", Polynomial(c))

    @classmethod
    def linear_family(cls, n: int, k: float) -> "Nonlinearity":
        """f(u) = n + n k u, the source for which the rigid solutions are explicit."""
        return cls((float(n), float(n) * float(k)))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def f0(self) -> float:
        return self.coeffs[0]

    def __call__(self, u):
        return self._poly(u)

    def deriv(self, u):
        return self._poly.deriv()(u)

    def antideriv(self, u):
        """F(u) = integral of f from 0 to u."""
        return self._poly.integ(lbnd=0.0)(u)

    def is_linear_family(self, n: int, k: float, atol: float = 1e-12) -> bool:
        ref = (float(n), float(n) * float(k))
        c = self.coeffs + (0.0,) * max(0, 2 - len(self.coeffs))
        return self.degree <= 1 and abs(c[0] - ref[0]) <= atol and abs(c[1] - ref[1]) <= atol

    def nonlinear_part(self) -> tuple[float, ...]:
        return self.coeffs[2:]

    def scaled_nonlinear(self, s: float) -> "Nonlinearity":
        """Copy with every coefficient of degree >= 2 multiplied by ``s``."""
        c = list(self.coeffs)
        for i in range(2, len(c)):
            c[i] *= s
        return Nonlinearity(tuple(c))

    def max_deriv(self, lo: float, hi: float) -> float:
        """Exact supremum of f' over [lo, hi]."""
        if hi < lo:
            lo, hi = hi, lo
        d = self._poly.deriv()
        cand = [lo, hi]
        if d.degree() >= 1:
            for z in d.deriv().roots():
                if abs(z.imag) < 1e-12 and lo <= z.real <= hi:
                    cand.append(z.real)
        return float(max(d(x) for x in cand))

    def fprime_bounded(self, k: float, n: int, u_range: tuple[float, float], atol: float = 1e-12) -> bool:
        """Whether sup f' <= n k holds over ``u_range``."""
        return self.max_deriv(*u_range) <= n * k + atol

    def to_dict(self) -> dict:
        return {"coeffs": list(self.coeffs)}
