"""Radial reduction of Delta u = -f(u) on geodesic balls and annuli.

For a radial function the Laplace-Beltrami operator of a space form reads
``u'' + (n-1) h'/h u'``.  The default discretisation collocates the equation
at Chebyshev points with the second derivative ``w = u''`` as unknown and
recovers ``u'`` and ``u`` by spectral integration, which keeps the nodal
residual at round-off level even at several hundred points.  A second order
finite-difference scheme on a uniform grid is available for comparison.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.fft
from numpy.polynomial import chebyshev as cheb
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateAnnulus, InadmissibleDomain, NonConvergence
from .geometry import (
    Annulus,
    Ball,
    RadialDomain,
    SpaceForm,
    check_admissible,
    sphere_mean_curvature,
    unit_sphere_area,
)
from .nonlinearity import Nonlinearity

logger = logging.getLogger(__name__)

__all__ = [
    "RadialBoundary",
    "RadialSolution",
    "ClosedFormLinear",
    "Theorem3Gate",
    "solve_radial",
    "closed_form_linear",
    "theorem3_gate",
    "RadialSerrinSolver",
]

GRIDS = ("chebyshev", "uniform")


# --- Chebyshev machinery -------------------------------------------------

def cheb_nodes(N: int) -> np.ndarray:
    """N+1 Chebyshev-Lobatto points on [-1, 1] in ascending order."""
    return -np.cos(np.pi * np.arange(N + 1) / N)


def cheb_coeffs(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients of the interpolant through ascending Lobatto values."""
    N = len(values) - 1
    c = scipy.fft.dct(np.asarray(values, dtype=float)[::-1], type=1) / N
    c[0] /= 2.0
    c[-1] /= 2.0
    return c


@lru_cache(maxsize=16)
def _cumint_matrix(N: int) -> np.ndarray:
    # (Q v)(x_i) = integral from -1 to x_i of the interpolant of v
    x = cheb_nodes(N)
    Q = np.empty((N + 1, N + 1))
    eye = np.eye(N + 1)
    for j in range(N + 1):
        Q[:, j] = cheb.chebval(x, cheb.chebint(cheb_coeffs(eye[:, j]), lbnd=-1))
    Q.setflags(write=False)
    return Q


# --- solution container --------------------------------------------------

@dataclass(frozen=True)
class RadialBoundary:
    """Trace data on one boundary sphere; u_nu and H use the outward normal of the domain."""

    label: str  # "outer" (Gamma_0) or "inner" (Gamma_1)
    radius: float
    value: float
    u_nu: float
    H: float
    area: float
    X_nu: float  # <h d/dt, nu>


@dataclass(frozen=True, eq=False)
class RadialSolution:
    sf: SpaceForm
    dom: RadialDomain
    f: Nonlinearity
    grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    boundary: tuple[RadialBoundary, ...]
    method: str = "chebyshev"
    inner_value: float = 0.0
    newton_trace: tuple[float, ...] = ()
    _coef: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("grid", "u", "du", "d2u"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def is_ball(self) -> bool:
        return isinstance(self.dom, Ball)

    @property
    def n(self) -> int:
        return self.sf.n

    def _x(self, r):
        lo, hi = self.dom.inner, self.dom.outer
        return (2.0 * np.asarray(r, dtype=float) - lo - hi) / (hi - lo)

    def __call__(self, r):
        """Evaluate u off the grid."""
        if self.method == "chebyshev" and self._coef is not None:
            return cheb.chebval(self._x(r), self._coef)
        return CubicSpline(self.grid, self.u)(r)

    def quadrature_weights(self) -> np.ndarray:
        """Weights w_j with sum_j w_j g(r_j) ~ integral of g dr over the radial extent."""
        if self.method == "chebyshev":
            L = self.dom.outer - self.dom.inner
            return _cumint_matrix(len(self.grid) - 1)[-1] * (L / 2.0)
        dr = np.diff(self.grid)
        w = np.zeros_like(self.grid)
        w[:-1] += dr / 2.0
        w[1:] += dr / 2.0
        return w

    def integrate(self, values) -> float:
        """Integral over the domain of a radial function given by its grid values."""
        vol_density = unit_sphere_area(self.n - 1) * self.sf.h(self.grid) ** (self.n - 1)
        return float(np.dot(self.quadrature_weights(), np.asarray(values) * vol_density))

    def derivative(self, values) -> np.ndarray:
        """d/dr of grid values (spectral on Chebyshev grids, second order otherwise)."""
        values = np.asarray(values, dtype=float)
        if self.method == "chebyshev":
            L = self.dom.outer - self.dom.inner
            x = cheb_nodes(len(values) - 1)
            return cheb.chebval(x, cheb.chebder(cheb_coeffs(values))) * (2.0 / L)
        return np.gradient(values, self.grid, edge_order=2)

    def warp_ratio(self) -> np.ndarray:
        """(n-1) h'/h on the grid, with 0 at the pole."""
        return _drift(self.sf, self.grid)

    def radial_laplacian(self, values, dvalues=None, d2values=None) -> np.ndarray:
        """Laplace-Beltrami of a radial function sampled on the grid."""
        dv = self.derivative(values) if dvalues is None else np.asarray(dvalues)
        d2v = self.derivative(dv) if d2values is None else np.asarray(d2values)
        out = d2v + self.warp_ratio() * dv
        if self.is_ball:
            out[0] = self.n * d2v[0]
        return out

    def pde_residual(self) -> np.ndarray:
        """u'' + (n-1)(h'/h) u' + f(u) at every grid point (pole uses the limit n u'')."""
        return self.radial_laplacian(self.u, self.du, self.d2u) + self.f(self.u)

    def divergence_defect(self) -> float:
        """Sum of boundary fluxes plus the integral of f(u); zero for exact solutions."""
        flux = sum(b.area * b.u_nu for b in self.boundary)
        return flux + self.integrate(self.f(self.u))

    def traceless_hessian_sq(self) -> np.ndarray:
        """|traceless Hessian|^2 = ((n-1)/n)(u'' - u' h'/h)^2, zero at the pole."""
        n = self.n
        ratio = self.warp_ratio() / (n - 1)
        tang = self.du * ratio
        if self.is_ball:
            tang[0] = self.d2u[0]
        return (n - 1) / n * (self.d2u - tang) ** 2

    def boundary_by_label(self, label: str) -> RadialBoundary:
        for b in self.boundary:
            if b.label == label:
                return b
        raise KeyError(label)

    def to_table(self) -> dict:
        return {"r": self.grid, "u": self.u, "du": self.du, "d2u": self.d2u}


def _drift(sf: SpaceForm, r: np.ndarray) -> np.ndarray:
    h = sf.h(r)
    out = np.zeros_like(r)
    mask = r > 0
    out[mask] = (sf.n - 1) * sf.dh(r[mask]) / h[mask]
    return out


def _boundaries(sf: SpaceForm, dom: RadialDomain, u0: float, du0: float, u1: float, du1: float):
    sigma = unit_sphere_area(sf.n - 1)
    R = dom.outer
    out = [
        RadialBoundary(
            "outer", R, u1, du1, sphere_mean_curvature(sf, R), sigma * float(sf.h(R)) ** (sf.n - 1), float(sf.h(R))
        )
    ]
    if isinstance(dom, Annulus):
        Ri = dom.inner
        out.append(
            RadialBoundary(
                "inner", Ri, u0, -du0, -sphere_mean_curvature(sf, Ri),
                sigma * float(sf.h(Ri)) ** (sf.n - 1), -float(sf.h(Ri)),
            )
        )
    return tuple(out)


# --- solvers ----------------------------------------------------------------

def _check_inputs(sf, dom, grid_size, grid):
    check_admissible(sf, dom)
    if grid not in GRIDS:
        raise ValueError(f"grid must be one of {GRIDS}, got {grid!r}")
    if int(grid_size) < 16:
        raise ValueError(f"grid_size must be >= 16, got {grid_size}")


def _newton(residual, jacobian, z, tol, max_iter, trace):
    F = residual(z)
    norm = np.linalg.norm(F, np.inf)
    trace.append(norm)
    for _ in range(max_iter):
        if norm <= tol:
            return z
        try:
            dz = np.linalg.solve(jacobian(z), -F)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(f"singular Jacobian: {exc}", trace) from exc
        lam = 1.0
        while lam >= 2.0 ** -12:
            z_new = z + lam * dz
            F_new = residual(z_new)
            norm_new = np.linalg.norm(F_new, np.inf)
            if np.isfinite(norm_new) and norm_new <= (1.0 - 1e-4 * lam) * norm:
                break
            lam /= 2.0
        else:
            if norm <= 1e3 * tol:
                return z
            raise NonConvergence(f"damped Newton stalled at residual {norm:.3e}", trace)
        z, F, norm = z_new, F_new, norm_new
        trace.append(norm)
    if norm <= tol:
        return z
    raise NonConvergence(f"Newton did not converge in {max_iter} iterations (residual {norm:.3e})", trace)


class _ChebyshevProblem:
    """Collocation in w = u'' with u, u' from spectral integration."""

    def __init__(self, sf, dom, f, a, N):
        self.sf, self.dom, self.f, self.a, self.N = sf, dom, f, a, N
        M = N + 1
        lo, hi = dom.inner, dom.outer
        L = hi - lo
        self.r = lo + (cheb_nodes(N) + 1.0) * L / 2.0
        Q = _cumint_matrix(N) * (L / 2.0)
        QQ = Q @ Q
        self.ball = isinstance(dom, Ball)
        c = _drift(sf, self.r)
        # u = U0 + B z ;  u' = Bd z ;  z = [w, alpha] for balls, [w, beta] for annuli
        extra = np.ones(M) if self.ball else (self.r - lo)
        self.B = np.hstack([QQ, extra[:, None]])
        self.Bd = np.hstack([Q, (np.zeros(M) if self.ball else np.ones(M))[:, None]])
        self.U0 = np.zeros(M) if self.ball else np.full(M, float(a))
        S = np.hstack([np.eye(M), np.zeros((M, 1))]) + c[:, None] * self.Bd
        if self.ball:
            S[0] = 0.0
            S[0, 0] = sf.n
        self.S = S
        self.M = M

    def unpack(self, z):
        u = self.U0 + self.B @ z
        # Dirichlet data exactly, not up to the round-off of the integration
        u[-1] = 0.0
        if not self.ball:
            u[0] = self.a
        return u, self.Bd @ z, z[: self.M]

    def residual(self, f):
        def F(z):
            u = self.U0 + self.B @ z
            return np.concatenate([self.S @ z + f(u), [u[-1]]])

        return F

    def jacobian(self, f):
        def J(z):
            u = self.U0 + self.B @ z
            top = self.S + f.deriv(u)[:, None] * self.B
            return np.vstack([top, self.B[-1]])

        return J

    def coefficients(self, z):
        lo, hi = self.dom.inner, self.dom.outer
        L = hi - lo
        wc = cheb_coeffs(z[: self.M])
        uc = cheb.chebint(cheb.chebint(wc, lbnd=-1) * (L / 2.0), lbnd=-1) * (L / 2.0)
        if self.ball:
            uc[0] += z[-1]
        else:
            uc[0] += self.a
            # beta (r - lo) = beta L/2 (x + 1)
            uc[0] += z[-1] * L / 2.0
            uc[1] += z[-1] * L / 2.0
        return uc


class _UniformProblem:
    """Second order central differences; the pole row uses the even extension u_{-1} = u_1."""

    def __init__(self, sf, dom, f, a, m):
        self.sf, self.dom, self.a = sf, dom, a
        self.r = np.linspace(dom.inner, dom.outer, m + 1)
        self.dr = self.r[1] - self.r[0]
        self.ball = isinstance(dom, Ball)
        self.c = _drift(sf, self.r)
        dr = self.dr
        M = m + 1
        A = np.zeros((M, M))
        j = np.arange(1, M - 1)
        A[j, j - 1] = 1 / dr**2 - self.c[j] / (2 * dr)
        A[j, j] = -2 / dr**2
        A[j, j + 1] = 1 / dr**2 + self.c[j] / (2 * dr)
        if self.ball:
            A[0, 0] = -2 * sf.n / dr**2
            A[0, 1] = 2 * sf.n / dr**2
        self.A = A
        self.M = M

    def residual(self, f):
        def F(u):
            out = self.A @ u + f(u)
            if not self.ball:
                out[0] = u[0] - self.a
            out[-1] = u[-1]
            return out

        return F

    def jacobian(self, f):
        def J(u):
            Jm = self.A + np.diag(f.deriv(u))
            if not self.ball:
                Jm[0] = 0.0
                Jm[0, 0] = 1.0
            Jm[-1] = 0.0
            Jm[-1, -1] = 1.0
            return Jm

        return J

    def derivatives(self, u, f):
        du = np.gradient(u, self.r, edge_order=2)
        if self.ball:
            du[0] = 0.0
        d2u = np.empty_like(u)
        d2u[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / self.dr**2
        d2u[-1] = -self.c[-1] * du[-1] - f(u[-1])
        d2u[0] = -f(u[0]) / self.sf.n if self.ball else -self.c[0] * du[0] - f(u[0])
        return du, d2u


def solve_radial(
    sf: SpaceForm,
    dom: RadialDomain,
    f: Nonlinearity,
    inner_value: float = 0.0,
    grid_size: int = 256,
    grid: str = "chebyshev",
    tol: float = 1e-11,
    max_iter: int = 50,
    continuation_steps: int = 8,
) -> RadialSolution:
    """Solve u'' + (n-1)(h'/h)u' = -f(u) with u = 0 outside and u = a inside.

    Damped Newton is run on the full nonlinearity first; if it stalls, the
    coefficients of degree >= 2 are switched on gradually from the linear
    part, warm-starting each stage.
    """
    _check_inputs(sf, dom, grid_size, grid)
    a = 0.0 if isinstance(dom, Ball) else float(inner_value)
    N = int(grid_size)
    prob = _ChebyshevProblem(sf, dom, f, a, N) if grid == "chebyshev" else _UniformProblem(sf, dom, f, a, N)
    size = prob.M + 1 if grid == "chebyshev" else prob.M
    trace: list[float] = []

    def run(fs, z0):
        return _newton(prob.residual(fs), prob.jacobian(fs), z0, tol, max_iter, trace)

    z = np.zeros(size)
    try:
        z = run(f, z)
    except NonConvergence:
        if f.degree < 2:
            raise
        logger.info("Newton stalled; continuing in the nonlinear coefficients")
        z = np.zeros(size)
        for s in np.linspace(0.0, 1.0, continuation_steps + 1):
            z = run(f.scaled_nonlinear(float(s)), z)

    if grid == "chebyshev":
        u, du, d2u = prob.unpack(z)
        coef = prob.coefficients(z)
    else:
        u = z
        du, d2u = prob.derivatives(u, f)
        coef = None
    boundary = _boundaries(sf, dom, u[0], du[0], u[-1], du[-1])
    return RadialSolution(
        sf, dom, f, prob.r, u, du, d2u, boundary, method=grid, inner_value=a,
        newton_trace=tuple(trace), _coef=coef,
    )


# --- closed forms -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClosedFormLinear:
    solution: RadialSolution
    a: Optional[float]
    c0: float
    c1: Optional[float]


def linear_profile(sf: SpaceForm, R_out: float, r):
    """u, u', u'' of the rigid solution for f(u) = n + n k u vanishing at R_out."""
    r = np.asarray(r, dtype=float)
    k = sf.k
    phi1 = float(sf.dh(R_out))
    if k > 0 and abs(phi1) < 1e-12:
        raise DegenerateAnnulus(f"cos(sqrt(k) R_out) = {phi1:.3e} vanishes at R_out={R_out}")
    if k == 0:
        u = (R_out**2 - r**2) / 2.0
    else:
        u = (sf.dh(r) / phi1 - 1.0) / k
    return u, -sf.h(r) / phi1, -sf.dh(r) / phi1


def closed_form_linear(sf: SpaceForm, dom: RadialDomain, grid_size: int = 256, grid: str = "chebyshev") -> ClosedFormLinear:
    """Exact solution of Delta u + n k u = -n with u = 0 and constant u_nu on the outer sphere.

    For annuli the inner Dirichlet value ``a`` is part of the answer; the
    outward normal derivatives are ``c1`` on the inner sphere and ``c0`` on
    the outer one.
    """
    _check_inputs(sf, dom, grid_size, grid)
    N = int(grid_size)
    lo, hi = dom.inner, dom.outer
    if grid == "chebyshev":
        r = lo + (cheb_nodes(N) + 1.0) * (hi - lo) / 2.0
    else:
        r = np.linspace(lo, hi, N + 1)
    u, du, d2u = linear_profile(sf, hi, r)
    u[-1] = 0.0
    f = Nonlinearity.linear_family(sf.n, sf.k)
    boundary = _boundaries(sf, dom, u[0], du[0], u[-1], du[-1])
    coef = cheb_coeffs(u) if grid == "chebyshev" else None
    a = float(u[0]) if isinstance(dom, Annulus) else None
    sol = RadialSolution(sf, dom, f, r, u, du, d2u, boundary, method=grid, inner_value=a or 0.0, _coef=coef)
    c0 = sol.boundary_by_label("outer").u_nu
    c1 = sol.boundary_by_label("inner").u_nu if a is not None else None
    return ClosedFormLinear(sol, a, c0, c1)


# --- rigidity gate -------------------------------------------------------------

@dataclass(frozen=True)
class Theorem3Gate:
    holds: bool
    lhs: float  # (n-1) f(0)/n * h(R)/h'(R)
    rhs: float  # psi(R)
    sphere_mean_curvature: float  # (n-1) h'/h, trace convention
    sphere_curvature_ratio: float  # h'/h, the un-normalised comparison value

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "sphere_mean_curvature": self.sphere_mean_curvature,
            "sphere_curvature_ratio": self.sphere_curvature_ratio,
        }


def theorem3_gate(sf: SpaceForm, R: float, f: Nonlinearity, psi_at_R: float, atol: float = 1e-12) -> Theorem3Gate:
    """Evaluate the hypothesis (n-1) f(0)/n * h(R)/h'(R) <= psi(R).

    Only tells whether the rigidity statement for the prescribed-gradient
    problem applies; it proves nothing about a particular domain.
    """
    dhR = float(sf.dh(R))
    if dhR <= 0:
        raise InadmissibleDomain(f"h'(R) = {dhR:.3e} must be positive")
    if not psi_at_R > 0:
        raise ValueError(f"psi(R) must be positive, got {psi_at_R}")
    hR = float(sf.h(R))
    lhs = (sf.n - 1) * f.f0 / sf.n * hR / dhR
    return Theorem3Gate(
        bool(lhs <= psi_at_R + atol), float(lhs), float(psi_at_R),
        (sf.n - 1) * dhR / hR, dhR / hR,
    )


# --- estimator front end ----------------------------------------------------------

def as_radial_domain(X) -> RadialDomain:
    if isinstance(X, (Ball, Annulus)):
        return X
    arr = np.atleast_1d(np.asarray(X, dtype=float)).ravel()
    if arr.size == 1:
        return Ball(float(arr[0]))
    if arr.size == 2:
        return Annulus(float(arr[0]), float(arr[1]))
    raise ValueError(f"cannot interpret {X!r} as a ball radius or (R_in, R_out) pair")


class RadialSerrinSolver(BaseEstimator):
    """Estimator wrapper: ``fit`` solves on a domain, ``predict`` evaluates u(r).

    ``fit`` accepts a :class:`Ball`, an :class:`Annulus`, a radius or an
    ``(R_in, R_out)`` pair.
    """

    def __init__(self, n=2, k=0.0, coeffs=(2.0,), inner_value=0.0, grid_size=256, grid="chebyshev", tol=1e-11, max_iter=50):
        self.n = n
        self.k = k
        self.coeffs = coeffs
        self.inner_value = inner_value
        self.grid_size = grid_size
        self.grid = grid
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        self.space_form_ = SpaceForm(self.n, self.k)
        self.domain_ = as_radial_domain(X)
        self.nonlinearity_ = Nonlinearity(tuple(np.atleast_1d(self.coeffs)))
        self.solution_ = solve_radial(
            self.space_form_, self.domain_, self.nonlinearity_, inner_value=self.inner_value,
            grid_size=self.grid_size, grid=self.grid, tol=self.tol, max_iter=self.max_iter,
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        r = np.asarray(X, dtype=float)
        if r.ndim == 2 and r.shape[1] == 1:
            r = r[:, 0]
        if r.ndim != 1:
            raise ValueError(f"expected radii as a 1-D array or a single column, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("radii must be finite")
        lo, hi = self.domain_.inner, self.domain_.outer
        if np.any(r < lo - 1e-12) or np.any(r > hi + 1e-12):
            raise ValueError(f"radii must lie in [{lo}, {hi}]")
        return np.asarray(self.solution_(r), dtype=float)

    def score(self, X=None, y=None):
        """Negative max-norm PDE residual, so larger is better."""
        check_is_fitted(self, "solution_")
        return -float(np.max(np.abs(self.solution_.pde_residual())))
