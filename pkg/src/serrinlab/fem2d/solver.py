"""P1 finite elements for Delta_g u = -f(u) in a geodesic polar chart.

The weak form is ``int <grad u, grad v>_g dA_g = int f(u) v dA_g`` with
``dA_g = (h/r) dx dy``.  All element integrals use the degree-4 six-point
rule; the nonlinear problem is solved by Newton's method on the discrete
energy ``E(u) = 1/2 u^T K u - int F(u_h) dA_g``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import NewtonDivergence, NonConvergence, SingularStiffness
from ..nonlinearity import Nonlinearity
from .mesh import TRI_RULE, Mesh2D, metric_ratio, metric_tensor

logger = logging.getLogger(__name__)


class Assembly:
    """Geometric data of a mesh that does not depend on the solution."""

    def __init__(self, mesh: Mesh2D):
        self.mesh = mesh
        k = mesh.sf.k
        bary, w = TRI_RULE
        tri = mesh.triangles
        p = mesh.points[tri]  # (T, 3, 2)
        self.bary = bary
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0):
            raise SingularStiffness("mesh contains inverted or degenerate triangles")
        self.area = 0.5 * det
        # gradients of barycentric coordinates, (T, 3, 2)
        inv = np.empty((len(tri), 2, 2))
        inv[:, 0, 0], inv[:, 0, 1] = e2[:, 1] / det, -e2[:, 0] / det
        inv[:, 1, 0], inv[:, 1, 1] = -e1[:, 1] / det, e1[:, 0] / det
        gl = np.empty((len(tri), 3, 2))
        gl[:, 1] = inv[:, 0]
        gl[:, 2] = inv[:, 1]
        gl[:, 0] = -gl[:, 1] - gl[:, 2]
        self.grad = gl
        qp = np.einsum("qj,tjd->tqd", bary, p)
        self.qpoints = qp
        r = np.hypot(qp[..., 0], qp[..., 1])
        q = metric_ratio(k, r)
        self.sqrtg = q
        self.qweight = self.area[:, None] * w[None, :] * q  # (T, Q), includes dA_g
        g = metric_tensor(k, qp)
        self.ginv = np.linalg.inv(g)
        # sqrt(det g) g^{-1} integrated against constant gradients
        Aeff = np.einsum("tq,tqij->tij", self.area[:, None] * w[None, :] * q, self.ginv)
        Kloc = np.einsum("tai,tij,tbj->tab", gl, Aeff, gl)
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        nv = mesh.num_vertices
        self.rows, self.cols = rows, cols
        self.K = sp.csr_matrix((Kloc.ravel(), (rows, cols)), shape=(nv, nv))
        self.K.sum_duplicates()
        self.lumped = np.bincount(tri.ravel(), weights=(self.qweight @ bary).ravel(), minlength=nv)

    def at_quad(self, u: np.ndarray) -> np.ndarray:
        return u[self.mesh.triangles] @ self.bary.T  # (T, Q)

    def load(self, values_q: np.ndarray) -> np.ndarray:
        """Vector int g phi_i dA_g for g given at quadrature points."""
        loc = np.einsum("tq,qj->tj", self.qweight * values_q, self.bary)
        return np.bincount(self.mesh.triangles.ravel(), weights=loc.ravel(), minlength=self.mesh.num_vertices)

    def weighted_mass(self, values_q: np.ndarray) -> sp.csr_matrix:
        loc = np.einsum("tq,qa,qb->tab", self.qweight * values_q, self.bary, self.bary)
        nv = self.mesh.num_vertices
        M = sp.csr_matrix((loc.ravel(), (self.rows, self.cols)), shape=(nv, nv))
        M.sum_duplicates()
        return M

    def integrate_q(self, values_q: np.ndarray) -> float:
        return float(np.sum(self.qweight * values_q))

    def element_gradients(self, u: np.ndarray) -> np.ndarray:
        """Chart gradient of the P1 field on each triangle, (T, 2)."""
        return np.einsum("ta,tad->td", u[self.mesh.triangles], self.grad)

    def grad_sq_q(self, u: np.ndarray) -> np.ndarray:
        """|grad u|_g^2 at quadrature points."""
        G = self.element_gradients(u)
        return np.einsum("ti,tqij,tj->tq", G, self.ginv, G)


@dataclass(frozen=True, eq=False)
class FEMSolution:
    """Solved per-vertex field together with the data needed for traces."""

    mesh: Mesh2D
    f: Nonlinearity
    values: np.ndarray
    dirichlet: dict
    newton_trace: tuple = ()
    energy_trace: tuple = ()
    energy_monotone: bool = True
    _assembly: Optional[Assembly] = field(default=None, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise NonConvergence("solution contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def assembly(self) -> Assembly:
        if self._assembly is None:
            object.__setattr__(self, "_assembly", Assembly(self.mesh))
        return self._assembly

    @property
    def u(self) -> np.ndarray:
        return self.values

    def residual(self) -> np.ndarray:
        """Weak-form residual K u - int f(u_h) phi_i dA_g at every vertex."""
        A = self.assembly
        return A.K @ self.values - A.load(self.f(A.at_quad(self.values)))

    def interior_residual(self) -> float:
        return float(np.abs(self.residual()[self.mesh.interior_nodes()]).max(initial=0.0))

    def energy(self) -> float:
        return _energy(self.assembly, self.f, self.values)

    def integral_f(self) -> float:
        A = self.assembly
        return A.integrate_q(self.f(A.at_quad(self.values)))

    def integrate_q(self, values_q) -> float:
        return self.assembly.integrate_q(values_q)

    def area(self) -> float:
        return float(self.assembly.qweight.sum())

    def nodal_gradient(self) -> np.ndarray:
        """Recovered chart gradient per vertex (area-weighted average of element gradients)."""
        A = self.assembly
        G = A.element_gradients(self.values)
        tri = self.mesh.triangles
        nv = self.mesh.num_vertices
        wsum = np.bincount(tri.ravel(), weights=np.repeat(A.area, 3), minlength=nv)
        out = np.empty((nv, 2))
        for d in range(2):
            out[:, d] = np.bincount(tri.ravel(), weights=np.repeat(A.area * G[:, d], 3), minlength=nv) / wsum
        return out

    def grad_norm_sq(self) -> np.ndarray:
        """|grad u|_g^2 at vertices from the recovered gradient."""
        G = self.nodal_gradient()
        ginv = np.linalg.inv(metric_tensor(self.mesh.sf.k, self.mesh.points))
        return np.einsum("ni,nij,nj->n", G, ginv, G)

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """Lumped weak Laplace-Beltrami of a P1 field, -(K v)_i / m_i."""
        A = self.assembly
        return -(A.K @ values) / A.lumped

    def __call__(self, pts) -> np.ndarray:
        return _interpolate(self.mesh, self.values, np.asarray(pts, dtype=float))


def _energy(A: Assembly, f: Nonlinearity, u: np.ndarray) -> float:
    return float(0.5 * u @ (A.K @ u) - A.integrate_q(f.antideriv(A.at_quad(u))))


def _interpolate(mesh: Mesh2D, values: np.ndarray, pts: np.ndarray, candidates: int = 12) -> np.ndarray:
    tri = mesh.triangles
    P = mesh.points[tri]
    tree = cKDTree(P.mean(axis=1))
    _, near = tree.query(pts, k=min(candidates, len(tri)))
    near = np.atleast_2d(near)
    out = np.full(len(pts), np.nan)
    for col in range(near.shape[1]):
        todo = np.isnan(out)
        if not todo.any():
            break
        t = near[todo, col]
        a, b, c = P[t, 0], P[t, 1], P[t, 2]
        v0, v1, v2 = b - a, c - a, pts[todo] - a
        det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
        l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
        l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -1e-10) & (l1 >= -1e-10) & (l2 >= -1e-10)
        vals = l0 * values[tri[t, 0]] + l1 * values[tri[t, 1]] + l2 * values[tri[t, 2]]
        idx = np.flatnonzero(todo)[inside]
        out[idx] = vals[inside]
    return out


def _newton_fem(A: Assembly, f: Nonlinearity, u: np.ndarray, free: np.ndarray, tol: float, max_iter: int, trace, etrace):
    monotone = True
    E = _energy(A, f, u)
    etrace.append(E)
    for _ in range(max_iter):
        uq = A.at_quad(u)
        R = (A.K @ u - A.load(f(uq)))[free]
        norm = float(np.abs(R).max(initial=0.0))
        trace.append(norm)
        if norm <= tol:
            return u, monotone
        J = (A.K - A.weighted_mass(f.deriv(uq)))[free][:, free].tocsc()
        try:
            du = spla.spsolve(J, -R)
        except RuntimeError as exc:
            raise SingularStiffness(f"Jacobian factorisation failed: {exc}") from exc
        if not np.all(np.isfinite(du)):
            raise SingularStiffness("singular Jacobian")
        slope = float(R @ du)  # dE/dlambda at lambda = 0
        lam = 1.0
        accepted = False
        if slope < 0:
            # Armijo backtracking on the energy
            while lam >= 2.0 ** -20:
                trial = u.copy()
                trial[free] += lam * du
                E_new = _energy(A, f, trial)
                if E_new <= E + 1e-4 * lam * slope:
                    accepted = True
                    break
                lam /= 2.0
        if not accepted:
            # indefinite Jacobian: fall back to residual reduction
            monotone = False
            lam = 1.0
            while lam >= 2.0 ** -20:
                trial = u.copy()
                trial[free] += lam * du
                Rn = (A.K @ trial - A.load(f(A.at_quad(trial))))[free]
                if np.abs(Rn).max(initial=0.0) < (1 - 1e-4 * lam) * norm:
                    accepted = True
                    E_new = _energy(A, f, trial)
                    break
                lam /= 2.0
        if not accepted:
            # at round-off the energy cannot decrease any further
            if norm <= 1e3 * tol:
                return u, monotone
            raise NewtonDivergence(f"line search failed at residual {norm:.3e}", trace)
        u, E = trial, E_new
        etrace.append(E)
    uq = A.at_quad(u)
    norm = float(np.abs((A.K @ u - A.load(f(uq)))[free]).max(initial=0.0))
    trace.append(norm)
    if norm <= tol:
        return u, monotone
    raise NewtonDivergence(f"no convergence in {max_iter} Newton steps (residual {norm:.3e})", trace)


def solve_fem(
    mesh: Mesh2D,
    f: Nonlinearity,
    dirichlet: Optional[Mapping[str, float]] = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    continuation_steps: int = 8,
) -> FEMSolution:
    """Solve Delta_g u = -f(u) with constant Dirichlet data per boundary loop."""
    dirichlet = dict(dirichlet or {})
    for label in mesh.loops:
        dirichlet.setdefault(label, 0.0)
    unknown = set(dirichlet) - set(mesh.loops)
    if unknown:
        raise KeyError(f"Dirichlet data for unknown loops {sorted(unknown)}")
    A = Assembly(mesh)
    u = np.zeros(mesh.num_vertices)
    for label, idx in mesh.loops.items():
        u[idx] = float(dirichlet[label])
    free = mesh.interior_nodes()
    trace: list = []
    etrace: list = []
    try:
        u_sol, mono = _newton_fem(A, f, u.copy(), free, tol, max_iter, trace, etrace)
    except NonConvergence:
        if f.degree < 2:
            raise
        logger.info("Newton failed; continuing in the nonlinear coefficients")
        u_sol, mono = u.copy(), True
        for s in np.linspace(0.0, 1.0, continuation_steps + 1):
            etrace.clear()
            u_sol, m = _newton_fem(A, f.scaled_nonlinear(float(s)), u_sol, free, tol, max_iter, trace, etrace)
            mono = mono and m
    return FEMSolution(mesh, f, u_sol, dirichlet, tuple(trace), tuple(etrace), mono, A)


class FEMSerrinSolver(BaseEstimator):
    """Estimator wrapper around :func:`solve_fem`.

    ``fit`` takes a :class:`Mesh2D`; ``predict`` interpolates the P1
    solution at chart points given as an ``(m, 2)`` array.
    """

    def __init__(self, coeffs=(2.0,), dirichlet=None, tol=1e-10, max_iter=50):
        self.coeffs = coeffs
        self.dirichlet = dirichlet
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        if not isinstance(X, Mesh2D):
            raise TypeError(f"fit expects a Mesh2D, got {type(X).__name__}")
        self.nonlinearity_ = Nonlinearity(tuple(np.atleast_1d(self.coeffs)))
        self.solution_ = solve_fem(X, self.nonlinearity_, self.dirichlet, tol=self.tol, max_iter=self.max_iter)
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        pts = check_array(X, ensure_min_features=2)
        if pts.shape[1] != 2:
            raise ValueError(f"expected chart points of shape (m, 2), got {pts.shape}")
        return self.solution_(pts)

    def score(self, X=None, y=None):
        check_is_fitted(self, "solution_")
        return -self.solution_.interior_residual()
