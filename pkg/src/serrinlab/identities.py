"""Integral identities, inequalities and rigidity tests on solved problems.

Every check takes a :class:`SolvedProblem` and returns an
:class:`IdentityReport`.  Mean curvatures use the trace convention and the
outward normal of the domain.  Hypotheses that fail are recorded in the
report (verdict ``hypothesis-not-met``); they raise only with ``strict=True``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .exceptions import DegenerateDenominator, HypothesisNotMet, MultipleBoundaries, NotAnnular
from .fem2d.mesh import PlanarDomain, metric_tensor
from .fem2d.recovery import bump_centers, recover_derivatives, traceless_hessian_sq, weak_laplacian
from .fem2d.solver import FEMSolution
from .fem2d.trace import boundary_trace
from .geometry import Annulus, Ball, SpaceForm
from .nonlinearity import Nonlinearity
from .radial import RadialSolution, theorem3_gate
from .tolerances import radial_tolerance, resolution_tolerance

__all__ = [
    "Trace",
    "SolvedProblem",
    "IdentityReport",
    "PField",
    "reilly_residual",
    "heintze_karcher",
    "soap_bubble",
    "p_function",
    "shear_stress",
    "minkowski_annulus",
    "umbilicity_check",
    "theorem3_gate",
    "CHECKS",
    "run_checks",
    "reports_to_json",
    "reports_to_csv",
]

PASS = "pass"
FAIL = "fail"
NOT_MET = "hypothesis-not-met"
REPORT_ONLY = "report-only"
THRESHOLD = "rigidity-threshold"

# bump radius for the weak P-function Laplacian, relative to the outer radius
BUMP_FRACTION = 0.1


# --- solved problems ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trace:
    """Samples on one boundary component w.r.t. the outward normal of the domain."""

    label: str  # "outer" (Gamma_0) or "inner" (Gamma_1)
    value: float  # Dirichlet value u_Gamma
    weights: np.ndarray  # area (radial) or metric arclength (FEM) weights
    u_nu: np.ndarray
    H: np.ndarray
    X_nu: np.ndarray
    node_u_nu: np.ndarray  # nodal flux values; the samples themselves on radial problems
    theta: Optional[np.ndarray] = None  # sample angles on FEM loops

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.broadcast_to(values, self.weights.shape)))


@dataclass(frozen=True, eq=False)
class SolvedProblem:
    """A solution bundled with its boundary traces and bulk quadrature.

    Build with :meth:`from_radial` or :meth:`from_fem`; both traces and bulk
    integrals then come from the same discretisation.
    """

    kind: str  # "radial" or "fem"
    sf: SpaceForm
    domain: Union[Ball, Annulus, PlanarDomain]
    f: Nonlinearity
    solution: Union[RadialSolution, FEMSolution]
    traces: tuple[Trace, ...]
    u_min: float
    u_max: float
    integral_f: float
    volume: float
    resolution: Optional[float]  # mesh size for FEM, None for spectral radial
    description: dict = field(default_factory=dict)

    @classmethod
    def from_radial(cls, sol: RadialSolution) -> "SolvedProblem":
        traces = []
        for b in sol.boundary:
            one = lambda v: np.array([float(v)])
            traces.append(Trace(b.label, float(b.value), one(b.area), one(b.u_nu), one(b.H), one(b.X_nu), one(b.u_nu)))
        lo, hi = sol.dom.inner, sol.dom.outer
        fine = sol(np.linspace(lo, hi, 4097))
        u_all = np.concatenate([sol.u, np.atleast_1d(fine)])
        dom = sol.dom
        desc = {
            "space_form": {"n": sol.sf.n, "k": sol.sf.k},
            "domain": {"ball": {"R": dom.R}} if isinstance(dom, Ball) else {"annulus": {"R_in": dom.R_in, "R_out": dom.R_out}},
            "f": list(sol.f.coeffs),
            "discretization": {"kind": "radial", "grid": sol.method, "grid_size": len(sol.grid) - 1},
            "inner_value": sol.inner_value,
        }
        return cls(
            "radial", sol.sf, dom, sol.f, sol, tuple(traces), float(u_all.min()), float(u_all.max()),
            sol.integrate(sol.f(sol.u)), sol.integrate(np.ones_like(sol.u)), None, desc,
        )

    @classmethod
    def from_fem(cls, sol: FEMSolution) -> "SolvedProblem":
        mesh = sol.mesh
        bt = boundary_trace(sol)
        traces = tuple(
            Trace(t.label, t.value, t.weights, t.u_nu, t.H, t.X_nu, t.node_u_nu, t.theta)
            for t in (bt[label] for label in mesh.domain.labels())
        )
        dom = mesh.domain
        desc = {
            "space_form": {"n": 2, "k": mesh.sf.k},
            "domain": {"outer": dom.outer.to_dict(), "inner": None if dom.inner is None else dom.inner.to_dict()},
            "f": list(sol.f.coeffs),
            "discretization": {
                "kind": "fem", "target_h": mesh.target_h, "vertices": mesh.num_vertices,
                "triangles": mesh.num_triangles,
            },
            "dirichlet": {k: float(v) for k, v in sorted(sol.dirichlet.items())},
        }
        return cls(
            "fem", mesh.sf, dom, sol.f, sol, traces, float(sol.values.min()), float(sol.values.max()),
            sol.integral_f(), sol.area(), float(mesh.target_h), desc,
        )

    @property
    def n(self) -> int:
        return self.sf.n

    @property
    def is_annular(self) -> bool:
        return len(self.traces) == 2

    @property
    def ricci_constant(self) -> float:
        """Ric = (n-1) k g on a space form, so every Ricci term in the identities vanishes."""
        return self.sf.ricci_constant()

    @property
    def fprime_ok(self) -> bool:
        """sup f' <= n k over [min u, max u]."""
        return self.f.fprime_bounded(self.sf.k, self.n, (self.u_min, self.u_max), atol=1e-10)

    @property
    def is_linear_family(self) -> bool:
        return self.f.is_linear_family(self.n, self.sf.k)

    @property
    def is_ball(self) -> bool:
        """Geodesic ball: radial ball, or a FEM disk bounded by a circle about the pole."""
        if isinstance(self.domain, Ball):
            return True
        return isinstance(self.domain, PlanarDomain) and not self.domain.is_annular and self.domain.outer.is_circle()

    def trace(self, label: str) -> Trace:
        for t in self.traces:
            if t.label == label:
                return t
        raise KeyError(label)

    def closure_defect(self) -> float:
        """sum of boundary fluxes + integral of f(u); zero by the divergence theorem."""
        return sum(t.integrate(t.u_nu) for t in self.traces) + self.integral_f

    def outer_scale(self) -> float:
        """Smallest distance from the pole to the outer boundary."""
        dom = self.domain
        if isinstance(dom, (Ball, Annulus)):
            return dom.outer
        return dom.outer.bounds()[0]

    def length_scale(self) -> float:
        """Inradius-like length: outer radius for balls, half the width for annuli."""
        dom = self.domain
        if isinstance(dom, Ball):
            return dom.R
        if isinstance(dom, Annulus):
            return 0.5 * (dom.R_out - dom.R_in)
        th = np.linspace(0.0, 2 * math.pi, 2048, endpoint=False)
        ro = dom.outer.r(th)
        if dom.inner is None:
            return float(ro.min())
        return float(0.5 * (ro - dom.inner.r(th)).min())

    @property
    def digest(self) -> str:
        blob = json.dumps(self.description, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def tolerance(self, check: str, scale: float) -> float:
        """Fixed relative tolerance on radial problems, C (h/l)^2 scale on meshes."""
        if self.resolution is None:
            return radial_tolerance(scale)
        return resolution_tolerance(check, self.resolution / self.length_scale(), scale)


# --- reports --------------------------------------------------------------------

def _json_float(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {str(k): _json_float(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_json_float(v) for v in x]
    return x


@dataclass
class IdentityReport:
    name: str
    lhs: float
    rhs: float
    residual: float
    tolerance: float
    verdict: str
    inputs_digest: str = ""
    hypotheses: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict in (PASS, THRESHOLD)

    @property
    def asserted(self) -> bool:
        """Whether the verdict gates an exit status (report-only and unmet hypotheses do not)."""
        return self.verdict in (PASS, FAIL, THRESHOLD)

    def to_dict(self) -> dict:
        return _json_float({
            "name": self.name,
            "inputs_digest": self.inputs_digest,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "hypotheses": self.hypotheses,
            "flags": self.flags,
            "metadata": self.metadata,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> dict:
        d = self.to_dict()
        row = {k: d[k] for k in ("name", "inputs_digest", "lhs", "rhs", "residual", "tolerance", "verdict")}
        for group in ("hypotheses", "flags"):
            for key, val in sorted(d[group].items()):
                row[f"{group[:-1] if group == 'flags' else 'hyp'}.{key}"] = val
        return row


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2)


def reports_to_csv(reports) -> str:
    rows = [r.csv_row() for r in reports]
    cols: list[str] = []
    for row in rows:
        cols.extend(c for c in row if c not in cols)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _finish(p: SolvedProblem, report: IdentityReport, strict: bool) -> IdentityReport:
    report.inputs_digest = p.digest
    md = report.metadata
    md.setdefault("ricci_constant", p.ricci_constant)
    md.setdefault("closure_defect", p.closure_defect())
    md.setdefault("resolution", p.resolution)
    md.setdefault("discretization", p.kind)
    if report.verdict == NOT_MET and strict:
        failed = sorted(k for k, v in report.hypotheses.items() if not v)
        raise HypothesisNotMet(f"{report.name}: hypotheses not met: {', '.join(failed)}", report)
    return report


def _inequality_verdict(hyps: dict, ok: bool) -> str:
    if not all(hyps.values()):
        return NOT_MET
    return PASS if ok else FAIL


def _single_boundary(p: SolvedProblem, name: str) -> Trace:
    if len(p.traces) != 1:
        raise MultipleBoundaries(f"{name} is stated for domains with one boundary component, got {len(p.traces)}")
    return p.traces[0]


def _bracket(p: SolvedProblem, t: Trace):
    """(n-1) f(u_Gamma)/n + H u_nu pointwise on a trace."""
    n = p.n
    return (n - 1) * float(p.f(t.value)) / n + t.H * t.u_nu


# --- checks ---------------------------------------------------------------------

def reilly_residual(p: SolvedProblem, strict: bool = False) -> IdentityReport:
    """Reilly inequality int |traceless Hess u|^2 <= -sum int u_nu [(n-1) f(u_Gamma)/n + H u_nu].

    On balls u_Gamma = 0 and this is the f(0) form; on annuli with the linear
    family the inner bracket becomes (n-1)(ka+1) + H u_nu.  On radial
    problems the bulk side is analytic and the gap equals
    ((n-1)/n) int (n k - f'(u)) |grad u|^2, which is reported as a cross-check.
    """
    n = p.n
    rhs = -sum(t.integrate(t.u_nu * _bracket(p, t)) for t in p.traces)
    scale = sum(t.integrate(np.abs(t.u_nu) * ((n - 1) * abs(float(p.f(t.value))) / n + np.abs(t.H * t.u_nu))) for t in p.traces)
    hyps = {"fprime_le_nk": p.fprime_ok}
    md: dict = {"scale": scale}
    sol = p.solution
    if p.kind == "radial":
        lhs = sol.integrate(sol.traceless_hessian_sq())
        gap = (n - 1) / n * sol.integrate((n * p.sf.k - p.f.deriv(sol.u)) * sol.du**2)
        md["gap_identity"] = gap
        md["gap_identity_defect"] = (rhs - lhs) - gap
        md["lhs_quality"] = "analytic"
        tol = p.tolerance("reilly_residual", scale)
        residual = rhs - lhs
        ok = residual >= -tol
        equality = abs(residual) <= tol
    else:
        grad, hess = recover_derivatives(sol)
        q = traceless_hessian_sq(sol, grad, hess)
        lhs = float(sol.assembly.lumped @ q)
        md["lhs_quality"] = "diagnostic"
        tol = p.tolerance("reilly_residual", scale)
        residual = rhs - lhs
        # the recovered bulk side is not trusted; only the boundary side's sign is asserted
        ok = rhs >= -tol
        equality = abs(rhs) <= tol
    md["annular_form"] = p.is_annular and p.is_linear_family
    if p.is_annular:
        md["inner_value"] = p.trace("inner").value
    report = IdentityReport(
        "reilly_residual", lhs, rhs, residual, tol, _inequality_verdict(hyps, ok),
        hypotheses=hyps, flags={"equality": bool(equality), "linear_family": p.is_linear_family}, metadata=md,
    )
    return _finish(p, report, strict)


def heintze_karcher(p: SolvedProblem, strict: bool = False) -> IdentityReport:
    """((n-1)/n) f(0)^2 (boundary integral of 1/H) >= f(0) int f(u)."""
    t = _single_boundary(p, "heintze_karcher")
    n, f0 = p.n, p.f.f0
    min_H = float(t.H.min())
    hyps = {"H_positive": min_H > 0, "fprime_le_nk": p.fprime_ok, "f0_positive": f0 > 0}
    inv_H = t.integrate(1.0 / t.H) if min_H > 0 else float("inf")
    lhs = (n - 1) / n * f0**2 * inv_H
    rhs = f0 * p.integral_f
    residual = lhs - rhs
    scale = abs(rhs)
    tol = p.tolerance("heintze_karcher", scale)
    report = IdentityReport(
        "heintze_karcher", lhs, rhs, residual, tol, _inequality_verdict(hyps, residual >= -tol),
        hypotheses=hyps, flags={"equality": bool(abs(residual) <= tol)},
        metadata={"min_H": min_H, "boundary_integral_inv_H": inv_H, "scale": scale},
    )
    return _finish(p, report, strict)


def soap_bubble(p: SolvedProblem, strict: bool = False) -> IdentityReport:
    """Boundary integral of (H0 - H) u_nu^2 >= 0 with H0 = (n-1) f(0)/(n c), c = -mean u_nu."""
    t = _single_boundary(p, "soap_bubble")
    n, f0 = p.n, p.f.f0
    c = -t.integrate(t.u_nu) / t.area
    if c == 0:
        raise DegenerateDenominator("mean normal derivative vanishes, so H0 is undefined")
    H0 = (n - 1) * f0 / (n * c)
    u2 = t.u_nu**2
    value = t.integrate((H0 - t.H) * u2)
    scale = t.integrate((abs(H0) + np.abs(t.H)) * u2)
    tol = p.tolerance("soap_bubble", scale)
    hyps = {"f0_positive": f0 > 0, "fprime_le_nk": p.fprime_ok}
    # pointwise comparison of H with H0: H is exact, H0 carries the discretisation error
    point_tol = p.tolerance("soap_bubble", abs(H0))
    min_gap = float((t.H - H0).min())
    report = IdentityReport(
        "soap_bubble", value, 0.0, value, tol, _inequality_verdict(hyps, value >= -tol),
        hypotheses=hyps,
        flags={"equality": bool(abs(value) <= tol), "ball_detected": bool(min_gap >= -point_tol)},
        metadata={"c": c, "H0": H0, "min_H_minus_H0": min_gap, "max_H_minus_H0": float((t.H - H0).max()), "scale": scale},
    )
    return _finish(p, report, strict)


@dataclass(frozen=True, eq=False)
class PField:
    """P = |grad u|^2 + (2/n) F(u) sampled on the discretisation.

    Radial: ``points`` are grid radii.  FEM: ``points`` are mesh vertices and
    ``laplacian`` is the weak bump estimate at ``centers``.
    """

    points: np.ndarray
    values: np.ndarray
    laplacian: np.ndarray
    centers: np.ndarray


def _p_radial(p: SolvedProblem):
    sol = p.solution
    n, f = p.n, p.f
    P = sol.du**2 + (2.0 / n) * f.antideriv(sol.u)
    dP = 2.0 * sol.du * sol.d2u + (2.0 / n) * f(sol.u) * sol.du
    lap = sol.radial_laplacian(P, dP)
    ident = 2.0 * sol.traceless_hessian_sq() + 2.0 * (n - 1) / n * (n * p.sf.k - f.deriv(sol.u)) * sol.du**2
    md = {"laplacian_identity_defect": float(np.abs(lap - ident).max())}
    flux_err = 0.0
    for t in p.traces:
        # outward derivative of P from the profile versus the boundary formula
        end = -1 if t.label == "outer" else 0
        P_nu = dP[end] if t.label == "outer" else -dP[end]
        formula = -2.0 * t.u_nu[0] * _bracket(p, t)[0]
        md[f"P_nu_{t.label}"] = float(P_nu)
        md[f"P_nu_formula_{t.label}"] = float(formula)
        flux_err = max(flux_err, abs(P_nu - formula))
    md["flux_mismatch"] = flux_err
    return PField(sol.grid, P, lap, sol.grid), md


def _p_fem(p: SolvedProblem):
    sol = p.solution
    mesh = sol.mesh
    A = sol.assembly
    n = p.n
    Pq = A.grad_sq_q(sol.values) + (2.0 / n) * p.f.antideriv(A.at_quad(sol.values))
    ell = p.length_scale()
    rho = min(BUMP_FRACTION * p.outer_scale(), 0.5 * ell)
    centers = bump_centers(mesh, rho)
    lap, means = weak_laplacian(sol, Pq, centers, rho, return_mean=True)
    grad, _ = recover_derivatives(sol)
    ginv = np.linalg.inv(metric_tensor(mesh.sf.k, mesh.points))
    Pv = np.einsum("ni,nij,nj->n", grad, ginv, grad) + (2.0 / n) * p.f.antideriv(sol.values)
    bmax = max(float((t.node_u_nu**2).max()) + (2.0 / n) * float(p.f.antideriv(t.value)) for t in p.traces)
    for t in p.traces:
        Pv[np.asarray(mesh.loops[t.label])] = t.node_u_nu**2 + (2.0 / n) * float(p.f.antideriv(t.value))
    md = {
        "bump_radius": rho,
        "bump_mean_max": float(means.max()),
        "bump_mean_min": float(means.min()),
        "boundary_max": bmax,
    }
    return PField(mesh.points, Pv, lap, centers), md, means


def p_function(p: SolvedProblem, strict: bool = False):
    """P = |grad u|^2 + (2/n) F(u): subharmonicity, constancy and boundary fluxes.

    Returns ``(PField, IdentityReport)``.  The asserted quantity is min of the
    discrete Laplacian of P against -tol; on balls with the linear family P
    must also be constant, and on annuli the normal derivative of P must match
    -2 u_nu [(n-1) f(u_Gamma)/n + H u_nu] on each boundary.
    """
    hyps = {"fprime_le_nk": p.fprime_ok}
    n = p.n
    equality_case = p.is_linear_family and (p.is_ball or p.is_annular)
    if p.kind == "radial":
        field_, md = _p_radial(p)
        P = field_.values
        Pscale = max(float(np.abs(P).max()), 1e-300)
        spread = float(P.max() - P.min())
        tol_const = radial_tolerance(Pscale)
        ell = p.length_scale()
        # one spectral differentiation of an analytic derivative: allow N^2 eps growth
        N = len(P) - 1
        tol = max(radial_tolerance(Pscale / ell**2), 100 * N**2 * np.finfo(float).eps * Pscale / ell**2)
        flux_scale = sum(abs(t.u_nu[0]) * abs(_bracket(p, t)[0]) + abs(t.u_nu[0]) for t in p.traces)
        tol_flux = radial_tolerance(max(flux_scale, 1.0))
        flux_ok = md["flux_mismatch"] <= tol_flux
        interior_max = float(P[1:-1].max()) if len(P) > 2 else float(P.max())
        boundary_max = max(float(P[-1]), float(P[0]) if p.is_annular else -np.inf)
    else:
        field_, md, means = _p_fem(p)
        Pscale = max(float(np.abs(field_.values).max()), 1e-300)
        ell = p.length_scale()
        spread = float(means.max() - means.min())
        tol_const = p.tolerance("p_constancy", Pscale)
        tol = p.tolerance("p_function", Pscale / ell**2)
        flux_ok = True
        tol_flux = float("nan")
        md["flux_mismatch"] = float("nan")
        interior_max = float(means.max())
        boundary_max = md["boundary_max"]
    lap = field_.laplacian
    lhs = float(lap.min())
    const_ok = spread <= tol_const if (equality_case and p.is_ball) else True
    ok = lhs >= -tol and const_ok and (flux_ok if p.is_annular else True)
    md.update({
        "P_spread": spread,
        "P_constancy_tolerance": tol_const,
        "P_mean": float(np.mean(field_.values)),
        "laplacian_max": float(lap.max()),
        "flux_tolerance": tol_flux,
        "interior_max": interior_max,
        "boundary_max": boundary_max,
        "length_scale": ell,
        "P_scale": Pscale,
    })
    max_principle = interior_max <= boundary_max + tol_const
    flags = {
        "equality": bool(equality_case and spread <= tol_const),
        "P_constant": bool(spread <= tol_const),
        "fluxes_match": bool(flux_ok),
        "max_principle": bool(max_principle),
    }
    report = IdentityReport(
        "p_function", lhs, 0.0, lhs, tol, _inequality_verdict(hyps, ok),
        hypotheses=hyps, flags=flags, metadata=md,
    )
    return field_, _finish(p, report, strict)


def shear_stress(p: SolvedProblem, strict: bool = False) -> IdentityReport:
    """tau = max over the boundary of |grad u|^2 divided by F(u_max); tau <= 2/n only on balls."""
    t = _single_boundary(p, "shear_stress")
    n = p.n
    u_max = p.u_max
    D = float(p.f.antideriv(u_max))
    if not u_max > 0 or not D > 0:
        raise DegenerateDenominator(f"integral of f over [0, u_max] is {D:.3e} (u_max = {u_max:.3e})")
    # on a level-set boundary |grad u| = |u_nu|
    num = float((t.node_u_nu**2).max())
    tau = num / D
    thr = 2.0 / n
    tol = p.tolerance("shear_stress", thr)
    if tau < thr - tol:
        verdict = FAIL
    elif tau <= thr + tol:
        verdict = THRESHOLD
    else:
        verdict = PASS
    report = IdentityReport(
        "shear_stress", tau, thr, tau - thr, tol, verdict,
        hypotheses={"u_max_positive": True, "denominator_positive": True},
        flags={"rigidity": verdict == THRESHOLD},
        metadata={"max_grad_sq": num, "u_max": u_max, "F_u_max": D},
    )
    return _finish(p, report, strict)


def _constant_flux(p: SolvedProblem, check: str):
    """Per-loop spread of u_nu, its scale, and whether every loop is constant within tolerance."""
    scale = max(float(np.abs(t.node_u_nu).max()) for t in p.traces)
    spreads = {t.label: float(t.node_u_nu.max() - t.node_u_nu.min()) for t in p.traces}
    tol = p.tolerance(check, scale)
    return spreads, scale, all(s <= tol for s in spreads.values())


def _require_annular(p: SolvedProblem, name: str):
    if not p.is_annular:
        raise NotAnnular(f"{name} needs an annular domain with an inner and an outer boundary")


def minkowski_annulus(p: SolvedProblem, strict: bool = False) -> IdentityReport:
    """int_G0 (u_nu H/(n-1) + 1) <X,nu> + int_G1 (1 + u_nu H/(n-1) + a k) <X,nu> = 0.

    X = h d/dr.  Asserted only when u_nu is constant on each loop (the
    overdetermined problem); otherwise the residual is reported.
    """
    _require_annular(p, "minkowski_annulus")
    n, k = p.n, p.sf.k
    t0, t1 = p.trace("outer"), p.trace("inner")
    a = t1.value
    I0 = t0.integrate((t0.u_nu * t0.H / (n - 1) + 1.0) * t0.X_nu)
    I1 = t1.integrate((1.0 + t1.u_nu * t1.H / (n - 1) + a * k) * t1.X_nu)
    residual = I0 + I1
    scale = t0.integrate(np.abs(t0.X_nu)) + t1.integrate(np.abs(t1.X_nu))
    tol = p.tolerance("minkowski_annulus", scale)
    signs = {"X_nu_positive_outer": bool(t0.X_nu.min() > 0), "X_nu_negative_inner": bool(t1.X_nu.max() < 0)}
    hyps = dict(signs, linear_family=p.is_linear_family)
    spreads, u_scale, const = _constant_flux(p, "minkowski_annulus")
    if not all(hyps.values()):
        verdict = NOT_MET
    elif not const:
        verdict = REPORT_ONLY
    else:
        verdict = PASS if abs(residual) <= tol else FAIL
    report = IdentityReport(
        "minkowski_annulus", I0, -I1, residual, tol, verdict, hypotheses=hyps,
        flags={"constant_u_nu": const},
        metadata={"inner_value": a, "u_nu_spread": spreads, "u_nu_scale": u_scale, "scale": scale},
    )
    return _finish(p, report, strict)


def umbilicity_check(p: SolvedProblem, strict: bool = False) -> IdentityReport:
    """Brackets c0 H0 + (n-1) <= 0 on Gamma_0 and c1 H1 + (ka+1)(n-1) >= 0 on Gamma_1.

    When both hold the loops are umbilical, which in 2D means constant
    geodesic curvature.  Never raises on failed hypotheses.
    """
    _require_annular(p, "umbilicity_check")
    n, k = p.n, p.sf.k
    t0, t1 = p.trace("outer"), p.trace("inner")
    a = t1.value
    B0 = t0.u_nu * t0.H + (n - 1)
    B1 = t1.u_nu * t1.H + (k * a + 1.0) * (n - 1)
    tol_b = p.tolerance("umbilicity_check", float(n - 1))
    spread_H = {t.label: float(t.H.max() - t.H.min()) for t in p.traces}
    tol_H = p.tolerance("umbilicity_check", max(float(np.abs(t.H).max()) for t in p.traces))
    flux_spreads, u_scale, const = _constant_flux(p, "umbilicity_check")
    hyps = {"outer_bracket_nonpositive": bool(B0.max() <= tol_b), "inner_bracket_nonnegative": bool(B1.min() >= -tol_b)}
    umbilic = all(s <= tol_H for s in spread_H.values())
    if not const:
        verdict = REPORT_ONLY
    elif not all(hyps.values()):
        verdict = NOT_MET
    else:
        verdict = PASS if umbilic else FAIL
    eq = bool(np.abs(B0).max() <= tol_b and np.abs(B1).max() <= tol_b)
    report = IdentityReport(
        "umbilicity_check", float(B0.max()), float(B1.min()), float(max(np.abs(B0).max(), np.abs(B1).max())), tol_b,
        verdict, hypotheses=hyps, flags={"equality": eq, "umbilic": bool(umbilic), "constant_u_nu": const},
        metadata={
            "H_spread": spread_H, "H_tolerance": tol_H, "u_nu_spread": flux_spreads, "u_nu_scale": u_scale,
            "bracket_scale": float(n - 1), "inner_value": a,
        },
    )
    # hypothesis failures are report-only here
    return _finish(p, report, False)


def _p_report(p: SolvedProblem, strict: bool = False) -> IdentityReport:
    return p_function(p, strict)[1]


CHECKS = {
    "reilly_residual": reilly_residual,
    "heintze_karcher": heintze_karcher,
    "soap_bubble": soap_bubble,
    "p_function": _p_report,
    "shear_stress": shear_stress,
    "minkowski_annulus": minkowski_annulus,
    "umbilicity_check": umbilicity_check,
}

BALL_CHECKS = ("reilly_residual", "heintze_karcher", "soap_bubble", "p_function", "shear_stress")
ANNULAR_CHECKS = ("reilly_residual", "p_function", "minkowski_annulus", "umbilicity_check")


def run_checks(p: SolvedProblem, names=None, strict: bool = False) -> list[IdentityReport]:
    """Run the named checks (default: every check applicable to the domain type)."""
    if names is None or names == "all":
        names = ANNULAR_CHECKS if p.is_annular else BALL_CHECKS
    unknown = [nm for nm in names if nm not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; available: {sorted(CHECKS)}")
    return [CHECKS[nm](p, strict=strict) for nm in names]
