"""Acceptance criteria, one PASS/FAIL line each.

Run under pytest, or directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import SESSION, ellipse_problem, fem_problem  # noqa: E402
from serrinlab import Annulus, Ball, Nonlinearity, SpaceForm  # noqa: E402
from serrinlab.fem2d import FourierCurve  # noqa: E402
from serrinlab.identities import SolvedProblem, p_function, run_checks  # noqa: E402
from serrinlab.radial import closed_form_linear, linear_profile, solve_radial  # noqa: E402

SUITE_BUDGET = 180.0

RADIAL_CASES = (
    (2, 0.0, Ball(1.0)),
    (3, 0.0, Ball(2.0)),
    (2, 1.0, Ball(1.0)),
    (3, 1.0, Ball(math.pi / 4)),
    (2, -1.0, Ball(1.5)),
    (2, 0.0, Annulus(0.5, 1.0)),
    (3, 1.0, Annulus(0.5, 1.2)),
    (2, -1.0, Annulus(0.3, 1.1)),
    (3, -1.0, Annulus(0.2, 2.0)),
)
BALLS = tuple((n, k, R) for n in (2, 3) for k, R in ((0.0, 1.0), (1.0, math.pi / 4), (-1.0, 1.0)))
ANNULI = ((2, 1.0, 0.5, 1.2), (3, 1.0, 0.3, 1.0), (2, -1.0, 0.4, 1.3), (3, -1.0, 0.5, 1.5), (2, 0.0, 0.5, 1.0), (3, 0.0, 1.0, 2.0))
LADDER = (0.05, 0.025, 0.0125)


@lru_cache(maxsize=None)
def radial_linear(n, k, dom):
    cf = closed_form_linear(SpaceForm(n, k), dom)
    sol = solve_radial(SpaceForm(n, k), dom, Nonlinearity.linear_family(n, k), inner_value=cf.a or 0.0)
    return sol, cf


@lru_cache(maxsize=None)
def radial_problem(n, k, dom):
    return SolvedProblem.from_radial(radial_linear(n, k, dom)[0])


@lru_cache(maxsize=None)
def disk_or_cap(k, R, h):
    f = Nonlinearity((2.0,)) if k == 0 else Nonlinearity.linear_family(2, k)
    return fem_problem(k, FourierCurve.circle(R), h=h, f=f)[0]


def criterion_1():
    t0 = time.perf_counter()
    err = 0.0
    for n, k, dom in RADIAL_CASES:
        sol, cf = radial_linear.__wrapped__(n, k, dom)
        err = max(err, float(np.abs(sol.u - cf.solution(sol.grid)).max()))
    dt = time.perf_counter() - t0
    return err < 1e-8 and dt < 5.0, f"max error {err:.2e} over {len(RADIAL_CASES)} cases (< 1e-8), {dt:.2f} s (< 5 s)"


def criterion_2():
    worst = 0.0
    for n in (2, 3):
        for R, R1 in ((0.5, 1.2), (0.3, 1.0), (1.0, 1.5), (0.5, 2.0), (1.2, 2.8)):
            sol, cf = radial_linear(n, 1.0, Annulus(R, R1))
            a = cf.a
            c0 = sol.boundary_by_label("outer").u_nu
            c1 = sol.boundary_by_label("inner").u_nu
            worst = max(
                worst,
                abs(a + 1 - math.cos(R) / math.cos(R1)),
                abs(c0 + math.tan(R1)),
                abs(c1 - math.sin(R) / math.cos(R1)),
                abs(cf.c0 + math.tan(R1)),
                abs(cf.c1 - math.sin(R) / math.cos(R1)),
            )
    return worst < 1e-10, f"max deviation of (a, c0, c1) {worst:.2e} (< 1e-10), includes R1 > pi/2"


def criterion_3():
    worst, tau_err = 0.0, 0.0
    for n, k, R in BALLS:
        reps = {r.name: r for r in run_checks(radial_problem(n, k, Ball(R)))}
        for name in ("soap_bubble", "heintze_karcher", "reilly_residual"):
            worst = max(worst, abs(reps[name].residual))
        tau_err = max(tau_err, abs(reps["shear_stress"].lhs - 2.0 / n))
    ok = worst < 1e-6 and tau_err < 1e-8
    return ok, f"max |soap|, |HK gap|, |reilly| {worst:.2e} (< 1e-6); max |tau - 2/n| {tau_err:.2e} (< 1e-8)"


def criterion_4():
    p, solve_time = ellipse_problem()
    t0 = time.perf_counter()
    reps = {r.name: r for r in run_checks(p, ["soap_bubble", "heintze_karcher", "shear_stress"])}
    dt = solve_time + time.perf_counter() - t0
    margins = {nm: r.residual / r.tolerance for nm, r in reps.items()}
    ok = all(r.residual > 5 * r.tolerance for r in reps.values()) and dt < 60.0
    detail = ", ".join(f"{nm} {reps[nm].residual:.3g} = {m:.0f} tol" for nm, m in margins.items())
    return ok, f"{detail} (each > 5 tol); {dt:.1f} s (< 60 s)"


def _errors(k, R):
    sf = SpaceForm(2, k)
    errs = []
    for h in LADDER:
        sol = disk_or_cap(k, R, h).solution
        u, _, _ = linear_profile(sf, R, np.hypot(*sol.mesh.points.T))
        errs.append(float(np.abs(sol.values - u).max()))
    return np.log2(np.array(errs[:-1]) / errs[1:])


def criterion_5():
    disk = _errors(0.0, 1.0)
    cap = _errors(1.0, math.pi / 4)
    orders = np.concatenate([disk, cap])
    ok = bool(np.all(np.abs(orders - 2.0) <= 0.3))
    fmt = lambda o: "/".join(f"{x:.2f}" for x in o)
    return ok, f"orders disk {fmt(disk)}, cap {fmt(cap)} at h = {LADDER} (2 +- 0.3)"


def criterion_6():
    worst, bracket = 0.0, 0.0
    for n, k, R_in, R_out in ANNULI:
        reps = {r.name: r for r in run_checks(radial_problem(n, k, Annulus(R_in, R_out)))}
        worst = max(worst, abs(reps["minkowski_annulus"].residual), abs(reps["reilly_residual"].residual))
        bracket = max(bracket, reps["umbilicity_check"].residual)
    return worst < 1e-6 and bracket < 1e-8, f"max identity residual {worst:.2e} (< 1e-6); max bracket {bracket:.2e} (< 1e-8)"


def criterion_7():
    spread = 0.0
    # P = R^2 on Euclidean balls with f = n, tan^2 R on spherical caps with the linear family
    for n, k, R, P in ((2, 0.0, 0.8, 0.64), (3, 0.0, 1.5, 2.25), (2, 1.0, math.pi / 4, 1.0), (3, 1.0, 1.0, math.tan(1.0) ** 2)):
        dom = Ball(R)
        if k == 0:
            p = SolvedProblem.from_radial(solve_radial(SpaceForm(n, k), dom, Nonlinearity((float(n),))))
        else:
            p = radial_problem(n, k, dom)
        field_, _ = p_function(p)
        spread = max(spread, float(np.abs(field_.values - P).max()))
    _, rep = p_function(ellipse_problem()[0])
    lap_ok = rep.lhs >= -rep.tolerance
    flux = 0.0
    for n, k, R_in, R_out in ANNULI:
        _, r = p_function(radial_problem(n, k, Annulus(R_in, R_out)))
        flux = max(flux, r.metadata["flux_mismatch"])
    ok = spread < 1e-8 and lap_ok and flux < 1e-6
    return ok, (f"|P - P_exact| {spread:.2e} (< 1e-8); ellipse min weak Laplacian {rep.lhs:.3g} >= -{rep.tolerance:.2g}; "
                f"flux mismatch {flux:.2e} (< 1e-6)")


def _all_problems():
    probs = [radial_problem(n, k, dom) for n, k, dom in RADIAL_CASES]
    probs += [radial_problem(n, k, Ball(R)) for n, k, R in BALLS]
    probs += [radial_problem(n, k, Annulus(a, b)) for n, k, a, b in ANNULI]
    probs += [disk_or_cap(k, R, h) for k, R in ((0.0, 1.0), (1.0, math.pi / 4)) for h in LADDER]
    probs.append(ellipse_problem()[0])
    return probs


def criterion_8():
    worst = 0.0
    probs = _all_problems()
    for p in probs:
        worst = max(worst, abs(p.closure_defect()) / max(1.0, abs(p.integral_f)))
    return worst < 1e-8, f"max relative closure defect {worst:.2e} over {len(probs)} problems (< 1e-8)"


def criterion_9():
    elapsed = time.perf_counter() - SESSION.get("start", time.perf_counter())
    return elapsed < SUITE_BUDGET, f"{elapsed:.1f} s for the session so far (< {SUITE_BUDGET:.0f} s)"


NAMES = {
    1: "closed-form fidelity",
    2: "corollary algebra",
    3: "equality suite",
    4: "strictness suite",
    5: "FEM convergence",
    6: "annular identities",
    7: "P-function",
    8: "divergence closure",
    9: "suite runtime",
}
CRITERIA = {i: globals()[f"criterion_{i}"] for i in NAMES}


def report(i):
    ok, detail = CRITERIA[i]()
    line = f"ACCEPTANCE {i} {NAMES[i]}: {'PASS' if ok else 'FAIL'} - {detail}"
    return ok, line


def _check(i, capsys):
    ok, line = report(i)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1_closed_form(capsys):
    _check(1, capsys)


def test_criterion_2_corollary(capsys):
    _check(2, capsys)


def test_criterion_3_equality(capsys):
    _check(3, capsys)


def test_criterion_4_strictness(capsys):
    _check(4, capsys)


def test_criterion_5_convergence(capsys):
    _check(5, capsys)


def test_criterion_6_annular(capsys):
    _check(6, capsys)


def test_criterion_7_p_function(capsys):
    _check(7, capsys)


def test_criterion_8_closure(capsys):
    _check(8, capsys)


def test_criterion_9_suite_runtime(capsys):
    _check(9, capsys)


if __name__ == "__main__":
    SESSION["start"] = time.perf_counter()
    results = [report(i) for i in NAMES]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
