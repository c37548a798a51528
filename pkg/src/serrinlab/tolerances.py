"""Resolution-aware tolerances for the identity checks.

On meshes a check accepts a deviation of ``C (h/l)^2 * scale``, where ``l``
is the domain length scale and ``scale`` is the natural size of the quantity
being compared.  The constants ``C`` are calibrated once on equality cases
with known answers (torsion on the unit disk, and on a Euclidean annulus for
the annular checks) and stored in ``tolerances.json`` next to this module.
Regenerate them with ``python -m serrinlab.tolerances``.

Spectral radial solutions are accurate to near round-off, so they get a
fixed relative tolerance instead.
"""

from __future__ import annotations

import json
import math
import sys
from functools import lru_cache
from pathlib import Path

CALIBRATION_FILE = Path(__file__).with_name("tolerances.json")
RADIAL_RTOL = 1e-9
SAFETY = 3.0
CALIBRATION_H = (0.05, 0.025, 0.0125)
TINY = 1e-14


@lru_cache(maxsize=None)
def constants() -> dict:
    with open(CALIBRATION_FILE) as fh:
        return dict(json.load(fh)["constants"])


def resolution_tolerance(check: str, rel_h: float, scale: float) -> float:
    """C_check (h/l)^2 |scale|."""
    return constants()[check] * rel_h**2 * max(abs(scale), TINY)


def radial_tolerance(scale: float) -> float:
    return RADIAL_RTOL * max(abs(scale), TINY)


def _errors(reports, rel_h):
    """Normalised deviations err / ((h/l)^2 scale) of equality-case reports."""
    out = {}
    h2 = rel_h**2
    for r in reports:
        md = r.metadata
        if r.name == "heintze_karcher":
            out[r.name] = abs(r.residual) / (h2 * md["scale"])
        elif r.name == "soap_bubble":
            out[r.name] = max(abs(r.residual) / (h2 * md["scale"]), abs(md["min_H_minus_H0"]) / (h2 * abs(md["H0"])))
        elif r.name == "reilly_residual":
            out[r.name] = abs(r.rhs) / (h2 * md["scale"])
        elif r.name == "shear_stress":
            out[r.name] = abs(r.residual) / (h2 * r.rhs)
        elif r.name == "p_function":
            ell = md["length_scale"]
            lap = max(abs(r.lhs), abs(md["laplacian_max"])) * ell**2 / md["P_scale"]
            out[r.name] = lap / h2
            out["p_constancy"] = md["P_spread"] / md["P_scale"] / h2
        elif r.name == "minkowski_annulus":
            spread = max(md["u_nu_spread"].values()) / md["u_nu_scale"]
            out[r.name] = max(abs(r.residual) / md["scale"], spread) / h2
        elif r.name == "umbilicity_check":
            spread = max(md["u_nu_spread"].values()) / md["u_nu_scale"]
            out[r.name] = max(r.residual / r.metadata["bracket_scale"], spread) / h2
    return out


def calibrate(hs=CALIBRATION_H, safety: float = SAFETY, log=None) -> dict:
    """Measure the equality-case deviations and return ``{check: C}``."""
    from .fem2d import FourierCurve, PlanarDomain, build_mesh, solve_fem
    from .geometry import SpaceForm
    from .identities import SolvedProblem, run_checks
    from .nonlinearity import Nonlinearity

    sf = SpaceForm(2, 0.0)
    f = Nonlinearity((2.0,))
    disk = PlanarDomain(sf, FourierCurve.circle(1.0))
    ring = PlanarDomain(sf, FourierCurve.circle(1.0), FourierCurve.circle(0.5))
    a = (1.0 - 0.5**2) / 2.0
    worst: dict = {}
    for h in hs:
        for dom, diri in ((disk, None), (ring, {"inner": a})):
            sol = solve_fem(build_mesh(dom, h), f, diri)
            p = SolvedProblem.from_fem(sol)
            names = ("minkowski_annulus", "umbilicity_check") if diri else None
            errs = _errors(run_checks(p, names), h / p.length_scale())
            if log:
                log(f"h={h} {'annulus' if diri else 'disk'}: " + ", ".join(f"{k}={v:.3g}" for k, v in sorted(errs.items())))
            for k, v in errs.items():
                worst[k] = max(worst.get(k, 0.0), v)
    return {k: float(f"{safety * max(v, 1e-3):.3g}") for k, v in sorted(worst.items())}


def main(argv=None) -> int:
    consts = calibrate(log=lambda s: print(s, file=sys.stderr, flush=True))
    doc = {
        "schema": 1,
        "note": "C in tol = C (h/l)^2 scale; measured on equality cases times a safety factor",
        "calibration_h": list(CALIBRATION_H),
        "safety": SAFETY,
        "constants": consts,
    }
    CALIBRATION_FILE.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    constants.cache_clear()
    print(json.dumps(consts, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
