"""Command-line front end: ``serrinlab solve|verify|sweep --config run.json``.

Exit codes: 0 ok, 1 configuration error, 2 solver or domain failure,
3 unmet hypothesis under ``--strict``, 4 an asserted check failed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from threadpoolctl import threadpool_limits

from . import __version__
from .exceptions import (
    ConfigError,
    HypothesisNotMet,
    InadmissibleDomain,
    MultipleBoundaries,
    NotAnnular,
    SerrinLabError,
)
from .fem2d import FourierCurve, PlanarDomain, build_mesh, solve_fem, write_mesh
from .geometry import Annulus, Ball, SpaceForm
from .identities import ANNULAR_CHECKS, BALL_CHECKS, CHECKS, SolvedProblem
from .nonlinearity import Nonlinearity
from .radial import closed_form_linear, linear_profile, solve_radial

logger = logging.getLogger("serrinlab")

SCHEMA_VERSION = 1
THREADS_ENV = "SERRINLAB_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_STRICT = 3
EXIT_CHECK_FAILED = 4


# --- configuration -------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CurveSpec(_Strict):
    a0: float = Field(gt=0)
    cos: list[float] = Field(default_factory=list)
    sin: list[float] = Field(default_factory=list)


class DomainSpec(_Strict):
    type: Literal["ball", "annulus", "curve"]
    R: Optional[float] = Field(None, gt=0)
    R_in: Optional[float] = Field(None, gt=0)
    R_out: Optional[float] = Field(None, gt=0)
    outer: Optional[CurveSpec] = None
    inner: Optional[CurveSpec] = None

    @model_validator(mode="after")
    def _fields_match_type(self):
        need = {"ball": {"R"}, "annulus": {"R_in", "R_out"}, "curve": {"outer"}}[self.type]
        allowed = need | ({"inner"} if self.type == "curve" else set())
        given = {k for k in ("R", "R_in", "R_out", "outer", "inner") if getattr(self, k) is not None}
        if need - given:
            raise ValueError(f"domain type {self.type!r} needs {sorted(need - given)}")
        if given - allowed:
            raise ValueError(f"domain type {self.type!r} does not take {sorted(given - allowed)}")
        if self.type == "annulus" and not self.R_in < self.R_out:
            raise ValueError(f"need R_in < R_out, got R_in={self.R_in}, R_out={self.R_out}")
        return self


class GeometrySpec(_Strict):
    n: int = Field(2, ge=2)
    k: float = 0.0
    domain: DomainSpec


class NonlinearitySpec(_Strict):
    coeffs: Optional[list[float]] = None
    linear_family: bool = False

    @model_validator(mode="after")
    def _one_source(self):
        if (self.coeffs is None) == (not self.linear_family):
            raise ValueError("give exactly one of 'coeffs' or 'linear_family: true'")
        if self.coeffs is not None and not self.coeffs:
            raise ValueError("coeffs must not be empty")
        return self


class SolverSpec(_Strict):
    method: Literal["radial", "closed_form", "fem"] = "radial"
    grid_size: int = Field(256, ge=16)
    grid: Literal["chebyshev", "uniform"] = "chebyshev"
    target_h: float = Field(0.05, gt=0)
    tol: Optional[float] = Field(None, gt=0)
    max_iter: int = Field(50, ge=1)
    inner_value: Union[float, Literal["closed_form"]] = 0.0


class OutputSpec(_Strict):
    dir: str = "serrinlab-out"
    formats: list[Literal["json", "csv"]] = Field(default_factory=lambda: ["json", "csv"])


class RunConfig(_Strict):
    schema_version: Literal[1] = 1
    geometry: GeometrySpec
    nonlinearity: NonlinearitySpec = Field(default_factory=lambda: NonlinearitySpec(linear_family=True))
    solver: SolverSpec = Field(default_factory=SolverSpec)
    checks: list[str] = Field(default_factory=lambda: ["all"])
    output: OutputSpec = Field(default_factory=OutputSpec)
    strict: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        dom = self.geometry.domain
        method = self.solver.method
        if method in ("radial", "closed_form") and dom.type == "curve":
            raise ValueError(f"method {method!r} needs a ball or annulus domain")
        if method == "fem" and self.geometry.n != 2:
            raise ValueError("the fem method is two-dimensional; set n = 2")
        if method == "closed_form" and self.nonlinearity.coeffs is not None:
            nl = Nonlinearity(tuple(self.nonlinearity.coeffs))
            if not nl.is_linear_family(self.geometry.n, self.geometry.k):
                raise ValueError("closed_form needs the linear family f(u) = n + n k u")
        unknown = [c for c in self.checks if c != "all" and c not in CHECKS]
        if unknown:
            raise ValueError(f"unknown checks {unknown}; available: {sorted(CHECKS)}")
        return self

    def resolved(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_config(doc: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"]) or "<root>"
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from None


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(doc)


# --- solving --------------------------------------------------------------------

class Run:
    """A solved configuration plus whatever closed-form constants came with it."""

    def __init__(self, cfg: RunConfig, problem: SolvedProblem, extras: dict, solution):
        self.cfg = cfg
        self.problem = problem
        self.extras = extras
        self.solution = solution


def _nonlinearity(cfg: RunConfig) -> Nonlinearity:
    g = cfg.geometry
    if cfg.nonlinearity.linear_family:
        return Nonlinearity.linear_family(g.n, g.k)
    return Nonlinearity(tuple(cfg.nonlinearity.coeffs))


def _radial_domain(spec: DomainSpec):
    return Ball(spec.R) if spec.type == "ball" else Annulus(spec.R_in, spec.R_out)


def _planar_domain(sf: SpaceForm, spec: DomainSpec) -> PlanarDomain:
    if spec.type == "ball":
        return PlanarDomain(sf, FourierCurve.circle(spec.R))
    if spec.type == "annulus":
        return PlanarDomain(sf, FourierCurve.circle(spec.R_out), FourierCurve.circle(spec.R_in))
    curve = lambda c: FourierCurve(c.a0, tuple(c.cos), tuple(c.sin))
    return PlanarDomain(sf, curve(spec.outer), None if spec.inner is None else curve(spec.inner))


def _inner_value(cfg: RunConfig, sf: SpaceForm) -> float:
    v = cfg.solver.inner_value
    if v != "closed_form":
        return float(v)
    dom = cfg.geometry.domain
    if dom.type != "annulus":
        raise ConfigError("inner_value 'closed_form' needs an annulus domain")
    u, _, _ = linear_profile(sf, dom.R_out, np.array([dom.R_in]))
    return float(u[0])


def solve(cfg: RunConfig) -> Run:
    g, s = cfg.geometry, cfg.solver
    sf = SpaceForm(g.n, g.k)
    f = _nonlinearity(cfg)
    extras: dict = {}
    if s.method == "closed_form":
        cf = closed_form_linear(sf, _radial_domain(g.domain), grid_size=s.grid_size, grid=s.grid)
        sol = cf.solution
        extras = {"a": cf.a, "c0": cf.c0, "c1": cf.c1}
        return Run(cfg, SolvedProblem.from_radial(sol), extras, sol)
    if s.method == "radial":
        sol = solve_radial(
            sf, _radial_domain(g.domain), f, inner_value=_inner_value(cfg, sf), grid_size=s.grid_size,
            grid=s.grid, tol=s.tol or 1e-11, max_iter=s.max_iter,
        )
        return Run(cfg, SolvedProblem.from_radial(sol), extras, sol)
    dom = _planar_domain(sf, g.domain)
    mesh = build_mesh(dom, s.target_h)
    diri = {"inner": _inner_value(cfg, sf)} if dom.is_annular else None
    sol = solve_fem(mesh, f, diri, tol=s.tol or 1e-10, max_iter=s.max_iter)
    extras = {"vertices": mesh.num_vertices, "triangles": mesh.num_triangles, "min_angle_deg": mesh.min_angle_deg()}
    return Run(cfg, SolvedProblem.from_fem(sol), extras, sol)


# --- output ---------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def _header(cfg: RunConfig, kind: str, extra: Optional[dict] = None) -> list[str]:
    lines = [f"# serrinlab {__version__} {kind}", f"# schema_version: {SCHEMA_VERSION}", f"# config_digest: {cfg.digest()}"]
    for key, val in (extra or {}).items():
        lines.append(f"# {key}: {_fmt(val)}")
    return lines


def write_csv(path: Path, header: list[str], columns: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _envelope(cfg: RunConfig, **payload) -> dict:
    return {"schema_version": SCHEMA_VERSION, "serrinlab_version": __version__, "config_digest": cfg.digest(),
            "config": cfg.resolved(), **payload}


def _clean(x):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_solution(run: Run, out: Path) -> list[Path]:
    cfg, p, sol = run.cfg, run.problem, run.solution
    extra = {k: v for k, v in run.extras.items() if v is not None}
    written = []
    if p.kind == "radial":
        path = out / "solution.csv"
        write_csv(path, _header(cfg, "solution", extra), ["r", "u", "du", "d2u"], zip(sol.grid, sol.u, sol.du, sol.d2u))
        written.append(path)
        path = out / "traces.csv"
        rows = [(b.label, b.radius, b.value, b.u_nu, b.H, b.area, b.X_nu) for b in sol.boundary]
        write_csv(path, _header(cfg, "traces", extra), ["label", "radius", "value", "u_nu", "H", "area", "X_nu"], rows)
        written.append(path)
    else:
        mesh = sol.mesh
        path = out / "mesh.txt"
        write_mesh(mesh, path)
        written.append(path)
        path = out / "solution.csv"
        rows = zip(range(mesh.num_vertices), mesh.points[:, 0], mesh.points[:, 1], sol.values)
        write_csv(path, _header(cfg, "solution", extra), ["vertex", "x", "y", "u"], rows)
        written.append(path)
        path = out / "traces.csv"
        rows = []
        for t in p.traces:
            rows.extend(zip([t.label] * len(t.weights), t.theta, t.weights, t.u_nu, t.H, t.X_nu))
        write_csv(path, _header(cfg, "traces", extra), ["label", "theta", "weight", "u_nu", "H", "X_nu"], rows)
        written.append(path)
    summary = _envelope(cfg, command="solve", method=cfg.solver.method, closed_form=_clean(extra),
                        closure_defect=p.closure_defect(), u_min=p.u_min, u_max=p.u_max,
                        newton_trace=[float(x) for x in sol.newton_trace], files=[x.name for x in written])
    write_json(out / "summary.json", _clean(summary))
    return written


def _reports_payload(cfg: RunConfig, reports, error: Optional[dict] = None) -> dict:
    return _envelope(cfg, command="verify", reports=[r.to_dict() for r in reports], error=error)


REPORT_COLUMNS = ["name", "lhs", "rhs", "residual", "tolerance", "verdict", "inputs_digest"]


def write_reports(cfg: RunConfig, reports, out: Path, error: Optional[dict] = None) -> None:
    if "json" in cfg.output.formats:
        write_json(out / "reports.json", _clean(_reports_payload(cfg, reports, error)))
    if "csv" in cfg.output.formats:
        rows = [[getattr(r, c) for c in REPORT_COLUMNS] for r in reports]
        write_csv(out / "reports.csv", _header(cfg, "reports"), REPORT_COLUMNS, rows)


def _error_payload(exc: BaseException) -> dict:
    out = {"type": type(exc).__name__, "message": str(exc)}
    trace = getattr(exc, "trace", None)
    if trace:
        out["newton_trace"] = [float(x) for x in trace]
    return out


def _write_error(cfg: RunConfig, out: Path, command: str, exc: BaseException) -> None:
    write_json(out / "error.json", _clean(_envelope(cfg, command=command, error=_error_payload(exc))))


# --- commands ---------------------------------------------------------------------

def _check_names(cfg: RunConfig, p: SolvedProblem) -> list[str]:
    if "all" in cfg.checks:
        return list(ANNULAR_CHECKS if p.is_annular else BALL_CHECKS)
    return list(cfg.checks)


def verify_exit_code(reports) -> int:
    return EXIT_OK if all(r.passed for r in reports if r.asserted) else EXIT_CHECK_FAILED


def _solve_or_exit(cfg: RunConfig, out: Path, command: str):
    """Solve, or write error.json and return the exit code."""
    try:
        return solve(cfg)
    except InadmissibleDomain as exc:
        _write_error(cfg, out, command, exc)
        logger.error("inadmissible geometry: %s", exc)
        return EXIT_CONFIG
    except SerrinLabError as exc:
        _write_error(cfg, out, command, exc)
        logger.error("solver failed: %s: %s", type(exc).__name__, exc)
        return EXIT_SOLVER


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    run = _solve_or_exit(cfg, out, "solve")
    if isinstance(run, int):
        return run
    write_solution(run, out)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, strict: bool) -> int:
    run = _solve_or_exit(cfg, out, "verify")
    if isinstance(run, int):
        return run
    reports = []
    for name in _check_names(cfg, run.problem):
        try:
            reports.append(CHECKS[name](run.problem, strict=strict))
        except HypothesisNotMet as exc:
            if exc.report is not None:
                reports.append(exc.report)
            write_reports(cfg, reports, out, _error_payload(exc))
            logger.error("%s", exc)
            return EXIT_STRICT
        except (MultipleBoundaries, NotAnnular) as exc:
            write_reports(cfg, reports, out, _error_payload(exc))
            logger.error("check %s does not apply: %s", name, exc)
            return EXIT_CONFIG
        except SerrinLabError as exc:
            write_reports(cfg, reports, out, _error_payload(exc))
            logger.error("check %s failed to evaluate: %s", name, exc)
            return EXIT_SOLVER
    write_reports(cfg, reports, out)
    for r in reports:
        logger.info("%-18s %-20s residual=%.3e tol=%.1e", r.name, r.verdict, r.residual, r.tolerance)
    return verify_exit_code(reports)


def _set_path(doc: dict, dotted: str, value):
    """Assign ``value`` at a dotted path such as ``geometry.domain.outer.cos.1``."""
    keys = dotted.split(".")
    cur = doc
    for i, key in enumerate(keys):
        last = i == len(keys) - 1
        if isinstance(cur, list):
            try:
                idx = int(key)
            except ValueError:
                raise ConfigError(f"{dotted}: {key!r} is not a list index") from None
            while len(cur) <= idx:
                cur.append(0.0)
            if last:
                cur[idx] = value
            else:
                cur = cur[idx]
        elif isinstance(cur, dict):
            if last:
                cur[key] = value
            else:
                if key not in cur or cur[key] is None:
                    cur[key] = [] if keys[i + 1].isdigit() else {}
                cur = cur[key]
        else:
            raise ConfigError(f"{dotted}: cannot descend into {type(cur).__name__}")


def parse_values(text: str) -> list:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            vals.append(json.loads(tok))
        except json.JSONDecodeError:
            raise ConfigError(f"sweep value {tok!r} is not a JSON scalar") from None
    if not vals:
        raise ConfigError("no sweep values given")
    return vals


REPORT_FIELDS = ("lhs", "rhs", "residual", "tolerance", "verdict")


def cmd_sweep(cfg: RunConfig, out: Path, param: str, values: list, strict: bool) -> int:
    base = cfg.resolved()
    # columns are fixed up front from the base configuration so rows never reshape
    if "all" in cfg.checks:
        annular = cfg.geometry.domain.type == "annulus" or (
            cfg.geometry.domain.type == "curve" and cfg.geometry.domain.inner is not None
        )
        names = list(ANNULAR_CHECKS if annular else BALL_CHECKS)
    else:
        names = list(cfg.checks)
    columns = ["index", "param", "value", "status", "error", "closure_defect"]
    columns += [f"{nm}.{fld}" for nm in names for fld in REPORT_FIELDS]
    if cfg.solver.method == "closed_form":
        columns += ["a", "c0", "c1"]
    worst = EXIT_OK
    path = out / "sweep.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in _header(cfg, "sweep", {"param": param, "values": json.dumps(values)}):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        fh.flush()
        for i, val in enumerate(values):
            row = {"index": i, "param": param, "value": val, "status": "ok", "error": ""}
            doc = copy.deepcopy(base)
            try:
                _set_path(doc, param, val)
                c = parse_config(doc)
                run = solve(c)
                row["closure_defect"] = run.problem.closure_defect()
                for k in ("a", "c0", "c1"):
                    if k in run.extras:
                        row[k] = run.extras[k]
                for nm in names:
                    rep = CHECKS[nm](run.problem, strict=strict)
                    for fld in REPORT_FIELDS:
                        row[f"{nm}.{fld}"] = getattr(rep, fld)
                    if rep.asserted and not rep.passed:
                        worst = max(worst, EXIT_CHECK_FAILED)
            except ConfigError as exc:
                row.update(status="config-error", error=f"ConfigError: {exc}".replace("\n", " "))
                worst = max(worst, EXIT_CONFIG)
            except InadmissibleDomain as exc:
                row.update(status="config-error", error=f"{type(exc).__name__}: {exc}")
                worst = max(worst, EXIT_CONFIG)
            except HypothesisNotMet as exc:
                row.update(status="hypothesis-not-met", error=str(exc))
                worst = max(worst, EXIT_STRICT)
            except SerrinLabError as exc:
                row.update(status="error", error=f"{type(exc).__name__}: {exc}")
                worst = max(worst, EXIT_SOLVER)
            w.writerow([_fmt(row.get(c)) for c in columns])
            fh.flush()
            logger.info("sweep %s=%s: %s", param, val, row["status"])
    return worst


# --- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="serrinlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"serrinlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve a configured problem and write solution and trace CSVs"),
        ("verify", "solve and run the identity checks"),
        ("sweep", "repeat verify over values of one config parameter"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="path to a JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: output.dir of the config)")
        p.add_argument("--strict", action="store_true", help="unmet hypotheses are errors (exit 3)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            p.add_argument("--param", required=True, help="dotted config path, e.g. solver.target_h")
            p.add_argument("--values", required=True, help="comma-separated JSON scalars")
    return ap


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        threads = _threads()
        cfg = load_config(args.config)
        strict = bool(args.strict or cfg.strict)
        out = Path(args.out if args.out is not None else cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "config.resolved.json", _envelope(cfg))
        with threadpool_limits(limits=threads):
            if args.command == "solve":
                return cmd_solve(cfg, out)
            if args.command == "verify":
                return cmd_verify(cfg, out, strict)
            return cmd_sweep(cfg, out, args.param, parse_values(args.values), strict)
    except ConfigError as exc:
        print(f"serrinlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SerrinLabError as exc:
        # domain errors raised while building geometry from a valid config
        print(f"serrinlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
