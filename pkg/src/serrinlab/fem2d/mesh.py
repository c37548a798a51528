"""Triangulations of star-shaped planar domains in a geodesic polar chart.

Vertices are stored as Cartesian chart points ``(r cos t, r sin t)``; the
metric there is ``g = xx^T + (h(r)/r)^2 x'x'^T`` with ``x = p/|p|`` and
``x'`` its rotation by 90 degrees, which is smooth through the pole.

Meshes are built from concentric rings of points that follow the boundary
curves, triangulated by Delaunay and clipped to the domain.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import Delaunay

from ..exceptions import InadmissibleDomain, MeshFailure
from ..geometry import SpaceForm, warp
from .curves import FourierCurve

MESH_FORMAT = "serrinlab-mesh 1"


def _dunavant4():
    # 6-point rule, exact for polynomials of degree 4; barycentric points, weights sum to 1
    a, b = 0.445948490915965, 0.091576213509771
    wa, wb = 0.223381589678011, 0.109951743655322
    bary = np.array(
        [[a, a, 1 - 2 * a], [a, 1 - 2 * a, a], [1 - 2 * a, a, a],
         [b, b, 1 - 2 * b], [b, 1 - 2 * b, b], [1 - 2 * b, b, b]]
    )
    return bary, np.array([wa, wa, wa, wb, wb, wb])


TRI_RULE = _dunavant4()


@dataclass(frozen=True)
class PlanarDomain:
    sf: SpaceForm
    outer: FourierCurve
    inner: Optional[FourierCurve] = None

    def __post_init__(self):
        if self.sf.n != 2:
            raise InadmissibleDomain(f"planar domains need n = 2, got n = {self.sf.n}")
        theta = np.linspace(0.0, 2 * math.pi, 4096, endpoint=False)
        ro = self.outer.r(theta)
        if np.any(ro <= 0):
            raise MeshFailure("outer curve reaches the pole, so it is not a simple star-shaped loop")
        if ro.max() >= self.sf.max_radius:
            raise InadmissibleDomain(f"outer curve leaves the admissible radius {self.sf.max_radius}")
        if self.inner is not None:
            ri = self.inner.r(theta)
            if np.any(ri <= 0):
                raise MeshFailure("inner curve reaches the pole")
            if np.any(ri >= ro):
                raise MeshFailure("inner curve is not strictly inside the outer curve")

    @property
    def is_annular(self) -> bool:
        return self.inner is not None

    def curve(self, label: str) -> FourierCurve:
        if label == "outer":
            return self.outer
        if label == "inner" and self.inner is not None:
            return self.inner
        raise KeyError(label)

    def labels(self) -> tuple[str, ...]:
        return ("outer", "inner") if self.is_annular else ("outer",)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.arctan2(pts[:, 1], pts[:, 0])
        ok = r < self.outer.r(th)
        if self.inner is not None:
            ok &= r > self.inner.r(th)
        return ok

    def scaled(self, lam: float) -> "PlanarDomain":
        return PlanarDomain(self.sf, self.outer.scaled(lam), None if self.inner is None else self.inner.scaled(lam))

    def rotated(self, theta0: float) -> "PlanarDomain":
        return PlanarDomain(
            self.sf, self.outer.rotated(theta0), None if self.inner is None else self.inner.rotated(theta0)
        )


def metric_ratio(k: float, r):
    """h(r)/r, continued by 1 at the pole."""
    r = np.asarray(r, dtype=float)
    if k > 0:
        return np.sinc(math.sqrt(k) * r / math.pi)
    if k < 0:
        x = math.sqrt(-k) * r
        small = x < 1e-4
        out = np.where(small, 1.0 + x * x / 6.0, np.sinh(np.where(small, 1.0, x)) / np.where(small, 1.0, x))
        return out
    return np.ones_like(r)


def metric_tensor(k: float, pts: np.ndarray) -> np.ndarray:
    """g at chart points, shape (..., 2, 2)."""
    r = np.hypot(pts[..., 0], pts[..., 1])
    q = metric_ratio(k, r)
    safe = np.where(r > 0, r, 1.0)
    xh = np.stack([pts[..., 0] / safe, pts[..., 1] / safe], axis=-1)
    # g = q^2 I + (1 - q^2) x x^T, which is the identity at the pole
    eye = np.eye(2)
    return q[..., None, None] ** 2 * eye + (1.0 - q**2)[..., None, None] * xh[..., :, None] * xh[..., None, :]


def metric_length(k: float, a: np.ndarray, b: np.ndarray, nq: int = 3) -> np.ndarray:
    """Metric length of straight chart segments a -> b (Gauss-Legendre along the chord)."""
    x, w = np.polynomial.legendre.leggauss(nq)
    s = 0.5 * (x + 1.0)
    d = b - a
    total = np.zeros(len(a))
    for si, wi in zip(s, w):
        g = metric_tensor(k, a + si * d)
        total += 0.5 * wi * np.sqrt(np.einsum("ni,nij,nj->n", d, g, d))
    return total


@dataclass(frozen=True, eq=False)
class Mesh2D:
    domain: PlanarDomain
    points: np.ndarray
    triangles: np.ndarray
    loops: dict = field(default_factory=dict)
    target_h: float = float("nan")

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        tri = np.array(self.triangles, dtype=np.int64)
        pts.setflags(write=False)
        tri.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "triangles", tri)
        loops = {}
        for key, idx in self.loops.items():
            arr = np.array(idx, dtype=np.int64)
            arr.setflags(write=False)
            loops[key] = arr
        object.__setattr__(self, "loops", loops)

    @property
    def sf(self) -> SpaceForm:
        return self.domain.sf

    @property
    def num_vertices(self) -> int:
        return len(self.points)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate(list(self.loops.values())))

    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.num_vertices, dtype=bool)
        mask[self.boundary_nodes()] = False
        return np.flatnonzero(mask)

    def chart_areas(self) -> np.ndarray:
        p = self.points[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def metric_areas(self) -> np.ndarray:
        """Per-triangle area under g, by the degree-4 rule used in assembly."""
        bary, w = TRI_RULE
        p = self.points[self.triangles]
        qp = np.einsum("qj,tjd->tqd", bary, p)
        r = np.hypot(qp[..., 0], qp[..., 1])
        return self.chart_areas() * (metric_ratio(self.sf.k, r) * w).sum(1)

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def edge_metric_lengths(self) -> np.ndarray:
        e = self.edges()
        return metric_length(self.sf.k, self.points[e[:, 0]], self.points[e[:, 1]])

    def angles_deg(self) -> np.ndarray:
        p = self.points[self.triangles]
        out = np.empty((len(p), 3))
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosv = np.einsum("nd,nd->n", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out[:, i] = np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))
        return out

    def min_angle_deg(self) -> float:
        return float(self.angles_deg().min())

    def boundary_deviation(self) -> float:
        """Largest |r_vertex - r(theta_vertex)| over the boundary loops."""
        dev = 0.0
        for label, idx in self.loops.items():
            p = self.points[idx]
            r = np.hypot(p[:, 0], p[:, 1])
            th = np.arctan2(p[:, 1], p[:, 0])
            dev = max(dev, float(np.abs(r - self.domain.curve(label).r(th)).max()))
        return dev

    def scaled(self, lam: float) -> "Mesh2D":
        return Mesh2D(self.domain.scaled(lam), self.points * lam, self.triangles, self.loops, self.target_h * lam)


# --- mesh generation ---------------------------------------------------------

MIN_LOOP = 16  # vertices per boundary loop, at least

def _perimeter(k, rfun, drfun, samples=2048):
    th = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    return float(np.mean(np.hypot(drfun(th), warp(k, rfun(th)))) * 2 * math.pi)


def _arclength_map(curve: FourierCurve, k: float, samples: int = 8192):
    """q in [0, 1) -> angle at which the metric arclength fraction of ``curve`` equals q."""
    th = np.linspace(0.0, 2 * math.pi, samples + 1)
    sp = curve.speed(k, th)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (sp[1:] + sp[:-1]) * np.diff(th))])
    s /= s[-1]
    return lambda q: np.interp(np.mod(q, 1.0), s, th)


CORE_FRACTION = 0.5  # balls: graded layers stop here, a hexagonal core fills the rest
_S3 = 0.5 * math.sqrt(3.0)


def _graded_rings(dom: PlanarDomain, target_h: float, n: int, rad, drad, depth: float, stop: float):
    """Rings (rho, count, offset) from the outer loop (rho=1) down to rho=stop.

    Consecutive rings are staggered by half a spacing and sit sqrt(3)/2
    spacings apart, so triangles between them are close to equilateral in
    the chart.  On annuli the count halves whenever the metric spacing drops
    below target_h / 2.
    """
    k = dom.sf.k
    rings = [(1.0, n, 0.0)]
    while rings[-1][0] > stop:
        rho, cnt, off = rings[-1]
        pc = _perimeter(0.0, lambda t: rad(rho, t), lambda t: drad(rho, t))
        pm = _perimeter(k, lambda t: rad(rho, t), lambda t: drad(rho, t))
        if dom.inner is not None and pm / cnt < 0.5 * target_h and cnt % 2 == 0 and cnt // 2 >= MIN_LOOP:
            rings.append((rho - 1.5 * _S3 * pc / cnt / depth, cnt // 2, 0.5 * (off + 0.5)))
        else:
            rings.append((rho - _S3 * pc / cnt / depth, cnt, (off + 0.5) % 1.0))
    # stretch so the last ring lands exactly on ``stop``
    scale = (1.0 - stop) / (1.0 - rings[-1][0])
    return [(1.0 - (1.0 - rho) * scale, cnt, off) for rho, cnt, off in rings]


def _polar(r, th):
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def build_mesh(dom: PlanarDomain, target_h: float) -> Mesh2D:
    """Triangulate ``dom`` with metric edge lengths around ``target_h``.

    Vertices lie on rings rho -> (blend of the boundary curves at rho),
    equally spaced in metric arclength of the outer curve.  Near the boundary
    every ring carries the same number of vertices as the loop itself; this
    structured strip is what makes the recovered normal derivative converge
    at second order.  Balls get a hexagonal core (6j vertices on ring j).
    """
    if not target_h > 0:
        raise ValueError(f"target_h must be positive, got {target_h}")
    k = dom.sf.k
    outer, inner = dom.outer, dom.inner
    th_ = np.linspace(0.0, 2 * math.pi, 2048, endpoint=False)
    t_out = _arclength_map(outer, k)
    n = 6 * math.ceil(max(MIN_LOOP, _perimeter(k, outer.r, outer.dr) / target_h) / 6)
    if inner is None:
        t_in = t_out
        rad = lambda rho, th: rho * outer.r(th)  # noqa: E731
        drad = lambda rho, th: rho * outer.dr(th)  # noqa: E731
        depth, stop = float(outer.r(th_).mean()), CORE_FRACTION
    else:
        t_in = _arclength_map(inner, k)
        rad = lambda rho, th: inner.r(th) + rho * (outer.r(th) - inner.r(th))  # noqa: E731
        drad = lambda rho, th: inner.dr(th) + rho * (outer.dr(th) - inner.dr(th))  # noqa: E731
        depth, stop = float((outer.r(th_) - inner.r(th_)).mean()), 0.0

    rings = _graded_rings(dom, target_h, n, rad, drad, depth, stop)
    pts, loops, start = [], {}, 0
    for i, (rho, cnt, off) in enumerate(rings):
        q = (np.arange(cnt) + off) / cnt
        th = (1.0 - rho) * t_in(q) + rho * t_out(q)
        pts.append(_polar(rad(rho, th), th))
        if i == 0:
            loops["outer"] = start + np.arange(cnt)
        elif i == len(rings) - 1 and inner is not None:
            loops["inner"] = start + np.arange(cnt)[::-1]  # clockwise
        start += cnt
    if inner is None:
        J, rho_j = n // 6, rings[-1][0]
        for j in range(J - 1, 0, -1):
            th = t_out(np.arange(6 * j) / (6 * j))
            pts.append(_polar(rad(rho_j * j / J, th), th))
        pts.append(np.zeros((1, 2)))
    return _triangulate(dom, np.concatenate(pts), loops, target_h)


def _triangulate(dom: PlanarDomain, points: np.ndarray, loops: dict, target_h: float) -> Mesh2D:
    try:
        tri = Delaunay(points).simplices
    except Exception as exc:  # qhull errors are not a public type
        raise MeshFailure(f"Delaunay triangulation failed: {exc}") from exc
    cent = points[tri].mean(axis=1)
    tri = tri[dom.contains(cent)]
    # orient counter-clockwise in the chart
    p = points[tri]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    area = np.abs(area)
    if np.any(area <= 1e-14 * target_h**2):
        raise MeshFailure("degenerate triangle produced")

    edge_set = set(map(tuple, np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)))
    for label, idx in loops.items():
        pairs = np.sort(np.column_stack([idx, np.roll(idx, -1)]), axis=1)
        missing = [tuple(e) for e in pairs if tuple(e) not in edge_set]
        if missing:
            raise MeshFailure(f"{len(missing)} edges of the {label} loop are missing from the triangulation")

    used = np.zeros(len(points), dtype=bool)
    used[tri.ravel()] = True
    if not used.all():
        remap = -np.ones(len(points), dtype=np.int64)
        remap[used] = np.arange(used.sum())
        points = points[used]
        tri = remap[tri]
        loops = {key: remap[idx] for key, idx in loops.items()}
    return Mesh2D(dom, points, tri, loops, target_h)


# --- text format -----------------------------------------------------------------

def _curve_line(label: str, c: FourierCurve) -> str:
    fmt = lambda xs: ",".join(repr(float(x)) for x in xs)  # noqa: E731
    return f"curve {label} {c.a0!r} cos={fmt(c.cos)} sin={fmt(c.sin)}"


def _parse_curve(tokens) -> tuple[str, FourierCurve]:
    label, a0 = tokens[1], float(tokens[2])
    parts = dict(t.split("=", 1) for t in tokens[3:])
    vals = lambda s: tuple(float(x) for x in s.split(",") if x)  # noqa: E731
    return label, FourierCurve(a0, vals(parts.get("cos", "")), vals(parts.get("sin", "")))


def write_mesh(mesh: Mesh2D, dest: Union[str, os.PathLike, io.TextIOBase]) -> None:
    """Write the line-oriented mesh format documented in the README."""
    lines = [MESH_FORMAT, f"n {mesh.sf.n}", f"k {mesh.sf.k!r}", f"target_h {mesh.target_h!r}"]
    for label in mesh.domain.labels():
        lines.append(_curve_line(label, mesh.domain.curve(label)))
    lines.append(f"vertices {mesh.num_vertices}")
    lines.extend(f"{x!r} {y!r}" for x, y in mesh.points.tolist())
    lines.append(f"triangles {mesh.num_triangles}")
    lines.extend(f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist())
    lines.append(f"loops {len(mesh.loops)}")
    for label, idx in mesh.loops.items():
        lines.append(f"{label} {len(idx)} " + " ".join(str(i) for i in idx.tolist()))
    text = "\n".join(lines) + "\n"
    if isinstance(dest, io.TextIOBase):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def read_mesh(src: Union[str, os.PathLike, io.TextIOBase]) -> Mesh2D:
    if isinstance(src, io.TextIOBase):
        text = src.read()
    else:
        with open(src, encoding="utf-8") as fh:
            text = fh.read()
    lines = iter(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))
    if next(lines) != MESH_FORMAT:
        raise MeshFailure("not a serrinlab mesh file")
    header = {}
    curves = {}
    line = next(lines)
    while not line.startswith("vertices"):
        tok = line.split()
        if tok[0] == "curve":
            label, c = _parse_curve(tok)
            curves[label] = c
        else:
            header[tok[0]] = tok[1]
        line = next(lines)
    nv = int(line.split()[1])
    points = np.array([[float(v) for v in next(lines).split()] for _ in range(nv)])
    nt = int(next(lines).split()[1])
    tris = np.array([[int(v) for v in next(lines).split()] for _ in range(nt)], dtype=np.int64)
    nl = int(next(lines).split()[1])
    loops = {}
    for _ in range(nl):
        tok = next(lines).split()
        loops[tok[0]] = np.array([int(v) for v in tok[2: 2 + int(tok[1])]], dtype=np.int64)
    sf = SpaceForm(int(header.get("n", 2)), float(header["k"]))
    dom = PlanarDomain(sf, curves["outer"], curves.get("inner"))
    return Mesh2D(dom, points, tris, loops, float(header.get("target_h", "nan")))
