"""Derivative recovery for P1 fields and a weak, local Laplace-Beltrami.

Pointwise second derivatives of a P1 solution are only trustworthy where the
mesh is locally structured, so they are used for diagnostics.  The weak
Laplacian tests a field against a smooth bump and needs no derivatives of
the field at all; its discretisation error is O(h^2) on any quasi-uniform
mesh.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from ..geometry import warp, warp_deriv
from .solver import FEMSolution


def _patches(mesh, depth: int = 2):
    """Padded vertex patches (k-rings) as an index matrix and a validity mask."""
    tri = mesh.triangles
    nv = mesh.num_vertices
    r = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
    c = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
    A = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(nv, nv))
    A = ((A + A.T + sp.identity(nv, format="csr")) > 0).astype(np.int8)
    B = A
    for _ in range(depth - 1):
        B = (B @ A > 0).astype(np.int8)
    B = B.tocsr()
    counts = np.diff(B.indptr)
    width = counts.max()
    idx = np.repeat(np.arange(nv)[:, None], width, axis=1)
    mask = np.arange(width)[None, :] < counts[:, None]
    idx[mask] = B.indices
    return idx, mask


def recover_derivatives(sol: FEMSolution, depth: int = 2):
    """Gradient (nv, 2) and Hessian (nv, 2, 2) in chart coordinates.

    Each vertex gets a least-squares quadratic over its ``depth``-ring.
    """
    mesh = sol.mesh
    idx, mask = _patches(mesh, depth)
    d = mesh.points[idx] - mesh.points[:, None, :]
    scale = np.abs(np.where(mask[..., None], d, 0.0)).max(axis=(1, 2))
    scale[scale == 0] = 1.0
    x = d[..., 0] / scale[:, None]
    y = d[..., 1] / scale[:, None]
    V = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1) * mask[..., None]
    rhs = sol.values[idx] * mask
    VtV = np.einsum("npi,npj->nij", V, V)
    Vtb = np.einsum("npi,np->ni", V, rhs)
    coef = np.linalg.solve(VtV + 1e-14 * np.eye(6), Vtb[..., None])[..., 0]
    grad = coef[:, 1:3] / scale[:, None]
    hess = np.empty((mesh.num_vertices, 2, 2))
    hess[:, 0, 0] = 2 * coef[:, 3] / scale**2
    hess[:, 1, 1] = 2 * coef[:, 5] / scale**2
    hess[:, 0, 1] = hess[:, 1, 0] = coef[:, 4] / scale**2
    return grad, hess


def polar_frame(points):
    """Unit radial and angular vectors at chart points (x-axis frame at the pole)."""
    r = np.hypot(points[:, 0], points[:, 1])
    safe = np.where(r > 0, r, 1.0)
    er = np.where(r[:, None] > 0, points / safe[:, None], np.array([1.0, 0.0]))
    et = np.column_stack([-er[:, 1], er[:, 0]])
    return r, er, et


def _lb_coefficients(k: float, r):
    """(h'/h - r/h^2, r^2/h^2): the metric Laplacian in chart terms is
    u_rr + b (e_t^T Hess e_t) + a u_r with these a, b; series near the pole."""
    r = np.asarray(r, dtype=float)
    small = r < 1e-3
    rs = np.where(small, 1.0, r)
    h = warp(k, rs)
    a = np.where(small, -2.0 * k * r / 3.0, warp_deriv(k, rs) / h - rs / h**2)
    b = np.where(small, 1.0 + k * r * r / 3.0, rs**2 / h**2)
    return a, b


def traceless_hessian_sq(sol: FEMSolution, grad=None, hess=None):
    """|traceless Hessian|_g^2 at vertices from recovered derivatives (diagnostic)."""
    if grad is None or hess is None:
        grad, hess = recover_derivatives(sol)
    k = sol.mesh.sf.k
    r, er, et = polar_frame(sol.mesh.points)
    a, b = _lb_coefficients(k, r)
    small = r < 1e-3
    rs = np.where(small, 1.0, r)
    h = warp(k, rs)
    c = np.where(small, k * r / 3.0, (1.0 - rs * warp_deriv(k, rs) / h) / h)
    u_r = np.einsum("ni,ni->n", grad, er)
    u_t = np.einsum("ni,ni->n", grad, et)  # (1/r) u_theta
    Hrr = np.einsum("ni,nij,nj->n", er, hess, er)
    Hrt = np.einsum("ni,nij,nj->n", er, hess, et)
    Htt = np.einsum("ni,nij,nj->n", et, hess, et)
    # components in the orthonormal frame d_r, (1/h) d_theta
    A = Hrr
    B = np.sqrt(b) * Hrt + c * u_t
    C = b * Htt + a * u_r
    return 0.5 * (A - C) ** 2 + 2.0 * B**2


def bump_centers(mesh, rho: float, nodes=None, samples: int = 4096):
    """Centres for bumps of radius ``rho`` near the given vertices.

    A vertex whose chart distance to the boundary is at least ``rho`` is its
    own centre; otherwise the centre is pushed along the inward normal of the
    nearest boundary point so that the bump fits inside the domain.
    """
    dom = mesh.domain
    nodes = mesh.interior_nodes() if nodes is None else np.asarray(nodes)
    pts = mesh.points[nodes]
    th = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    bpts, bnorm = [], []
    for label in dom.labels():
        c = dom.curve(label)
        r, dr = c.r(th), c.dr(th)
        p = np.column_stack([r * np.cos(th), r * np.sin(th)])
        tang = np.column_stack([dr * np.cos(th) - r * np.sin(th), dr * np.sin(th) + r * np.cos(th)])
        tang /= np.linalg.norm(tang, axis=1)[:, None]
        nrm = np.column_stack([tang[:, 1], -tang[:, 0]])  # right of a ccw curve: outward of its disk
        if label != "outer":
            nrm = -nrm
        bpts.append(p)
        bnorm.append(nrm)
    bpts = np.concatenate(bpts)
    bnorm = np.concatenate(bnorm)
    tree = cKDTree(bpts)
    dist, j = tree.query(pts)
    out = pts.copy()
    close = dist < rho
    out[close] = bpts[j[close]] - rho * bnorm[j[close]]
    dist2, _ = tree.query(out)
    if np.any(dist2 < rho * (1 - 1e-2) - 2 * np.pi * bpts.std() / samples):
        raise ValueError("bump radius too large for the domain")
    return out


def weak_laplacian(sol: FEMSolution, values_q: np.ndarray, centers: np.ndarray, rho: float, power: int = 5, max_pairs: int = 4_000_000, return_mean: bool = False):
    """<Delta_g w, psi_c> / <1, psi_c> for bumps psi_c = (1 - |x-c|^2/rho^2)^power.

    ``values_q`` holds w at the element quadrature points.  Only values of
    w enter: the integral is int w Delta_g psi dA_g.  The psi-weighted mean of
    w is subtracted first, which changes nothing exactly (int Delta_g psi = 0)
    but removes most of the quadrature error on triangles cut by the bump.
    With ``return_mean`` the psi-weighted means of w are returned as well.
    """
    A = sol.assembly
    k = sol.mesh.sf.k
    qp = A.qpoints.reshape(-1, 2)
    w = A.qweight.ravel()
    vals = np.asarray(values_q, dtype=float).ravel()
    r, er, et = polar_frame(qp)
    a, b = _lb_coefficients(k, r)
    tree = cKDTree(qp)
    p = int(power)
    # bound memory by the expected number of (centre, point) pairs per batch
    density = len(qp) / max(float(w.sum()), 1e-300)
    chunk = max(1, int(max_pairs / max(1.0, np.pi * rho**2 * density)))
    out = np.empty(len(centers))
    means = np.empty(len(centers))
    for start in range(0, len(centers), chunk):
        C = centers[start:start + chunk]
        nb = tree.query_ball_point(C, rho, return_sorted=False)
        j = np.concatenate([np.asarray(x, dtype=np.int64) for x in nb])
        i = np.repeat(np.arange(len(C)), [len(x) for x in nb])
        d = qp[j] - C[i]
        o = np.clip(1.0 - np.einsum("pi,pi->p", d, d) / rho**2, 0.0, None)
        psi = o**p
        g1 = -2.0 * p * o ** (p - 1) / rho**2  # grad psi = g1 * d
        g2 = 4.0 * p * (p - 1) * o ** (p - 2) / rho**4  # Hess psi = g1 I + g2 d d^T
        dr = np.einsum("pi,pi->p", d, er[j])
        dt = np.einsum("pi,pi->p", d, et[j])
        lap = (g1 + g2 * dr * dr) + b[j] * (g1 + g2 * dt * dt) + a[j] * g1 * dr
        ww = w[j]
        mass = np.bincount(i, ww * psi, len(C))
        mean = np.bincount(i, ww * psi * vals[j], len(C)) / mass
        means[start:start + len(C)] = mean
        out[start:start + len(C)] = np.bincount(i, ww * (vals[j] - mean[i]) * lap, len(C)) / mass
    return (out, means) if return_mean else out
