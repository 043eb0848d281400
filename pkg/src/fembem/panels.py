"""Closed-form potentials of flat triangles with constant and linear densities.

For a target ``x`` and a flat triangle ``T`` with unit normal ``n`` write
``w0 = (x - v0) . n`` and ``rho = x - w0 n`` for the projection of ``x`` onto
the plane of ``T``. With ``R = |x - y|`` the functions here return

* ``I0 = int_T 1/R``
* ``I1 = int_T (y - rho)/R``
* ``J0 = int_T (x - y)/R^3``  (the negative gradient of ``I0`` in ``x``)
* ``J1 = int_T (y - rho)/R^3``

using the classical edge-by-edge formulas (logarithms along each edge and
the solid angle subtended by the triangle). No ``1/(4 pi)`` factor is
applied. Targets must not lie on the closure of the triangle itself.
"""
from __future__ import annotations

import numpy as np

from .mesh import TRI_EDGES


def _edge_terms(x, tri):
    """Per-edge geometric quantities, broadcasting targets (N,) against panels (M,)."""
    v = tri  # (M, 3, 3)
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    w0 = np.einsum("nmd,md->nm", x[:, None, :] - v[None, :, 0], n)  # (N, M)
    rho = x[:, None, :] - w0[..., None] * n[None]  # (N, M, 3)

    # edges in counter-clockwise order: (v0 -> v1), (v1 -> v2), (v2 -> v0)
    a = v[:, [0, 1, 2]]
    b = v[:, [1, 2, 0]]
    length = np.linalg.norm(b - a, axis=2)  # (M, 3)
    s = (b - a) / length[..., None]
    m = np.cross(s, n[:, None, :])  # outward in-plane edge normals
    d_a = a[None] - rho[:, :, None, :]  # (N, M, 3, 3)
    lm = np.einsum("nmed,med->nme", d_a, s)
    lp = lm + length[None]
    t0 = np.einsum("nmed,med->nme", d_a, m)
    r0sq = t0**2 + (w0**2)[..., None]
    rp = np.sqrt(lp**2 + r0sq)
    rm = np.sqrt(lm**2 + r0sq)
    # log((rp + lp)/(rm + lm)) without cancellation for negative l
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.where(lp >= 0, rp + lp, r0sq / (rp - lp))
        den = np.where(lm >= 0, rm + lm, r0sq / (rm - lm))
        log = np.log(num / den)
    log = np.where(length[None] > 0, log, 0.0)
    aw = np.abs(w0)[..., None]
    beta = np.arctan2(t0 * lp, r0sq + aw * rp) - np.arctan2(t0 * lm, r0sq + aw * rm)
    return n, w0, m, t0, r0sq, lp, lm, rp, rm, log, beta


def panel_integrals(x, tri, need=("I0", "I1", "J0", "J1")):
    """Closed-form panel integrals for all (target, panel) pairs.

    Parameters
    ----------
    x : (N, 3) targets
    tri : (M, 3, 3) triangle vertices, counter-clockwise about the normal

    Returns
    -------
    dict with the requested keys; ``I0`` has shape (N, M), the vector
    quantities (N, M, 3).
    """
    x = np.atleast_2d(np.asarray(x, float))
    tri = np.asarray(tri, float).reshape(-1, 3, 3)
    n, w0, m, t0, r0sq, lp, lm, rp, rm, log, beta = _edge_terms(x, tri)
    omega = beta.sum(axis=2)  # signed solid angle times sign(w0) convention
    out = {}
    if "I0" in need:
        out["I0"] = np.einsum("nme,nme->nm", t0, log) - np.abs(w0) * omega
    if "I1" in need:
        c = 0.5 * (r0sq * log + lp * rp - lm * rm)
        out["I1"] = np.einsum("nme,med->nmd", c, m)
    if "J0" in need:
        out["J0"] = np.einsum("nme,med->nmd", log, m) + (np.sign(w0) * omega)[..., None] * n[None]
    if "J1" in need:
        out["J1"] = -np.einsum("nme,med->nmd", log, m)
    return out


def point_triangle_distance(x, tri) -> np.ndarray:
    """Euclidean distance from every target to every (closed) triangle, shape (N, M)."""
    x = np.atleast_2d(np.asarray(x, float))
    tri = np.asarray(tri, float).reshape(-1, 3, 3)
    n, w0, m, t0, *_ = _edge_terms(x, tri)
    inside = np.all(t0 >= 0, axis=2)
    a = tri[:, TRI_EDGES[:, 0]]
    b = tri[:, TRI_EDGES[:, 1]]
    ab = b - a  # (M, 3, 3)
    ax = x[:, None, None, :] - a[None]
    s = np.clip(np.einsum("nmed,med->nme", ax, ab) / np.einsum("med,med->me", ab, ab)[None], 0.0, 1.0)
    seg = np.linalg.norm(ax - s[..., None] * ab[None], axis=3).min(axis=2)
    return np.where(inside, np.abs(w0), seg)
