"""Quadrature rules on the reference triangle and tetrahedron.

Reference triangle: ``x = V0 + s*(V1 - V0) + t*(V2 - V0)`` with ``s, t >= 0``
and ``s + t <= 1`` (area 1/2). Pair rules return test points, trial points
and weights for the product of two reference triangles (total weight 1/4).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(order: int):
    """Collapsed tensor Gauss rule with ``order**2`` points, exact to degree ``2*order - 2``."""
    x, w = gauss_01(order)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    s = u.ravel()
    t = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel()
    return np.stack([s, t], axis=1), weights


# degree-2, four-point rule on the reference tetrahedron (volume 1/6), barycentric
_A, _B = 0.5854101966249685, 0.1381966011250105
TET_RULE_BARY = np.array([[_A, _B, _B, _B], [_B, _A, _B, _B], [_B, _B, _A, _B], [_B, _B, _B, _A]])
TET_RULE_WEIGHTS = np.full(4, 1.0 / 24.0)


def _tensor4(order: int):
    x, w = gauss_01(order)
    grids = np.meshgrid(x, x, x, x, indexing="ij")
    wgrid = np.meshgrid(w, w, w, w, indexing="ij")
    pts = [g.ravel() for g in grids]
    weight = np.prod([g.ravel() for g in wgrid], axis=0)
    return pts, weight


def _from_ss(x1, x2):
    # Sauter-Schwab reference {0 <= x2 <= x1 <= 1} -> (s, t) reference
    return np.stack([x1 - x2, x2], axis=1)


@lru_cache(maxsize=None)
def coincident_rule(order: int):
    """Six-region relative-coordinate rule for a triangle paired with itself."""
    (xi, e1, e2, e3), w = _tensor4(order)
    w = w * xi**3 * e1**2 * e2
    e12, e123 = e1 * e2, e1 * e2 * e3
    regions = [
        ((xi, xi * (1 - e1 + e12)), (xi * (1 - e123), xi * (1 - e1))),
        ((xi * (1 - e123), xi * (1 - e1)), (xi, xi * (1 - e1 + e12))),
        ((xi, xi * (e1 - e12 + e123)), (xi * (1 - e12), xi * (e1 - e12))),
        ((xi * (1 - e12), xi * (e1 - e12)), (xi, xi * (e1 - e12 + e123))),
        ((xi * (1 - e123), xi * (e1 - e123)), (xi, xi * (e1 - e12))),
        ((xi, xi * (e1 - e12)), (xi * (1 - e123), xi * (e1 - e123))),
    ]
    return _stack(regions, [w] * 6)


@lru_cache(maxsize=None)
def edge_adjacent_rule(order: int):
    """Five-region rule; both triangles share the edge V0-V1 with matching vertex order."""
    (xi, e1, e2, e3), w = _tensor4(order)
    w = w * xi**3 * e1**2
    e12, e123 = e1 * e2, e1 * e2 * e3
    regions = [
        ((xi, xi * e1 * e3), (xi * (1 - e12), xi * e1 * (1 - e2))),
        ((xi, xi * e1), (xi * (1 - e123), xi * e12 * (1 - e3))),
        ((xi * (1 - e12), xi * e1 * (1 - e2)), (xi, xi * e123)),
        ((xi * (1 - e123), xi * e12 * (1 - e3)), (xi, xi * e1)),
        ((xi * (1 - e123), xi * e1 * (1 - e2 * e3)), (xi, xi * e12)),
    ]
    return _stack(regions, [w, w * e2, w * e2, w * e2, w * e2])


@lru_cache(maxsize=None)
def vertex_adjacent_rule(order: int):
    """Two-region rule; both triangles share vertex V0."""
    (xi, e1, e2, e3), w = _tensor4(order)
    w = w * xi**3 * e2
    regions = [
        ((xi, xi * e1), (xi * e2, xi * e2 * e3)),
        ((xi * e2, xi * e2 * e3), (xi, xi * e1)),
    ]
    return _stack(regions, [w, w])


@lru_cache(maxsize=None)
def regular_pair_rule(order: int):
    pts, w = triangle_rule(order)
    n = len(w)
    test = np.repeat(pts, n, axis=0)
    trial = np.tile(pts, (n, 1))
    return test, trial, np.outer(w, w).ravel()


def _stack(regions, weights):
    test = np.vstack([_from_ss(*r[0]) for r in regions])
    trial = np.vstack([_from_ss(*r[1]) for r in regions])
    return test, trial, np.concatenate(weights)
