"""Lowest-order Nedelec (Whitney) edge elements on tetrahedra.

The edge function of a global edge ``(a, b)``, ``a < b``, restricted to a tet
is ``lambda_a grad(lambda_b) - lambda_b grad(lambda_a)`` with curl
``2 grad(lambda_a) x grad(lambda_b)``. Its tangential integral along the
edge from ``a`` to ``b`` is 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from . import MU0
from .mesh import TET_EDGES, MeshError, SurfaceMesh, TetMesh
from .quadrature import TET_RULE_BARY, TET_RULE_WEIGHTS


@dataclass(frozen=True, eq=False)
class EdgeSpace:
    """Global edge dofs with per-tet local-to-global map and orientation signs."""

    mesh: TetMesh
    edges: np.ndarray  # (n, 2) node ids, low -> high
    tet_edges: np.ndarray  # (m, 6)
    tet_signs: np.ndarray  # (m, 6) +1 when local direction matches global

    @classmethod
    def on(cls, mesh: TetMesh) -> "EdgeSpace":
        edges, tet_edges = mesh.edges()
        local = mesh.tets[:, TET_EDGES]
        signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1).astype(np.int64)
        return cls(mesh, edges, tet_edges, signs)

    @property
    def dim(self) -> int:
        return len(self.edges)

    def barycentric_gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of the four barycentric coordinates per tet, and volumes."""
        p = self.mesh.nodes[self.mesh.tets]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=2)
        inv = np.linalg.inv(J)  # rows are grad(lambda_1..3)
        grads = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
        return grads, np.abs(np.linalg.det(J)) / 6.0

    def local_curls(self) -> tuple[np.ndarray, np.ndarray]:
        """Signed constant curls of the six local edge functions, shape (m, 6, 3)."""
        g, vol = self.barycentric_gradients()
        curls = 2.0 * np.cross(g[:, TET_EDGES[:, 0]], g[:, TET_EDGES[:, 1]])
        return curls * self.tet_signs[:, :, None], vol

    def curl(self, coeffs) -> np.ndarray:
        """Per-tet constant curl of the edge function with coefficients ``coeffs``."""
        curls, _ = self.local_curls()
        return np.einsum("mkd,mk->md", curls, np.asarray(coeffs)[self.tet_edges])

    def evaluate(self, coeffs, bary) -> np.ndarray:
        """Field values at barycentric points ``bary`` (q, 4) in every tet, shape (m, q, 3)."""
        g, _ = self.barycentric_gradients()
        a, b = TET_EDGES[:, 0], TET_EDGES[:, 1]
        lam = np.asarray(bary)
        # local shape functions (m, q, 6, 3)
        shape = lam[None, :, a, None] * g[:, None, b] - lam[None, :, b, None] * g[:, None, a]
        c = np.asarray(coeffs)[self.tet_edges] * self.tet_signs
        return np.einsum("mqkd,mk->mqd", shape, c)

    def interpolate(self, field) -> np.ndarray:
        """Edge-moment interpolant of a callable field (3-point Gauss along each edge)."""
        x, w = np.polynomial.legendre.leggauss(3)
        s, w = 0.5 * (x + 1), 0.5 * w
        p0 = self.mesh.nodes[self.edges[:, 0]]
        t = self.mesh.nodes[self.edges[:, 1]] - p0
        out = np.zeros(self.dim)
        for si, wi in zip(s, w):
            out += wi * np.einsum("ij,ij->i", field(p0 + si * t), t)
        return out


def _scatter(space: EdgeSpace, local: np.ndarray) -> sp.csr_matrix:
    m = space.mesh.n_tets
    rows = np.repeat(space.tet_edges, 6, axis=1).ravel()
    cols = np.tile(space.tet_edges, (1, 6)).ravel()
    sgn = (space.tet_signs[:, :, None] * space.tet_signs[:, None, :]).reshape(m, 36)
    data = (local.reshape(m, 36) * sgn).ravel()
    mat = sp.coo_matrix((data, (rows, cols)), shape=(space.dim, space.dim)).tocsr()
    mat.sum_duplicates()
    # symmetrize to remove reduction-order rounding
    return ((mat + mat.T) * 0.5).tocsr()


def assemble_curl_curl(space: EdgeSpace, mu_r=None) -> sp.csr_matrix:
    """Galerkin matrix of ``(mu_r^-1 curl u, curl v)``; dimensionless after the mu0 scaling."""
    mu = space.mesh.mu_r() if mu_r is None else np.broadcast_to(np.asarray(mu_r, float), (space.mesh.n_tets,))
    if np.any(~np.isfinite(mu)) or np.any(mu <= 0):
        raise MeshError("relative permeability must be positive")
    g, vol = space.barycentric_gradients()
    c = 2.0 * np.cross(g[:, TET_EDGES[:, 0]], g[:, TET_EDGES[:, 1]])
    local = np.einsum("mid,mjd->mij", c, c) * (vol / mu)[:, None, None]
    return _scatter(space, local)


def assemble_mass(space: EdgeSpace, weight=None) -> sp.csr_matrix:
    """Edge-element mass matrix ``(w u, v)`` with a per-tet weight (exact)."""
    g, vol = space.barycentric_gradients()
    if weight is not None:
        vol = vol * np.broadcast_to(np.asarray(weight, float), vol.shape)
    gg = np.einsum("mad,mbd->mab", g, g)
    lam = (np.ones((4, 4)) + np.eye(4)) / 20.0  # int lambda_a lambda_b / |K|
    a, b = TET_EDGES[:, 0], TET_EDGES[:, 1]
    A, B = a[:, None], b[:, None]
    C, D = a[None, :], b[None, :]
    local = (
        lam[A, C] * gg[:, B, D]
        - lam[A, D] * gg[:, B, C]
        - lam[B, C] * gg[:, A, D]
        + lam[B, D] * gg[:, A, C]
    ) * vol[:, None, None]
    return _scatter(space, local)


def assemble_source(space: EdgeSpace, current=None, magnetization=None) -> np.ndarray:
    """Load vector ``mu0 (j, v) + mu0 (M, curl v)``.

    ``current`` may be an ``(m, 3)`` array of per-tet constants or a callable
    sampled at a degree-2 rule; by default the mesh's prescribed current plus
    the region-constant densities are used. ``magnetization`` defaults to the
    region table.
    """
    mesh = space.mesh
    if magnetization is None:
        magnetization = mesh.magnetization()
    f = _magnet_load(space, magnetization)
    if current is None:
        f = f + _current_load(space, mesh.region_current())
        if mesh.current is not None:
            f = f + _current_load(space, mesh.current)
    else:
        f = f + _current_load(space, current)
    return MU0 * f


def _current_load(space: EdgeSpace, current) -> np.ndarray:
    mesh = space.mesh
    g, vol = space.barycentric_gradients()
    a, b = TET_EDGES[:, 0], TET_EDGES[:, 1]
    if callable(current):
        p = mesh.nodes[mesh.tets]  # (m, 4, 3)
        xq = np.einsum("qa,mad->mqd", TET_RULE_BARY, p)
        jq = np.asarray(current(xq.reshape(-1, 3)), float).reshape(xq.shape)
        lam = TET_RULE_BARY
        shape = lam[None, :, a, None] * g[:, None, b] - lam[None, :, b, None] * g[:, None, a]
        local = np.einsum("q,mqd,mqkd->mk", TET_RULE_WEIGHTS * 6.0, jq, shape) * vol[:, None]
    else:
        j = np.broadcast_to(np.asarray(current, float), (mesh.n_tets, 3))
        if not np.any(j):
            return np.zeros(space.dim)
        # int N_k = |K|/4 (grad lambda_b - grad lambda_a)
        local = 0.25 * vol[:, None] * np.einsum("md,mkd->mk", j, g[:, b] - g[:, a])
    return _gather(space, local)


def _magnet_load(space: EdgeSpace, magnetization) -> np.ndarray:
    M = np.broadcast_to(np.asarray(magnetization, float), (space.mesh.n_tets, 3))
    if not np.any(M):
        return np.zeros(space.dim)
    g, vol = space.barycentric_gradients()
    c = 2.0 * np.cross(g[:, TET_EDGES[:, 0]], g[:, TET_EDGES[:, 1]])
    return _gather(space, np.einsum("md,mkd->mk", M, c) * vol[:, None])


def _gather(space: EdgeSpace, local: np.ndarray) -> np.ndarray:
    return np.bincount(
        space.tet_edges.ravel(), weights=(local * space.tet_signs).ravel(), minlength=space.dim
    )


def discrete_gradient(space: EdgeSpace) -> sp.csr_matrix:
    """Node-to-edge incidence: ``(G v)_e = v[b] - v[a]`` for edge ``(a, b)``."""
    n = space.dim
    rows = np.repeat(np.arange(n), 2)
    cols = space.edges.ravel()
    data = np.tile([-1.0, 1.0], n)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, space.mesh.n_nodes))


def trace_restriction(space: EdgeSpace, surf: SurfaceMesh) -> sp.csr_matrix:
    """0/1 matrix selecting the volume edge dofs that lie on the surface, in surface order."""
    key = space.edges[:, 0] * space.mesh.n_nodes + space.edges[:, 1]
    skey = surf.edges[:, 0] * space.mesh.n_nodes + surf.edges[:, 1]
    pos = np.searchsorted(key, skey)
    pos = np.minimum(pos, len(key) - 1)
    if np.any(key[pos] != skey):
        raise MeshError("surface edge without a matching volume edge")
    ns = len(skey)
    return sp.csr_matrix((np.ones(ns), (np.arange(ns), pos)), shape=(ns, space.dim))


class GradientProjector:
    """l2-orthogonal projection onto the complement of discrete gradients.

    The curl-curl operator annihilates gradients, so a consistent right-hand
    side must be orthogonal to them. The graph Laplacian ``Gr^T Gr`` is made
    regular by pinning one node per connected component.
    """

    def __init__(self, space: EdgeSpace):
        self.Gr = discrete_gradient(space)
        lap = (self.Gr.T @ self.Gr).tocsc()
        ncomp, labels = connected_components(lap, directed=False)
        pins = np.array([np.flatnonzero(labels == c)[0] for c in range(ncomp)])
        keep = np.ones(lap.shape[0], dtype=bool)
        keep[pins] = False
        self._keep = keep
        self._lu = splu(lap[keep][:, keep].tocsc())

    def __call__(self, f: np.ndarray) -> np.ndarray:
        rhs = self.Gr.T @ f
        v = np.zeros(self.Gr.shape[1])
        v[self._keep] = self._lu.solve(rhs[self._keep])
        return f - self.Gr @ v


def project_source(space: EdgeSpace, f: np.ndarray) -> np.ndarray:
    return GradientProjector(space)(f)
