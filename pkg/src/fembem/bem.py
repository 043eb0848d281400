"""Boundary element spaces, Galerkin boundary integral operators and exterior fields.

Conventions
-----------
* RT basis on triangle ``T`` for its edge opposite vertex ``p``:
  ``s (x - p) / (2|T|)`` with ``s`` the triangle's edge sign; it carries unit
  flux across the edge in the direction ``t x n`` (``t`` the global edge
  direction).
* Tangential (Nedelec) trace basis: ``n x RT``; its surface curl on ``T``
  equals the RT divergence, ``s / |T|``.
* Surface curl of a scalar: ``Curl_G phi = grad_G phi x n``. Its RT
  coefficients are the signed edge-vertex incidence ``G``.
* Laplace kernel ``U(r) = 1 / (4 pi r)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import TRI_EDGES, MeshError, SurfaceMesh
from .panels import panel_integrals, point_triangle_distance
from .quadrature import (
    coincident_rule,
    edge_adjacent_rule,
    regular_pair_rule,
    triangle_rule,
    vertex_adjacent_rule,
)

FOUR_PI = 4.0 * np.pi


class NearFieldError(ValueError):
    """Evaluation point too close to the boundary for the requested accuracy."""


# ---------------------------------------------------------------------------
# spaces


@dataclass(frozen=True, eq=False)
class RTSpace:
    """Lowest-order Raviart-Thomas space, one dof per surface edge."""

    surf: SurfaceMesh

    @property
    def dim(self) -> int:
        return self.surf.n_edges

    def basis(self, tris, points) -> np.ndarray:
        """Signed local basis values ``(len(tris), q, 3 local edges, 3)`` at physical points ``(len(tris), q, 3)``."""
        s = self.surf
        p = s.points[tris]  # (t, 3, 3)
        scale = s.tri_signs[tris] / (2.0 * s.areas[tris])[:, None]
        return (points[:, :, None, :] - p[:, None, :, :]) * scale[:, None, :, None]

    def evaluate(self, coeffs, tris, points) -> np.ndarray:
        c = np.asarray(coeffs)[self.surf.tri_edges[tris]]
        return np.einsum("tqkd,tk->tqd", self.basis(tris, points), c)

    def interpolate(self, field, order: int = 4) -> np.ndarray:
        """Apply the dof functionals ``pi_l(v) = int_E (n x v) . t ds`` to a callable ``v``."""
        s = self.surf
        x, w = np.polynomial.legendre.leggauss(order)
        x, w = 0.5 * (x + 1), 0.5 * w
        # use the triangle whose counter-clockwise traversal matches the global direction
        t_idx, k_idx = np.nonzero(s.tri_signs > 0)
        out = np.zeros(self.dim)
        e = s.tri_edges[t_idx, k_idx]
        a = s.nodes[s.edges[e, 0]]
        b = s.nodes[s.edges[e, 1]]
        nu = np.cross(b - a, s.normals[t_idx])  # edge length times co-normal
        for xi, wi in zip(x, w):
            out[e] += wi * np.einsum("ij,ij->i", field(a + xi * (b - a)), nu)
        return out


@dataclass(frozen=True, eq=False)
class P1Space:
    """Continuous piecewise-linear functions, one dof per surface vertex."""

    surf: SurfaceMesh

    @property
    def dim(self) -> int:
        return self.surf.n_vertices

    def evaluate(self, coeffs, bary) -> np.ndarray:
        """Values at barycentric points ``(q, 3)`` of every triangle, shape (nt, q)."""
        return np.asarray(bary) @ np.asarray(coeffs)[self.surf.tri_vertices].T

    def interpolate(self, func) -> np.ndarray:
        return np.asarray(func(self.surf.nodes[self.surf.vertices]), float)


def assemble_topological_gradient(surf: SurfaceMesh) -> sp.csr_matrix:
    """``G[l, k] = pi_l(Curl_G phi_k)``: +1 at the head vertex of edge ``l``, -1 at its tail."""
    ne = surf.n_edges
    rows = np.repeat(np.arange(ne), 2)
    data = np.tile(np.array([-1, 1], dtype=np.int64), ne)
    return sp.csr_matrix((data, (rows, surf.edge_vertices.ravel())), shape=(ne, surf.n_vertices))


def surface_divergence(surf: SurfaceMesh) -> sp.csr_matrix:
    """Per-triangle sum of signed edge coefficients (RT divergence times area)."""
    nt = surf.n_triangles
    rows = np.repeat(np.arange(nt), 3)
    return sp.csr_matrix(
        (surf.tri_signs.ravel(), (rows, surf.tri_edges.ravel())), shape=(nt, surf.n_edges)
    )


def assemble_identity(surf: SurfaceMesh) -> sp.csr_matrix:
    """Pairing ``M[i, j] = int RT_i . (n x RT_j)`` of RT test and tangential-trace trial functions."""
    bary = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])  # edge midpoints, degree 2
    p = surf.points
    x = np.einsum("qa,tad->tqd", bary, p)
    phi = RTSpace(surf).basis(np.arange(surf.n_triangles), x)  # (t, q, 3, 3)
    nphi = np.cross(surf.normals[:, None, None, :], phi)
    local = np.einsum("tqkd,tqld->tkl", phi, nphi) * (surf.areas / 3.0)[:, None, None]
    rows = np.repeat(surf.tri_edges, 3, axis=1).ravel()
    cols = np.tile(surf.tri_edges, (1, 3)).ravel()
    m = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(surf.n_edges,) * 2).tocsr()
    m.sum_duplicates()
    return m


# ---------------------------------------------------------------------------
# dense blocks


@dataclass(frozen=True, eq=False)
class DenseBlock:
    """Dense operator block with its row/column dof labels and component pair."""

    data: np.ndarray
    rows: np.ndarray  # global dof ids of the rows
    cols: np.ndarray
    space: tuple[str, str] = ("rt", "rt")
    pair: tuple[int, int] | None = None

    @property
    def T(self) -> "DenseBlock":
        pair = None if self.pair is None else self.pair[::-1]
        return DenseBlock(self.data.T, self.cols, self.rows, self.space[::-1], pair)


@dataclass(frozen=True)
class QuadratureSettings:
    singular_order: int = 4
    near_order: int = 4
    far_order: int = 3
    near_factor: float = 1.5  # near if centroid distance < factor * (diam + diam')
    chunk_points: int = 192  # test quadrature points per far-field chunk


@dataclass(eq=False)
class BemOperators:
    """Galerkin blocks for test triangles ``test_tris`` against trial triangles ``trial_tris``.

    ``V`` and ``K`` are indexed by ``row_edges`` x ``col_edges``; ``V0`` by
    ``test_tris`` x ``trial_tris``. ``K`` holds the principal-value part of
    the double layer only.
    """

    test_tris: np.ndarray
    trial_tris: np.ndarray
    row_edges: np.ndarray
    col_edges: np.ndarray
    V: np.ndarray | None = None
    K: np.ndarray | None = None
    V0: np.ndarray | None = None
    stats: dict = field(default_factory=dict)


def _triangle_sets(surf, tris):
    tris = np.arange(surf.n_triangles) if tris is None else np.asarray(tris)
    if tris.dtype == bool:
        tris = np.flatnonzero(tris)
    return tris


def assemble_operators(
    surf: SurfaceMesh,
    test_tris=None,
    trial_tris=None,
    which=("V", "K", "V0"),
    settings: QuadratureSettings = QuadratureSettings(),
    trial_surf: SurfaceMesh | None = None,
) -> BemOperators:
    """Assemble the requested dense operators in one sweep over triangle pairs.

    ``trial_surf`` may be a different surface (e.g. a rotated copy); touching
    pairs are then detected by shared node ids, so disjoint meshes are fine.
    """
    tsurf = surf if trial_surf is None else trial_surf
    test_tris = _triangle_sets(surf, test_tris)
    trial_tris = _triangle_sets(tsurf, trial_tris)
    row_edges = np.unique(surf.tri_edges[test_tris])
    col_edges = np.unique(tsurf.tri_edges[trial_tris])
    ops = BemOperators(test_tris, trial_tris, row_edges, col_edges)
    nr, nc = len(row_edges), len(col_edges)
    # local (triangle, k) -> block row / column
    rloc = np.searchsorted(row_edges, surf.tri_edges[test_tris])
    cloc = np.searchsorted(col_edges, tsurf.tri_edges[trial_tris])
    want_v, want_k, want_v0 = "V" in which, "K" in which, "V0" in which
    if want_v:
        ops.V = np.zeros((nr, nc))
    if want_k:
        ops.K = np.zeros((nr, nc))
    if want_v0:
        ops.V0 = np.zeros((len(test_tris), len(trial_tris)))

    geo_t = _Geometry(surf, test_tris)
    geo_s = _Geometry(tsurf, trial_tris)
    shared = _shared_counts(surf, test_tris, tsurf, trial_tris)
    near_i, near_j = _far_sweep(ops, geo_t, geo_s, rloc, cloc, shared, settings)
    _near_pairs(ops, geo_t, geo_s, rloc, cloc, near_i, near_j, shared, settings)
    if want_v:
        ops.stats["V_asym"] = float(np.abs(ops.V - ops.V.T).max()) if nr == nc and np.array_equal(row_edges, col_edges) else None
    return ops


class _Geometry:
    def __init__(self, surf: SurfaceMesh, tris: np.ndarray):
        self.surf = surf
        self.tris = tris
        self.nodes = surf.triangles[tris]
        self.p = surf.points[tris]  # (t, 3, 3)
        self.area = surf.areas[tris]
        self.sign = surf.tri_signs[tris].astype(float)
        self.normal = surf.normals[tris]
        self.centroid = self.p.mean(axis=1)
        lengths = np.linalg.norm(self.p[:, TRI_EDGES[:, 1]] - self.p[:, TRI_EDGES[:, 0]], axis=2)
        self.diam = lengths.max(axis=1)

    def points(self, order):
        ref, w = triangle_rule(order)
        x = self.p[:, 0, None] + ref[None, :, :1] * (self.p[:, 1, None] - self.p[:, 0, None])
        x = x + ref[None, :, 1:] * (self.p[:, 2, None] - self.p[:, 0, None])
        return x, w[None, :] * (2.0 * self.area)[:, None]


def _shared_counts(surf, test_tris, tsurf, trial_tris):
    n = max(surf.nodes.shape[0], tsurf.nodes.shape[0])

    def incidence(s, tris):
        t = s.triangles[tris]
        return sp.csr_matrix(
            (np.ones(t.size), (np.repeat(np.arange(len(tris)), 3), t.ravel())), shape=(len(tris), n)
        )

    if tsurf is not surf and tsurf.nodes is not surf.nodes:
        return sp.csr_matrix((len(test_tris), len(trial_tris)))
    return (incidence(surf, test_tris) @ incidence(tsurf, trial_tris).T).tocsr()


def _local_v(p, q, sp_, sq, at, aq, m0, mx, my, mxy):
    """RT single-layer local matrices from kernel moments; p, q relative to the moment origin."""
    pq = np.einsum("bkd,bld->bkl", p, q)
    loc = mxy[:, None, None] - np.einsum("bd,bld->bl", mx, q)[:, None, :]
    loc = loc - np.einsum("bkd,bd->bk", p, my)[:, :, None] + m0[:, None, None] * pq
    return loc * (sp_[:, :, None] * sq[:, None, :]) / (4.0 * at * aq)[:, None, None]


def _local_k(p, q, sp_, sq, at, aq, gs, ym):
    """Double-layer local matrices ``int int RT_k(x) . (grad U x RT_l(y))`` (sign folded in)."""
    diff = p[:, :, None, :] - q[:, None, :, :]  # (b, 3, 3, 3)
    pxq = np.cross(p[:, :, None, :], q[:, None, :, :])
    loc = np.einsum("bkld,bd->bkl", diff, ym) - np.einsum("bkld,bd->bkl", pxq, gs)
    return loc * (sp_[:, :, None] * sq[:, None, :]) / (4.0 * at * aq)[:, None, None]


def _far_sweep(ops, gt, gs, rloc, cloc, shared, st: QuadratureSettings):
    """Regular rule on all non-near pairs via dense point blocks; returns near pair lists."""
    X, WX = gt.points(st.far_order)
    Y, WY = gs.points(st.far_order)
    q = WX.shape[1]
    nt, ns = len(gt.tris), len(gs.tris)
    Yf = Y.reshape(-1, 3)
    chunk = max(1, st.chunk_points // q)
    near_i, near_j = [], []
    for start in range(0, nt, chunk):
        sl = slice(start, min(nt, start + chunk))
        c = sl.stop - sl.start
        dist = np.linalg.norm(gt.centroid[sl, None] - gs.centroid[None], axis=2)
        near = dist < st.near_factor * (gt.diam[sl, None] + gs.diam[None])
        near |= shared[sl].toarray() > 0
        ii, jj = np.nonzero(near)
        near_i.append(ii + start)
        near_j.append(jj)

        d = X[sl].reshape(-1, 1, 3) - Yf[None]  # (c q, ns q, 3)
        r = np.sqrt(np.einsum("abd,abd->ab", d, d))
        keep = ~np.repeat(np.repeat(near, q, axis=0), q, axis=1)
        inv = np.divide(1.0, r, out=np.zeros_like(r), where=keep)
        ww = (WX[sl].reshape(-1, 1) * WY.reshape(1, -1)) / FOUR_PI
        U = (inv * ww).reshape(c, q, ns, q)
        if ops.V0 is not None:
            ops.V0[sl] += U.sum(axis=(1, 3))
        if ops.V is not None:
            m0 = U.sum(axis=(1, 3))
            Ub = U.sum(axis=3)  # (c, q, ns)
            mx = np.einsum("caj,cad->cjd", Ub, X[sl])
            UY = np.einsum("cajb,jbd->cajd", U, Y)
            my = UY.sum(axis=1)
            mxy = np.einsum("cajd,cad->cj", UY, X[sl])
            loc = _local_v(
                *_pairs_flat(gt, gs, sl, ns),
                m0.ravel(), mx.reshape(-1, 3), my.reshape(-1, 3), mxy.ravel(),
            )
            _scatter_block(ops.V, loc.reshape(c, ns, 3, 3), rloc[sl], cloc)
        if ops.K is not None:
            g = d * ((inv**3) * ww)[..., None]
            g = g.reshape(c, q, ns, q, 3)
            gsum = g.sum(axis=1)  # (c, ns, q, 3)
            Gs = gsum.sum(axis=2)
            Ym = np.cross(Y[None], gsum).sum(axis=2)
            loc = _local_k(*_pairs_flat(gt, gs, sl, ns), Gs.reshape(-1, 3), Ym.reshape(-1, 3))
            _scatter_block(ops.K, loc.reshape(c, ns, 3, 3), rloc[sl], cloc)
    return np.concatenate(near_i), np.concatenate(near_j)


def _pairs_flat(gt, gs, sl, ns):
    c = sl.stop - sl.start
    p = np.repeat(gt.p[sl], ns, axis=0)
    qv = np.tile(gs.p, (c, 1, 1))
    return (
        p,
        qv,
        np.repeat(gt.sign[sl], ns, axis=0),
        np.tile(gs.sign, (c, 1)),
        np.repeat(gt.area[sl], ns),
        np.tile(gs.area, c),
    )


def _scatter_block(mat, loc, rl, cl):
    """Add ``loc[t, s, k, l]`` into ``mat[rl[t, k], cl[s, l]]``."""
    nr, nc = mat.shape
    c, ns = loc.shape[:2]
    # sparse assembly operators turn the scatter into two sparse-dense products
    Pr = sp.csr_matrix((np.ones(3 * c), (rl.ravel(), np.arange(3 * c))), shape=(nr, 3 * c))
    Pc = sp.csr_matrix((np.ones(3 * ns), (cl.ravel(), np.arange(3 * ns))), shape=(nc, 3 * ns))
    L = loc.transpose(0, 2, 1, 3).reshape(3 * c, 3 * ns)
    rows = np.unique(rl)
    mat[rows] += Pr[rows] @ np.asarray((Pc @ L.T).T)


def _scatter_pairs(mat, loc, ri, cj):
    """Add per-pair local blocks ``loc[b, k, l]`` into ``mat[ri[b, k], cj[b, l]]``."""
    idx = ri[:, :, None] * mat.shape[1] + cj[:, None, :]
    np.add.at(mat.reshape(-1), idx.ravel(), loc.ravel())


def _near_pairs(ops, gt, gs, rloc, cloc, ii, jj, shared, st: QuadratureSettings, batch=512):
    cnt = np.asarray(shared[ii, jj]).ravel().astype(int) if len(ii) else np.zeros(0, int)
    rules = {
        3: coincident_rule(st.singular_order),
        2: edge_adjacent_rule(st.singular_order),
        1: vertex_adjacent_rule(st.singular_order),
        0: regular_pair_rule(st.near_order),
    }
    for kind, (rt, rs, rw) in rules.items():
        sel = np.flatnonzero(cnt == kind)
        for b0 in range(0, len(sel), batch):
            b = sel[b0 : b0 + batch]
            i, j = ii[b], jj[b]
            pt, ps = _aligned_vertices(gt, gs, i, j, kind)
            origin = gt.p[i, 0]
            X = _map(pt, rt) - origin[:, None]
            Y = _map(ps, rs) - origin[:, None]
            W = rw[None, :] * (4.0 * gt.area[i] * gs.area[j])[:, None] / FOUR_PI
            d = X - Y
            r = np.sqrt(np.einsum("bqd,bqd->bq", d, d))
            U = W / r
            p = gt.p[i] - origin[:, None]
            q = gs.p[j] - origin[:, None]
            args = (p, q, gt.sign[i], gs.sign[j], gt.area[i], gs.area[j])
            if ops.V0 is not None:
                np.add.at(ops.V0, (i, j), U.sum(axis=1))
            if ops.V is not None:
                m0 = U.sum(axis=1)
                mx = np.einsum("bq,bqd->bd", U, X)
                my = np.einsum("bq,bqd->bd", U, Y)
                mxy = np.einsum("bq,bqd,bqd->b", U, X, Y)
                _scatter_pairs(ops.V, _local_v(*args, m0, mx, my, mxy), rloc[i], cloc[j])
            if ops.K is not None:
                g = d * (W / r**3)[..., None]
                loc = _local_k(*args, g.sum(axis=1), np.cross(Y, g).sum(axis=1))
                if kind > 0:
                    # touching coplanar pairs: the integrand vanishes identically
                    flat = np.linalg.norm(np.cross(gt.normal[i], gs.normal[j]), axis=1) < 1e-12
                    loc[flat] = 0.0
                _scatter_pairs(ops.K, loc, rloc[i], cloc[j])


def _map(p, ref):
    return p[:, None, 0] + ref[None, :, :1] * (p[:, None, 1] - p[:, None, 0]) + ref[None, :, 1:] * (
        p[:, None, 2] - p[:, None, 0]
    )


def _aligned_vertices(gt, gs, i, j, kind):
    """Reorder triangle corners so shared vertices come first, in the same order on both sides."""
    a, b = gt.nodes[i], gs.nodes[j]
    if kind in (0, 3):
        # identical or disjoint triangles: corner order is irrelevant to the rule
        return gt.p[i], gs.p[j]
    eq = a[:, :, None] == b[:, None, :]  # (B, 3 test, 3 trial)
    ta = np.argsort(~eq.any(axis=2), axis=1, kind="stable")  # shared test corners first
    tb = np.empty_like(ta)
    for k in range(kind):
        tb[:, k] = np.argmax(eq[np.arange(len(i)), ta[:, k]], axis=1)
    rest = np.ones((len(i), 3), bool)
    for k in range(kind):
        rest[np.arange(len(i)), tb[:, k]] = False
    tb[:, kind:] = np.nonzero(rest)[1].reshape(len(i), 3 - kind)
    pt = np.take_along_axis(gt.p[i], ta[..., None], axis=1)
    ps = np.take_along_axis(gs.p[j], tb[..., None], axis=1)
    return pt, ps


# ---------------------------------------------------------------------------
# user-facing operator assembly


def _full(ops: BemOperators, name: str, surf: SurfaceMesh) -> DenseBlock:
    data = getattr(ops, name)
    if name == "V0":
        return DenseBlock(data, ops.test_tris, ops.trial_tris, ("p0", "p0"))
    return DenseBlock(data, ops.row_edges, ops.col_edges, ("rt", "nd" if name == "K" else "rt"))


def assemble_single_layer(trial: RTSpace, test: RTSpace | None = None, settings=QuadratureSettings()) -> DenseBlock:
    """``V[l, m] = int int U(x - y) RT_l(x) . RT_m(y)``, symmetrized."""
    ops = assemble_operators(trial.surf, which=("V",), settings=settings)
    ops.V = 0.5 * (ops.V + ops.V.T)
    return _full(ops, "V", trial.surf)


def assemble_double_layer(trial: RTSpace, test: RTSpace | None = None, settings=QuadratureSettings()) -> DenseBlock:
    """Galerkin matrix of the exterior tangential trace of the double-layer potential.

    Row ``i`` tests with ``RT_i``, column ``j`` is the tangential trace basis
    ``n x RT_j``. The exterior trace adds half the identity pairing to the
    principal value; the coupled system then uses ``K - Id``.
    """
    surf = trial.surf
    ops = assemble_operators(surf, which=("K",), settings=settings)
    data = ops.K + 0.5 * assemble_identity(surf).toarray()
    return DenseBlock(data, ops.row_edges, ops.col_edges, ("rt", "nd"))


def hypersingular_from_v0(surf: SurfaceMesh, V0: np.ndarray) -> np.ndarray:
    """``N = D^T diag(1/|T|) V0 diag(1/|T|) D``: the hypersingular form via surface curls."""
    D = surface_divergence(surf).toarray()
    C = D / surf.areas[:, None]
    N = C.T @ V0 @ C
    return 0.5 * (N + N.T)


def assemble_hypersingular(trial: RTSpace, test: RTSpace | None = None, settings=QuadratureSettings()) -> DenseBlock:
    """Hypersingular form ``<N w, w'> = <V curl_G w, curl_G w'>`` on tangential traces."""
    surf = trial.surf
    ops = assemble_operators(surf, which=("V0",), settings=settings)
    V0 = 0.5 * (ops.V0 + ops.V0.T)
    idx = np.arange(surf.n_edges)
    return DenseBlock(hypersingular_from_v0(surf, V0), idx, idx, ("nd", "nd"))


# ---------------------------------------------------------------------------
# potentials


def single_layer_potential(surf: SurfaceMesh, points, lam=None, q=None, gradient=False):
    """Evaluate vector/scalar single-layer potentials of RT data ``lam`` and P0 data ``q``.

    Returns ``(A, S)`` where ``A(x) = int U lam`` and ``S(x) = int U q``; with
    ``gradient=True`` returns instead ``(curl A, grad S)``.
    """
    points = np.atleast_2d(np.asarray(points, float))
    out_a = np.zeros((len(points), 3))
    out_s = np.zeros(len(points)) if not gradient else np.zeros((len(points), 3))
    tris = np.arange(surf.n_triangles)
    p = surf.points
    if lam is not None:
        c = np.asarray(lam)[surf.tri_edges] * surf.tri_signs / (2.0 * surf.areas)[:, None]  # (t, 3)
        bsum = c.sum(axis=1)
    for start in range(0, len(points), 256):
        x = points[start : start + 256]
        need = ("J0", "J1") if gradient else ("I0", "I1")
        pi = panel_integrals(x, p, need)
        w0 = np.einsum("nmd,md->nm", x[:, None, :] - p[None, :, 0], surf.normals)
        rho = x[:, None, :] - w0[..., None] * surf.normals[None]
        if lam is not None:
            # lam(y) = lam(rho) + b (y - rho) on each panel
            lam_rho = bsum[None, :, None] * rho - np.einsum("tk,tkd->td", c, p)[None]
            if gradient:
                t1 = np.cross(pi["J0"], lam_rho)
                t2 = w0[..., None] * np.cross(surf.normals[None], pi["J1"])
                # curl_x int U lam = int grad_x U x lam = -(1/4pi) int (x-y) x lam / R^3
                out_a[start : start + 256] = -(t1 + bsum[None, :, None] * t2).sum(axis=1) / FOUR_PI
            else:
                val = lam_rho * pi["I0"][..., None] + bsum[None, :, None] * pi["I1"]
                out_a[start : start + 256] = val.sum(axis=1) / FOUR_PI
        if q is not None:
            qv = np.asarray(q, float)
            if gradient:
                out_s[start : start + 256] = -np.einsum("nmd,m->nd", pi["J0"], qv) / FOUR_PI
            else:
                out_s[start : start + 256] = pi["I0"] @ qv / FOUR_PI
    del tris
    return out_a, out_s


def neumann_charge(surf: SurfaceMesh, dirichlet) -> np.ndarray:
    """Per-triangle constant ``n . B = curl_G w`` of tangential trace coefficients ``w``."""
    return (surface_divergence(surf) @ np.asarray(dirichlet, float)) / surf.areas


def evaluate_exterior_B(surf: SurfaceMesh, points, dirichlet, neumann, min_distance: float = 0.5) -> np.ndarray:
    """Exterior flux density from the boundary data of a solved coupled system.

    Parameters
    ----------
    dirichlet : tangential trace coefficients (surface edge dofs of ``A``)
    neumann : RT coefficients of ``B x n`` on the exterior side
    min_distance : required standoff in units of the local mesh size

    Notes
    -----
    ``B(x) = -curl int U (B x n) - grad int U (n . B)`` in the exterior.
    """
    points = np.atleast_2d(np.asarray(points, float))
    _check_standoff(surf, points, min_distance)
    lam = np.asarray(neumann, float)
    q = neumann_charge(surf, dirichlet)
    if not np.any(lam) and not np.any(q):
        return np.zeros((len(points), 3))
    curl_a, grad_s = single_layer_potential(surf, points, lam=lam, q=q, gradient=True)
    return -curl_a - grad_s


def _check_standoff(surf, points, factor):
    if factor <= 0:
        return
    p = surf.points
    h = np.linalg.norm(p[:, TRI_EDGES[:, 1]] - p[:, TRI_EDGES[:, 0]], axis=2).max(axis=1)
    for start in range(0, len(points), 256):
        dist = point_triangle_distance(points[start : start + 256], p)
        nearest = dist.argmin(axis=1)
        bad = dist[np.arange(len(nearest)), nearest] < factor * h[nearest]
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0]) + start
            raise NearFieldError(
                f"point {points[k].tolist()} is closer than {factor} local mesh sizes to the boundary"
            )


__all__ = [
    "RTSpace",
    "P1Space",
    "DenseBlock",
    "BemOperators",
    "QuadratureSettings",
    "NearFieldError",
    "MeshError",
    "assemble_operators",
    "assemble_single_layer",
    "assemble_double_layer",
    "assemble_hypersingular",
    "assemble_topological_gradient",
    "assemble_identity",
    "surface_divergence",
    "hypersingular_from_v0",
    "single_layer_potential",
    "neumann_charge",
    "evaluate_exterior_B",
]
