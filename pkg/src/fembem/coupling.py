"""Symmetric FEM-BEM block system, current sheets, periodicity and rigid motion.

Unknowns are the edge coefficients ``a`` of the vector potential in the
solid parts and the vertex coefficients ``phi`` of a surface scalar whose
surface curl gives the exterior Neumann datum ``lambda = B+ x n``:

    [ A + R^T N R     R^T Kc^T ] [a  ]   [f]
    [ Kc R            -W       ] [phi] = [0]

with ``Kc = G^T (K - Id)`` and ``W = G^T V G``. On surfaces with handles the
Neumann datum gains current-sheet terms ``sum_m alpha_m eta_m``; their
columns are appended to ``G`` and yield the extra blocks ``F`` and ``H``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .bem import (
    QuadratureSettings,
    assemble_identity,
    assemble_operators,
    assemble_topological_gradient,
    surface_divergence,
)
from .mesh import MeshError, SurfaceMesh, TRI_EDGES


class TrivialHomologyWarning(UserWarning):
    """A requested cycle bounds a surface patch; its sheet is a surface curl."""


# ---------------------------------------------------------------------------
# surface operator store, partitioned by component


@dataclass(eq=False)
class SurfaceOperators:
    """Dense surface matrices of a (possibly multi-component) boundary.

    ``V`` (RT x RT), ``Kd`` (RT x trace, holds ``K - Id``) and ``V0`` (P0 x P0).
    Blocks between different components can be recomputed independently.
    """

    surf: SurfaceMesh
    V: np.ndarray
    Kd: np.ndarray
    V0: np.ndarray
    settings: QuadratureSettings = QuadratureSettings()

    @classmethod
    def assemble(cls, surf: SurfaceMesh, settings: QuadratureSettings = QuadratureSettings()):
        ne, nt = surf.n_edges, surf.n_triangles
        V, Kd, V0 = np.zeros((ne, ne)), np.zeros((ne, ne)), np.zeros((nt, nt))
        store = cls(surf, V, Kd, V0, settings)
        comps = np.unique(surf.component)
        for ci in comps:
            for cj in comps:
                store._fill(ci, cj)
        symmetrize_cross_blocks(store)
        # exterior trace K = K_pv + Id/2, so K - Id = K_pv - Id/2
        store.Kd -= 0.5 * assemble_identity(surf).toarray()
        return store

    def _fill(self, ci, cj, surf=None):
        surf = self.surf if surf is None else surf
        ti = np.flatnonzero(surf.component == ci)
        tj = np.flatnonzero(surf.component == cj)
        ops = assemble_operators(surf, ti, tj, settings=self.settings)
        r, c = np.ix_(ops.row_edges, ops.col_edges)
        if ci == cj:
            self.V[r, c] = 0.5 * (ops.V + ops.V.T)
            self.V0[np.ix_(ti, tj)] = 0.5 * (ops.V0 + ops.V0.T)
        else:
            self.V[r, c] = ops.V
            self.V0[np.ix_(ti, tj)] = ops.V0
        self.Kd[r, c] = ops.K
        return ops

    def cross_update(self, k, surf: SurfaceMesh) -> "SurfaceOperators":
        """Copy with every block coupling component ``k`` to another component recomputed on ``surf``."""
        new = SurfaceOperators(surf, self.V.copy(), self.Kd.copy(), self.V0.copy(), self.settings)
        for c in np.unique(surf.component):
            if c == k:
                continue
            new._fill(k, c, surf)
            new._fill(c, k, surf)
        # enforce exact symmetry of the off-diagonal single-layer blocks
        ek, ec = surf.edge_component == k, surf.edge_component != k
        tk, tc = surf.component == k, surf.component != k
        for M, a, b in ((new.V, ek, ec), (new.V0, tk, tc)):
            blk = 0.5 * (M[np.ix_(a, b)] + M[np.ix_(b, a)].T)
            M[np.ix_(a, b)] = blk
            M[np.ix_(b, a)] = blk.T
        return new


def symmetrize_cross_blocks(ops: SurfaceOperators) -> None:
    """Average ``V_ij`` with ``V_ji^T`` for all component pairs (exact symmetry)."""
    surf = ops.surf
    comps = np.unique(surf.component)
    for a in comps:
        for b in comps:
            if b <= a:
                continue
            for M, lab in ((ops.V, surf.edge_component), (ops.V0, surf.component)):
                ia, ib = np.flatnonzero(lab == a), np.flatnonzero(lab == b)
                blk = 0.5 * (M[np.ix_(ia, ib)] + M[np.ix_(ib, ia)].T)
                M[np.ix_(ia, ib)] = blk
                M[np.ix_(ib, ia)] = blk.T


# ---------------------------------------------------------------------------
# current sheets


@dataclass(frozen=True, eq=False)
class CurrentSheet:
    """Divergence-free RT field with unit total current along a closed surface cycle.

    ``cycle`` lists the global node ids of the closed primal path (first node
    not repeated). The current flows in the direction of the path.
    """

    cycle: np.ndarray
    coeffs: np.ndarray  # RT coefficients, integer valued
    component: int
    jump: float = 1.0


def _cycle_edges(surf: SurfaceMesh, cycle):
    cyc = np.asarray(cycle, dtype=np.int64)
    if len(cyc) >= 2 and cyc[0] == cyc[-1]:
        cyc = cyc[:-1]
    if len(cyc) < 3:
        raise ValueError("a cycle needs at least three distinct nodes")
    if len(np.unique(cyc)) != len(cyc):
        raise ValueError("cycle is self-intersecting (repeated node)")
    a, b = cyc, np.roll(cyc, -1)
    key = np.sort(np.stack([a, b], 1), axis=1)
    n = surf.nodes.shape[0]
    ekey = surf.edges[:, 0] * n + surf.edges[:, 1]
    ck = key[:, 0] * n + key[:, 1]
    pos = np.minimum(np.searchsorted(ekey, ck), len(ekey) - 1)
    if np.any(ekey[pos] != ck):
        raise ValueError("cycle is not a closed path of surface edges")
    return cyc, pos, np.where(a < b, 1, -1)


def build_current_sheet(surf: SurfaceMesh, cycle, check_trivial: bool = True) -> CurrentSheet | None:
    """Current sheet along a closed edge path, as the elementwise surface curl of a cut hat function.

    ``chi`` equals 1 at the path nodes inside the triangle fans on the left
    bank of the path and 0 elsewhere; ``eta = -Curl_G chi`` is then a
    well-defined RT field with integer coefficients, divergence-free on
    every triangle, carrying unit current along the path. Returns ``None``
    (with a :class:`TrivialHomologyWarning`) if the sheet is a global
    surface curl, i.e. the path bounds a patch of the surface.
    """
    cyc, cedges, _ = _cycle_edges(surf, cycle)
    comp = np.unique(surf.edge_component[cedges])
    if len(comp) != 1:
        raise ValueError("cycle touches several surface components")
    tri = surf.triangles
    k = len(cyc)
    # chi per triangle corner
    chi = np.zeros(tri.shape, dtype=np.int64)
    for i in range(k):
        v, nxt, prv = cyc[i], cyc[(i + 1) % k], cyc[i - 1]
        fan = np.flatnonzero((tri == v).any(axis=1))
        # each fan triangle rotated so v comes first: (v, a, b) spans a -> b counter-clockwise
        succ = {}
        for t in fan:
            j = int(np.flatnonzero(tri[t] == v)[0])
            a, b = tri[t, (j + 1) % 3], tri[t, (j + 2) % 3]
            succ[a] = (t, b, j)
        cur = nxt
        for _ in range(len(fan)):
            if cur not in succ:
                raise MeshError("surface fan around a cycle node is not closed")
            t, b, j = succ[cur]
            chi[t, j] = 1
            if b == prv:
                break
            cur = b
        else:
            raise ValueError("cycle turns back on itself")
    # eta_l = chi(tail) - chi(head) on either adjacent triangle (both agree)
    eta = np.zeros(surf.n_edges, dtype=np.int64)
    set_ = np.zeros(surf.n_edges, dtype=bool)
    for kk, (i0, i1) in enumerate(TRI_EDGES):
        e = surf.tri_edges[:, kk]
        head_is_1 = tri[:, i1] > tri[:, i0]
        tail = np.where(head_is_1, chi[:, i0], chi[:, i1])
        head = np.where(head_is_1, chi[:, i1], chi[:, i0])
        val = tail - head
        conflict = set_[e] & (eta[e] != val)
        if np.any(conflict):
            raise ValueError("cycle has a chord; the cut function is not single valued along an edge")
        eta[e] = val
        set_[e] = True
    sheet = CurrentSheet(cyc, eta, int(comp[0]))
    if check_trivial and is_trivial_sheet(surf, eta):
        warnings.warn(
            "trivial homology: the cycle bounds a surface patch, its sheet is a surface curl",
            TrivialHomologyWarning,
            stacklevel=2,
        )
        return None
    return sheet


def _pinned_laplacian(G: sp.csr_matrix):
    L = (G.T @ G).tocsc().astype(float)
    ncomp, labels = connected_components(L, directed=False)
    keep = np.ones(L.shape[0], dtype=bool)
    for c in range(ncomp):
        keep[np.flatnonzero(labels == c)[0]] = False
    lu = splu(L[keep][:, keep].tocsc())

    def solve(rhs):
        rhs = np.asarray(rhs, float)
        out = np.zeros(rhs.shape)
        out[keep] = lu.solve(rhs[keep])
        return out

    return solve


def is_trivial_sheet(surf: SurfaceMesh, eta, tol: float = 1e-9) -> bool:
    """Least-squares test ``G c = eta``: zero residual means ``eta`` is a surface curl."""
    G = assemble_topological_gradient(surf)
    eta = np.asarray(eta, float)
    c = _pinned_laplacian(G)(G.T @ eta)
    return bool(np.linalg.norm(G @ c - eta) <= tol * max(1.0, np.linalg.norm(eta)))


def circulation(surf: SurfaceMesh, coeffs, loop) -> float:
    """Flux of an RT field through a closed edge path (to the right of the direction of travel).

    Equals the circulation of ``n x field`` along the path.
    """
    _, edges, signs = _cycle_edges(surf, loop)
    return float(np.dot(np.asarray(coeffs)[edges], signs))


# ---------------------------------------------------------------------------
# coupled system


@dataclass(eq=False)
class CoupledSystem:
    """Symmetric indefinite FEM-BEM operator, optionally augmented by current sheets.

    ``mode`` selects how sheets enter: ``"extended"`` appends ``alpha``
    unknowns; ``"schur"`` applies ``S - F H^-1 F^T`` inside the matvec.
    """

    A: sp.csr_matrix
    R: sp.csr_matrix
    N: np.ndarray
    Kc: np.ndarray  # (nv + M) x ne, projected so that Kc G = 0
    W: np.ndarray  # (nv + M) x (nv + M), equals B^T V B with B = [G | eta]
    f: np.ndarray
    fem_component: np.ndarray
    bem_component: np.ndarray  # per vertex dof, then per sheet
    n_sheets: int = 0
    mode: str = "extended"
    surface_ops: SurfaceOperators | None = None
    B: sp.csr_matrix | None = None  # [G | eta]
    sheets: list = field(default_factory=list)
    context: dict = field(default_factory=dict)

    @property
    def n_fem(self) -> int:
        return self.A.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.W.shape[0] - self.n_sheets

    @property
    def n_bem(self) -> int:
        """Number of BEM unknowns seen by the solver."""
        return self.n_vertices + (self.n_sheets if self.mode == "extended" else 0)

    @property
    def shape(self):
        n = self.n_fem + self.n_bem
        return (n, n)

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f, np.zeros(self.n_bem)])

    @property
    def component(self) -> np.ndarray:
        bem = self.bem_component if self.mode == "extended" else self.bem_component[: self.n_vertices]
        return np.concatenate([self.fem_component, bem])

    def _full_matvec(self, a, y):
        """Product with the extended operator; ``y`` holds phi and alpha."""
        ws = self.R @ a
        top = self.A @ a + self.R.T @ (self.N @ ws + self.Kc.T @ y)
        bot = self.Kc @ ws - self.W @ y
        return top, bot

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        a, rest = x[: self.n_fem], x[self.n_fem :]
        nv, M = self.n_vertices, self.n_sheets
        if M and self.mode == "schur":
            y = np.concatenate([rest, np.zeros(M)])
            top, bot = self._full_matvec(a, y)
            # eliminate alpha: H alpha = -F^T x  ->  S x - F H^-1 F^T x
            Fx = bot[nv:]
            alpha = -np.linalg.solve(self.H, Fx)
            top2, bot2 = self._full_matvec(np.zeros_like(a), np.concatenate([np.zeros(nv), alpha]))
            return np.concatenate([top + top2, bot[:nv] + bot2[:nv]])
        top, bot = self._full_matvec(a, rest)
        return np.concatenate([top, bot])

    __matmul__ = matvec

    @property
    def H(self) -> np.ndarray:
        nv = self.n_vertices
        return -self.W[nv:, nv:]

    @property
    def F(self) -> np.ndarray:
        """Sheet columns ``[R^T Kc_eta^T ; -G^T V eta]`` of the extended system."""
        nv = self.n_vertices
        return np.vstack([self.R.T @ self.Kc[nv:].T, -self.W[:nv, nv:]])

    def materialize(self) -> np.ndarray:
        """Dense matrix of the operator (small fixtures only)."""
        n = self.n_fem
        nv, M = self.n_vertices, self.n_sheets
        RT = self.R.T.toarray()
        top = np.hstack([self.A.toarray() + RT @ self.N @ RT.T, RT @ self.Kc.T])
        bot = np.hstack([self.Kc @ RT.T, -self.W])
        S = np.vstack([top, bot])
        if M and self.mode == "schur":
            F = S[: n + nv, n + nv :]
            H = S[n + nv :, n + nv :]
            S = S[: n + nv, : n + nv] - F @ np.linalg.solve(H, F.T)
        return S

    def recover_alpha(self, x) -> np.ndarray:
        """Sheet amplitudes of a solution vector in either mode."""
        nv, M = self.n_vertices, self.n_sheets
        if not M:
            return np.zeros(0)
        if self.mode == "extended":
            return np.asarray(x)[self.n_fem + nv :]
        y = np.concatenate([np.asarray(x)[self.n_fem :], np.zeros(M)])
        _, bot = self._full_matvec(np.asarray(x)[: self.n_fem], y)
        return -np.linalg.solve(self.H, bot[nv:])

    def neumann(self, x) -> np.ndarray:
        """RT coefficients of ``lambda = B+ x n`` for a solution vector."""
        nv = self.n_vertices
        y = np.asarray(x)[self.n_fem : self.n_fem + nv]
        coeffs = np.concatenate([y, self.recover_alpha(x)])
        return self.B @ coeffs

    def dirichlet(self, x) -> np.ndarray:
        return self.R @ np.asarray(x)[: self.n_fem]


def _project_rows(Kc: np.ndarray, G: sp.csr_matrix, solve) -> np.ndarray:
    """``Kc (I - G L^+ G^T)``: remove the part acting on surface gradients."""
    Z = np.asarray(G.T @ Kc.T)  # nv x rows
    X = solve(Z)
    return Kc - np.asarray(G @ X).T


def assemble_system(
    A: sp.csr_matrix,
    f: np.ndarray,
    R: sp.csr_matrix,
    ops: SurfaceOperators,
    fem_component: np.ndarray,
    sheets: list[CurrentSheet] | None = None,
    mode: str = "extended",
) -> CoupledSystem:
    """Combine FEM and BEM blocks into the symmetric coupled operator."""
    surf = ops.surf
    if A.shape[0] != R.shape[1] or R.shape[0] != surf.n_edges or len(f) != A.shape[0]:
        raise ValueError("dimension mismatch between FEM blocks, restriction and surface")
    if mode not in ("extended", "schur"):
        raise ValueError(f"unknown augmentation mode {mode!r}")
    G = assemble_topological_gradient(surf).astype(float)
    sheets = list(sheets or [])
    cols = [G] + [sp.csr_matrix(np.asarray(s.coeffs, float)[:, None]) for s in sheets]
    B = sp.hstack(cols).tocsr()
    solve = _pinned_laplacian(G)

    C = surface_divergence(surf).astype(float).multiply(1.0 / surf.areas[:, None]).tocsr()
    N = np.asarray(C.T @ np.asarray(C.T @ ops.V0.T).T)
    N = 0.5 * (N + N.T)
    Kc = _project_rows(np.asarray(B.T @ ops.Kd), G, solve)
    W = np.asarray(B.T @ np.asarray(B.T @ ops.V).T)
    W = 0.5 * (W + W.T)
    bem_comp = np.concatenate([surf.vertex_component, [s.component for s in sheets]]).astype(np.int64)
    sys = CoupledSystem(
        A=A.tocsr(),
        R=R.tocsr(),
        N=N,
        Kc=Kc,
        W=W,
        f=np.asarray(f, float),
        fem_component=np.asarray(fem_component, np.int64),
        bem_component=bem_comp,
        n_sheets=len(sheets),
        mode=mode,
        surface_ops=ops,
        B=B,
        sheets=sheets,
    )
    if sheets and np.linalg.matrix_rank(sys.H) < len(sheets):
        raise ValueError("current sheets are linearly dependent (singular H)")
    return sys


def augment_system(sys: CoupledSystem, sheets: list[CurrentSheet], mode: str = "extended") -> CoupledSystem:
    """Rebuild the BEM blocks with sheet columns; ``sheets=[]`` returns the system unchanged."""
    if not sheets:
        return sys
    return assemble_system(sys.A, sys.f, sys.R, sys.surface_ops, sys.fem_component, list(sys.sheets) + list(sheets), mode)


def update_bem_blocks(sys: CoupledSystem, ops: SurfaceOperators, k: int) -> CoupledSystem:
    """Recompute the BEM-derived blocks that couple component ``k`` to the others.

    Diagonal component blocks, the FEM matrix and the load vector are carried
    over unchanged (the same arrays, not copies).
    """
    surf = ops.surf
    G = assemble_topological_gradient(surf).astype(float)
    B = sys.B
    C = surface_divergence(surf).astype(float).multiply(1.0 / surf.areas[:, None]).tocsr()
    N, Kc, W = sys.N.copy(), sys.Kc.copy(), sys.W.copy()
    ecomp = surf.edge_component
    rcomp = sys.bem_component
    tcomp = surf.component
    solve_cache = {}
    for c in np.unique(tcomp):
        if c == k:
            continue
        for i, j in ((k, c), (c, k)):
            ei, ej = np.flatnonzero(ecomp == i), np.flatnonzero(ecomp == j)
            ti, tj = np.flatnonzero(tcomp == i), np.flatnonzero(tcomp == j)
            ri, rj = np.flatnonzero(rcomp == i), np.flatnonzero(rcomp == j)
            Ci, Cj = C[ti][:, ei], C[tj][:, ej]
            N[np.ix_(ei, ej)] = np.asarray(Ci.T @ np.asarray(Cj.T @ ops.V0[np.ix_(ti, tj)].T).T)
            Bi, Bj = B[ei][:, ri], B[ej][:, rj]
            W[np.ix_(ri, rj)] = np.asarray(Bi.T @ np.asarray(Bj.T @ ops.V[np.ix_(ei, ej)].T).T)
            # Kc rows of component i against trace columns of component j, projected with j's gradients
            Gj = G[ej][:, np.flatnonzero(surf.vertex_component == j)]
            if j not in solve_cache:
                solve_cache[j] = _pinned_laplacian(Gj)
            Kc[np.ix_(ri, ej)] = _project_rows(np.asarray(Bi.T @ ops.Kd[np.ix_(ei, ej)]), Gj, solve_cache[j])
    # exact symmetry of the cross blocks
    for M, lab in ((N, ecomp), (W, rcomp)):
        a, b = np.flatnonzero(lab == k), np.flatnonzero(lab != k)
        blk = 0.5 * (M[np.ix_(a, b)] + M[np.ix_(b, a)].T)
        M[np.ix_(a, b)] = blk
        M[np.ix_(b, a)] = blk.T
    return replace(sys, N=N, Kc=Kc, W=W, surface_ops=ops, context=dict(sys.context))


# ---------------------------------------------------------------------------
# rigid motion


@dataclass(frozen=True)
class RigidMotion:
    component: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        Q = np.asarray(self.rotation, float)
        object.__setattr__(self, "rotation", Q)
        object.__setattr__(self, "translation", np.asarray(self.translation, float).reshape(3))
        if Q.shape != (3, 3) or not np.allclose(Q.T @ Q, np.eye(3), atol=1e-14, rtol=0):
            raise ValueError("rotation must be orthogonal")
        if np.linalg.det(Q) < 0:
            raise ValueError("rotation must have determinant +1")

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)) and not np.any(self.translation))


def check_contact(surf: SurfaceMesh, k: int, gap: float = 0.0) -> None:
    """Raise if component ``k`` overlaps or touches another component.

    Bounding boxes filter candidate triangle pairs, then a triangle-triangle
    separation test (vertex-triangle and edge-edge distances) decides.
    """
    from .panels import point_triangle_distance

    p = surf.points
    mine = np.flatnonzero(surf.component == k)
    other = np.flatnonzero(surf.component != k)
    if not len(other):
        return
    lo, hi = p.min(axis=1), p.max(axis=1)
    blo, bhi = lo[mine].min(0), hi[mine].max(0)
    olo, ohi = lo[other].min(0), hi[other].max(0)
    if np.any(blo > ohi + gap) or np.any(olo > bhi + gap):
        return
    # containment: a component inside another one cannot be detected by surface distance alone
    for a_set, b_set in ((mine, other), (other, mine)):
        pts = p[a_set].reshape(-1, 3)
        for c in np.unique(surf.component[b_set]):
            tri = b_set[surf.component[b_set] == c]
            if _inside_closed(pts[:1], p[tri])[0]:
                raise MeshError(f"component {k} intersects another component after motion")
    cand_m = mine[np.all(hi[mine] >= olo - gap, axis=1) & np.all(lo[mine] <= ohi + gap, axis=1)]
    cand_o = other[np.all(hi[other] >= blo - gap, axis=1) & np.all(lo[other] <= bhi + gap, axis=1)]
    if not len(cand_m) or not len(cand_o):
        return
    d1 = point_triangle_distance(p[cand_m].reshape(-1, 3), p[cand_o]).min()
    d2 = point_triangle_distance(p[cand_o].reshape(-1, 3), p[cand_m]).min()
    d3 = _min_segment_distance(p[cand_m], p[cand_o])
    if min(d1, d2, d3) <= gap:
        raise MeshError(f"component {k} touches or intersects another component after motion")


def _inside_closed(x, tri) -> np.ndarray:
    """Winding-number test (solid angle sum) for points against a closed triangulation."""
    a, b, c = (tri[:, i][None] - x[:, None] for i in range(3))
    la, lb, lc = (np.linalg.norm(v, axis=2) for v in (a, b, c))
    num = np.einsum("nmd,nmd->nm", a, np.cross(b, c))
    den = la * lb * lc + np.einsum("nmd,nmd->nm", a, b) * lc + np.einsum("nmd,nmd->nm", b, c) * la
    den += np.einsum("nmd,nmd->nm", c, a) * lb
    omega = 2.0 * np.arctan2(num, den).sum(axis=1)
    return np.abs(omega) > 2.0 * np.pi


def _min_segment_distance(ta, tb) -> float:
    """Smallest distance between the edges of two triangle sets."""
    sa = np.stack([ta[:, TRI_EDGES[:, 0]], ta[:, TRI_EDGES[:, 1]]], axis=2).reshape(-1, 2, 3)
    sb = np.stack([tb[:, TRI_EDGES[:, 0]], tb[:, TRI_EDGES[:, 1]]], axis=2).reshape(-1, 2, 3)
    best = np.inf
    for s in range(0, len(sa), 512):
        p1, q1 = sa[s : s + 512, None, 0], sa[s : s + 512, None, 1]
        p2, q2 = sb[None, :, 0], sb[None, :, 1]
        d1, d2, r = q1 - p1, q2 - p2, p1 - p2
        a = np.einsum("...d,...d->...", d1, d1)
        e = np.einsum("...d,...d->...", d2, d2)
        f = np.einsum("...d,...d->...", d2, r)
        c = np.einsum("...d,...d->...", d1, r)
        b = np.einsum("...d,...d->...", d1, d2)
        den = a * e - b * b
        with np.errstate(divide="ignore", invalid="ignore"):
            sv = np.where(den > 1e-300, np.clip((b * f - c * e) / den, 0, 1), 0.0)
            tv = (b * sv + f) / e
            tv_c = np.clip(tv, 0, 1)
            sv = np.where(tv != tv_c, np.clip((b * tv_c - c) / a, 0, 1), sv)
        d = p1 + sv[..., None] * d1 - (p2 + tv_c[..., None] * d2)
        best = min(best, float(np.sqrt(np.einsum("...d,...d->...", d, d)).min()))
    return best


def apply_motion(sys: CoupledSystem, motion: RigidMotion) -> CoupledSystem:
    """Move one component rigidly and refresh only the BEM blocks that couple it to the others.

    The FEM matrix, load vector, diagonal BEM blocks and the preconditioner
    inputs are motion invariant for body-fixed materials and sources.
    """
    if motion.is_identity:
        return sys
    ops = sys.surface_ops
    surf = ops.surf
    k = motion.component
    if k not in set(np.unique(surf.component).tolist()):
        raise ValueError(f"no surface component {k}")
    mesh = sys.context.get("mesh")
    node_comp = np.full(surf.nodes.shape[0], -1)
    if mesh is not None:
        node_comp[mesh.tets.ravel()] = np.repeat(mesh.component, 4)
    else:
        node_comp[surf.triangles.ravel()] = np.repeat(surf.component, 3)
    mask = node_comp == k
    nodes = surf.nodes.copy()
    nodes[mask] = nodes[mask] @ motion.rotation.T + motion.translation
    new_surf = surf.with_nodes(nodes)
    check_contact(new_surf, k)
    new_ops = ops.cross_update(k, new_surf)
    out = update_bem_blocks(sys, new_ops, k)
    out.context["surf"] = new_surf
    if mesh is not None:
        moved = mesh.transformed(motion.rotation, motion.translation, mask)
        out.context["mesh"] = moved
        space = sys.context.get("space")
        if space is not None:
            # edge dofs are line integrals, so their numbering and values are motion invariant
            out.context["space"] = replace(space, mesh=moved)
    return out


# ---------------------------------------------------------------------------
# rotational periodicity


def circulant_matvec(blocks, x) -> np.ndarray:
    """Product with the block-circulant matrix whose first block row is ``blocks``.

    Block ``(k, i)`` equals ``blocks[(i - k) % n]``; only the ``n`` first-row
    blocks are stored.
    """
    n = len(blocks)
    x = np.asarray(x)
    m = blocks[0].shape[1]
    if x.shape[0] != n * m or any(b.shape != blocks[0].shape for b in blocks):
        raise ValueError("segment size does not match the circulant blocks")
    xs = x.reshape(n, m, *x.shape[1:])
    out = np.zeros((n, blocks[0].shape[0], *x.shape[1:]), dtype=np.result_type(x, blocks[0]))
    for k in range(n):
        for i in range(n):
            out[k] += blocks[(i - k) % n] @ xs[i]
    return out.reshape(n * blocks[0].shape[0], *x.shape[1:])


def periodic_reduce(blocks, x_master) -> np.ndarray:
    """Single-sector product for periodic excitation: ``(sum_i V_1i) x``."""
    total = blocks[0].copy()
    for b in blocks[1:]:
        total = total + b
    return total @ np.asarray(x_master)


def sector_blocks(surf: SurfaceMesh, which: str = "V", settings: QuadratureSettings = QuadratureSettings()):
    """First-row blocks ``V_{1,i}`` (or ``K``) between component 0 and every component ``i``."""
    out = []
    t0 = np.flatnonzero(surf.component == 0)
    for c in np.unique(surf.component):
        ops = assemble_operators(surf, t0, np.flatnonzero(surf.component == c), which=(which,), settings=settings)
        out.append(getattr(ops, which))
    return out


def component_block(surf: SurfaceMesh, i: int, j: int, which: str = "V", settings: QuadratureSettings = QuadratureSettings()):
    """Directly assembled block between components ``i`` (test) and ``j`` (trial)."""
    ops = assemble_operators(
        surf, np.flatnonzero(surf.component == i), np.flatnonzero(surf.component == j), which=(which,), settings=settings
    )
    return getattr(ops, which)
