"""Small structured tetrahedral meshes used by the test-suite and demo cases.

These are fixtures, not a mesher: a reference tetrahedron, Kuhn-split boxes,
a cube-to-ball mapped ball family, and a revolved-square solid torus.
"""
from __future__ import annotations

from itertools import permutations

import numpy as np

from .mesh import TetMesh


def reference_tet() -> TetMesh:
    nodes = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    return TetMesh.from_arrays(nodes, [[0, 1, 2, 3]])


def _grid_tets(shape, symmetric=(True, True, True), periodic=(False, False, False)):
    """Kuhn split of an ``nx*ny*nz`` cell grid.

    Along a symmetric axis the cells are reflected about the mid plane so
    main diagonals point away from the grid centre; this avoids flat tets
    when the outer layer is mapped onto a curved surface.
    """
    nx, ny, nz = shape
    dims = [n if p else n + 1 for n, p in zip(shape, periodic)]

    def idx(c):
        i, j, k = (c[a] % dims[a] if periodic[a] else c[a] for a in range(3))
        return (i * dims[1] + j) * dims[2] + k

    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                start, step = [], []
                for a, (c, n) in enumerate(zip((i, j, k), shape)):
                    if symmetric[a] and c < n // 2:
                        start.append(c + 1)
                        step.append(-1)
                    else:
                        start.append(c)
                        step.append(1)
                for perm in permutations(range(3)):
                    c = list(start)
                    tet = [idx(c)]
                    for ax in perm:
                        c[ax] += step[ax]
                        tet.append(idx(c))
                    tets.append(tet)
    return np.array(tets, dtype=np.int64)


def box(lower=(0.0, 0.0, 0.0), upper=(1.0, 1.0, 1.0), cells=(1, 1, 1), symmetric=False, region=1):
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    axes = [np.linspace(lower[a], upper[a], cells[a] + 1) for a in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    tets = _grid_tets(cells, symmetric=(symmetric,) * 3)
    return TetMesh.from_arrays(nodes, tets, np.full(len(tets), region))


def kuhn_cube() -> TetMesh:
    """Unit cube split into the 6 Kuhn tetrahedra."""
    return box(cells=(1, 1, 1))


def ball(n: int, radius=1.0, center=(0.0, 0.0, 0.0), region=1) -> TetMesh:
    """Ball from an ``n^3`` cube grid (``n`` even) under an equal-angle cube-to-sphere map.

    Boundary nodes lie exactly on the sphere; the family is nested in ``n``.
    """
    if n < 2 or n % 2:
        raise ValueError("ball resolution must be an even integer >= 2")
    g = np.linspace(-1.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    cube = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    s = np.abs(cube).max(axis=1)
    nodes = np.zeros_like(cube)
    m = s > 0
    v = np.tan(0.25 * np.pi * cube[m] / s[m, None])
    nodes[m] = s[m, None] * v / np.linalg.norm(v, axis=1)[:, None]
    nodes = radius * nodes + np.asarray(center, float)
    tets = _grid_tets((n, n, n))
    return TetMesh.from_arrays(nodes, tets, np.full(len(tets), region))


def torus(
    r_inner=1.0,
    r_outer=1.5,
    height=0.5,
    n_radial=2,
    n_height=2,
    n_phi=12,
    region=1,
):
    """Solid torus with a square cross-section, revolved about the z axis.

    Returns ``(mesh, cycles)`` where ``cycles["toroidal"]`` runs around the
    hole along the inner equator and ``cycles["poloidal"]`` runs around the
    cross-section at ``phi = 0``; both are closed node sequences.
    """
    if n_height % 2:
        raise ValueError("n_height must be even so the equator carries nodes")
    r = np.linspace(r_inner, r_outer, n_radial + 1)
    z = np.linspace(-0.5 * height, 0.5 * height, n_height + 1)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    R, Zg, P = np.meshgrid(r, z, phi, indexing="ij")
    nodes = np.stack([R.ravel() * np.cos(P.ravel()), R.ravel() * np.sin(P.ravel()), Zg.ravel()], 1)
    tets = _grid_tets((n_radial, n_height, n_phi), symmetric=(True, True, False), periodic=(False, False, True))

    def nid(i, j, k):
        return (i * (n_height + 1) + j) * n_phi + (k % n_phi)

    toroidal = [nid(0, n_height // 2, k) for k in range(n_phi)]
    ring = [(i, 0) for i in range(n_radial)] + [(n_radial, j) for j in range(n_height)]
    ring += [(i, n_height) for i in range(n_radial, 0, -1)] + [(0, j) for j in range(n_height, 0, -1)]
    poloidal = [nid(i, j, 0) for i, j in ring]
    mesh = TetMesh.from_arrays(nodes, tets, np.full(len(tets), region))
    return mesh, {"toroidal": toroidal, "poloidal": poloidal}


def union(*meshes: TetMesh) -> TetMesh:
    """Disjoint union; node ids of later meshes are shifted, region tags kept."""
    nodes, tets, region = [], [], []
    offset = 0
    for m in meshes:
        nodes.append(m.nodes)
        tets.append(m.tets + offset)
        region.append(m.region)
        offset += m.n_nodes
    return TetMesh.from_arrays(np.vstack(nodes), np.vstack(tets), np.concatenate(region))


def rotation_about(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def sector_copies(master: TetMesh, n: int, axis=(0.0, 0.0, 1.0)) -> TetMesh:
    """Union of ``master`` and its copies rotated by ``2*pi*i/n`` about ``axis``."""
    copies = [master.transformed(rotation_about(axis, 2 * np.pi * i / n), np.zeros(3)) for i in range(n)]
    return union(*copies)
