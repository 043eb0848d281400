"""Tetrahedral meshes, Gmsh MSH 2.2 ingest and boundary extraction.

All sign tables in the package derive from one convention: a global edge
is oriented from its lower node index to its higher node index.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class MeshError(ValueError):
    """Malformed, unsupported or geometrically invalid mesh data."""


@dataclass(frozen=True)
class Material:
    mu_r: float = 1.0
    magnetization: tuple[float, float, float] = (0.0, 0.0, 0.0)
    current_density: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not np.isfinite(self.mu_r) or self.mu_r <= 0:
            raise MeshError(f"relative permeability must be positive, got {self.mu_r}")


# local edges of a tetrahedron and of a triangle (triangle edge k is opposite vertex k)
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
TRI_EDGES = np.array([[1, 2], [2, 0], [0, 1]])
# faces of a positively oriented tet, ordered counter-clockwise seen from outside
TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])


def signed_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    a, b, c, d = (nodes[tets[:, i]] for i in range(4))
    return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) / 6.0


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Volume mesh of the magnetic parts.

    ``current`` is either ``None``, an ``(n_tets, 3)`` array of constant
    current densities, or a callable mapping ``(n, 3)`` points to ``(n, 3)``
    current densities in A/m^2. Region-constant densities from the
    material table are added to it.
    """

    nodes: np.ndarray
    tets: np.ndarray
    region: np.ndarray
    component: np.ndarray
    materials: Mapping[int, Material] = field(default_factory=dict)
    current: np.ndarray | Callable | None = None

    @classmethod
    def from_arrays(cls, nodes, tets, region=None, materials=None, current=None):
        nodes = np.ascontiguousarray(nodes, dtype=float)
        tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
        if region is None:
            region = np.ones(len(tets), dtype=np.int64)
        region = np.asarray(region, dtype=np.int64)
        if tets.size and (tets.min() < 0 or tets.max() >= len(nodes)):
            raise MeshError("tetrahedron references a node that does not exist")
        vol = signed_volumes(nodes, tets)
        scale = np.ptp(nodes, axis=0).max() if len(nodes) else 1.0
        if np.any(np.abs(vol) <= 1e-14 * scale**3):
            bad = int(np.flatnonzero(np.abs(vol) <= 1e-14 * scale**3)[0])
            raise MeshError(f"tetrahedron {bad} is degenerate and cannot be reoriented")
        flip = vol < 0
        tets[flip] = tets[flip][:, [0, 2, 1, 3]]
        component = _tet_components(tets, len(nodes))
        mesh = cls(nodes, tets, region, component, dict(materials or {}), current)
        _check_manifold_faces(mesh)
        return mesh

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def volumes(self) -> np.ndarray:
        return signed_volumes(self.nodes, self.tets)

    @property
    def regions(self) -> list[int]:
        return sorted(int(r) for r in np.unique(self.region))

    @property
    def n_components(self) -> int:
        return int(self.component.max()) + 1 if len(self.component) else 0

    def with_materials(self, materials: Mapping[int, Material], current=None) -> "TetMesh":
        missing = [r for r in self.regions if r not in materials]
        if missing:
            raise MeshError(f"no material given for region tag(s) {missing}")
        return dataclasses.replace(
            self, materials=dict(materials), current=self.current if current is None else current
        )

    def mu_r(self) -> np.ndarray:
        """Per-tet relative permeability."""
        missing = [r for r in self.regions if r not in self.materials]
        if missing:
            raise MeshError(f"no relative permeability for region tag(s) {missing}")
        lut = {r: self.materials[r].mu_r for r in self.regions}
        return np.array([lut[int(r)] for r in self.region], dtype=float)

    def magnetization(self) -> np.ndarray:
        out = np.zeros((self.n_tets, 3))
        for r, mat in self.materials.items():
            out[self.region == r] = mat.magnetization
        return out

    def region_current(self) -> np.ndarray:
        out = np.zeros((self.n_tets, 3))
        for r, mat in self.materials.items():
            out[self.region == r] = mat.current_density
        return out

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Global edges (low, high) sorted lexicographically and the (n_tets, 6) edge map."""
        local = self.tets[:, TET_EDGES]  # (m, 6, 2)
        pairs = np.sort(local, axis=2).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 6)

    def transformed(self, rotation, translation, mask=None) -> "TetMesh":
        """Copy with ``x -> rotation @ x + translation`` applied to the nodes in ``mask``."""
        nodes = self.nodes.copy()
        sel = slice(None) if mask is None else mask
        nodes[sel] = nodes[sel] @ np.asarray(rotation, float).T + np.asarray(translation, float)
        return dataclasses.replace(self, nodes=nodes)


def _tet_components(tets: np.ndarray, n_nodes: int) -> np.ndarray:
    if len(tets) == 0:
        return np.zeros(0, dtype=np.int64)
    m = len(tets)
    rows = np.repeat(np.arange(m), 4)
    graph = coo_matrix((np.ones(4 * m), (rows, tets.ravel())), shape=(m, n_nodes)).tocsr()
    # tets sharing a node are connected; components labelled by first appearance
    adj = graph @ graph.T
    _, labels = connected_components(adj, directed=False)
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(np.argsort(first))
    return order[labels].astype(np.int64)


def _check_manifold_faces(mesh: TetMesh) -> None:
    faces = np.sort(mesh.tets[:, TET_FACES].reshape(-1, 3), axis=1)
    _, counts = np.unique(faces, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-manifold face shared by three or more tetrahedra")


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Oriented boundary triangulation induced by a :class:`TetMesh`.

    Triangles are counter-clockwise seen from the exterior. ``tri_edges[t, k]``
    is the global surface edge opposite local vertex ``k`` and
    ``tri_signs[t, k]`` is +1 when that edge's global orientation agrees with
    the counter-clockwise traversal of the triangle.
    """

    nodes: np.ndarray  # shared with the volume mesh
    triangles: np.ndarray  # (nt, 3) global node ids
    normals: np.ndarray
    areas: np.ndarray
    edges: np.ndarray  # (ne, 2) global node ids, low -> high
    tri_edges: np.ndarray
    tri_signs: np.ndarray
    vertices: np.ndarray  # surface vertex -> global node id
    tri_vertices: np.ndarray  # (nt, 3) surface vertex ids
    edge_vertices: np.ndarray  # (ne, 2) surface vertex ids
    component: np.ndarray  # per triangle
    euler: dict[int, int]

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def points(self) -> np.ndarray:
        """Coordinates of the triangle corners, shape (nt, 3, 3)."""
        return self.nodes[self.triangles]

    @property
    def vertex_component(self) -> np.ndarray:
        out = np.empty(self.n_vertices, dtype=np.int64)
        out[self.tri_vertices.ravel()] = np.repeat(self.component, 3)
        return out

    @property
    def edge_component(self) -> np.ndarray:
        out = np.empty(self.n_edges, dtype=np.int64)
        out[self.tri_edges.ravel()] = np.repeat(self.component, 3)
        return out

    def mesh_size(self) -> float:
        p = self.points
        lengths = np.linalg.norm(p[:, TRI_EDGES[:, 1]] - p[:, TRI_EDGES[:, 0]], axis=2)
        return float(lengths.max())

    def with_nodes(self, nodes: np.ndarray) -> "SurfaceMesh":
        """Same topology on moved nodes (rigid motions keep orientation)."""
        return _surface_from_triangles(np.asarray(nodes, float), self.triangles, self.component)


def extract_boundary(mesh: TetMesh) -> SurfaceMesh:
    faces = mesh.tets[:, TET_FACES].reshape(-1, 3)
    owner = np.repeat(np.arange(mesh.n_tets), 4)
    key = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise MeshError("non-manifold face shared by three or more tetrahedra")
    boundary = counts[inverse] == 1
    tris = faces[boundary]
    tri_owner = owner[boundary]
    surf = _surface_from_triangles(mesh.nodes, tris, mesh.component[tri_owner])

    # outward orientation against the owning tet's centroid
    centroid = mesh.nodes[mesh.tets[tri_owner]].mean(axis=1)
    face_mid = surf.points.mean(axis=1)
    if np.any(np.einsum("ij,ij->i", surf.normals, face_mid - centroid) <= 0):
        raise MeshError("boundary triangle normal does not point out of its tetrahedron")
    return surf


def _surface_from_triangles(nodes, tris, component) -> SurfaceMesh:
    tris = np.asarray(tris, dtype=np.int64)
    p = nodes[tris]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    dbl = np.linalg.norm(cross, axis=1)
    if np.any(dbl == 0):
        raise MeshError("degenerate (zero-area) boundary triangle")
    normals = cross / dbl[:, None]

    local = tris[:, TRI_EDGES]  # (nt, 3, 2) ccw traversal (a -> b)
    key = np.sort(local, axis=2).reshape(-1, 2)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)
    tri_signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1).astype(np.int64)

    # closed and consistently oriented: each edge used once in each direction
    use = np.zeros((len(edges), 2), dtype=np.int64)
    np.add.at(use, (tri_edges.ravel(), (tri_signs.ravel() < 0).astype(int)), 1)
    if np.any(use != 1):
        raise MeshError("boundary surface is not closed and consistently oriented")

    vertices, tri_vertices = np.unique(tris, return_inverse=True)
    tri_vertices = tri_vertices.reshape(-1, 3)
    edge_vertices = np.searchsorted(vertices, edges)

    component = np.asarray(component, dtype=np.int64)
    euler = {}
    for c in np.unique(component):
        sel = component == c
        nv = len(np.unique(tris[sel]))
        ne = len(np.unique(tri_edges[sel]))
        euler[int(c)] = nv - ne + int(sel.sum())

    return SurfaceMesh(
        nodes=nodes,
        triangles=tris,
        normals=normals,
        areas=0.5 * dbl,
        edges=edges,
        tri_edges=tri_edges,
        tri_signs=tri_signs,
        vertices=vertices,
        tri_vertices=tri_vertices,
        edge_vertices=edge_vertices,
        component=component,
        euler=euler,
    )


# ---------------------------------------------------------------------------
# Gmsh MSH 2.2 ASCII

_NODES_PER_TYPE = {1: 2, 2: 3, 3: 4, 4: 4, 5: 8, 6: 6, 7: 5, 15: 1}


def load_msh(path) -> TetMesh:
    """Read a Gmsh MSH 2.2 ASCII file with 4-node tetrahedra.

    Triangles, lines and points are tolerated and skipped; any other element
    type is rejected. The first element tag (physical group) becomes the
    region tag. Materials are attached later with :meth:`TetMesh.with_materials`.
    """
    text = Path(path).read_text()
    lines = iter(text.splitlines())
    sections: dict[str, list[str]] = {}
    for line in lines:
        line = line.strip()
        if not line.startswith("$") or line.startswith("$End"):
            continue
        name = line[1:]
        body = []
        for inner in lines:
            if inner.strip() == f"$End{name}":
                break
            body.append(inner)
        else:
            raise MeshError(f"section ${name} is not terminated")
        sections[name] = body

    for required in ("MeshFormat", "Nodes", "Elements"):
        if required not in sections:
            raise MeshError(f"missing ${required} section")
    fmt = sections["MeshFormat"][0].split()
    if not fmt or not fmt[0].startswith("2") or len(fmt) < 2 or fmt[1] != "0":
        raise MeshError(f"unsupported mesh format {' '.join(fmt)!r}; need MSH 2.2 ASCII")

    try:
        body = sections["Nodes"]
        n = int(body[0])
        ids = np.empty(n, dtype=np.int64)
        coords = np.empty((n, 3))
        for i, row in enumerate(body[1 : n + 1]):
            tok = row.split()
            ids[i] = int(tok[0])
            coords[i] = [float(t) for t in tok[1:4]]
        if len(body) - 1 < n:
            raise MeshError("$Nodes section shorter than its declared count")
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed $Nodes section: {exc}") from None
    lookup = {int(k): i for i, k in enumerate(ids)}

    tets, region = [], []
    try:
        body = sections["Elements"]
        m = int(body[0])
        if len(body) - 1 < m:
            raise MeshError("$Elements section shorter than its declared count")
        for row in body[1 : m + 1]:
            tok = [int(t) for t in row.split()]
            etype, ntags = tok[1], tok[2]
            if etype not in _NODES_PER_TYPE:
                raise MeshError(f"unsupported element type {etype}")
            if etype != 4:
                if etype in (5, 6, 7):
                    raise MeshError(f"unsupported element type {etype}; only tetrahedra are allowed")
                continue
            tags = tok[3 : 3 + ntags]
            conn = tok[3 + ntags : 3 + ntags + 4]
            tets.append([lookup[c] for c in conn])
            region.append(tags[0] if tags else 1)
    except (ValueError, IndexError, KeyError) as exc:
        raise MeshError(f"malformed $Elements section: {exc}") from None
    if not tets:
        raise MeshError("mesh contains no tetrahedra")
    return TetMesh.from_arrays(coords, tets, region)


def write_msh(path, mesh: TetMesh) -> None:
    """Write the volume mesh as Gmsh MSH 2.2 ASCII (nodes use ``repr`` floats)."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_nodes)]
    out += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(mesh.nodes.tolist())]
    out += ["$EndNodes", "$Elements", str(mesh.n_tets)]
    for i, (t, r) in enumerate(zip(mesh.tets.tolist(), mesh.region.tolist())):
        out.append(f"{i + 1} 4 2 {r} {r} {t[0] + 1} {t[1] + 1} {t[2] + 1} {t[3] + 1}")
    out += ["$EndElements", ""]
    Path(path).write_text("\n".join(out))
