"""Field recovery, error norms, Ampere loop integrals and file output."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import MU0
from .bem import evaluate_exterior_B
from .fem import EdgeSpace
from .mesh import TET_FACES, SurfaceMesh, TetMesh
from .quadrature import TET_RULE_BARY, TET_RULE_WEIGHTS

CSV_COLUMNS = ("level", "h", "N_FEM", "N_BEM", "l2_norm", "l2_error", "iterations", "seconds")


def interior_B(space: EdgeSpace, coeffs) -> np.ndarray:
    """Per-tet constant flux density (tesla) of the solved edge coefficients.

    The load carries the factor ``mu0``, so the edge unknowns already are the
    physical vector potential and ``B`` is its discrete curl.
    """
    return space.curl(np.asarray(coeffs)[: space.dim])


def l2_norm_B(space: EdgeSpace, B) -> float:
    _, vol = space.barycentric_gradients()
    return float(np.sqrt(np.einsum("md,md,m->", B, B, vol)))


def l2_error_B(space: EdgeSpace, coeffs, exact) -> tuple[float, float]:
    """``||B_h - B||_L2`` with a degree-2 rule per tet, and ``||B_h||_L2``.

    ``exact`` maps ``(n, 3)`` points to ``(n, 3)`` flux densities.
    """
    B = interior_B(space, coeffs)
    mesh = space.mesh
    p = mesh.nodes[mesh.tets]
    xq = np.einsum("qa,mad->mqd", TET_RULE_BARY, p)
    Be = np.asarray(exact(xq.reshape(-1, 3)), float).reshape(xq.shape)
    _, vol = space.barycentric_gradients()
    d = Be - B[:, None, :]
    err2 = np.einsum("q,mqd,mqd,m->", TET_RULE_WEIGHTS * 6.0, d, d, vol)
    return float(np.sqrt(err2)), l2_norm_B(space, B)


def volume_average_B(space: EdgeSpace, coeffs) -> np.ndarray:
    B = interior_B(space, coeffs)
    _, vol = space.barycentric_gradients()
    return (B * vol[:, None]).sum(axis=0) / vol.sum()


def flux_defect(space: EdgeSpace, coeffs) -> np.ndarray:
    """Per-tet net outward flux of ``B`` relative to ``|B|`` times the tet surface area."""
    B = interior_B(space, coeffs)
    p = space.mesh.nodes[space.mesh.tets[:, TET_FACES]]  # (m, 4, 3, 3)
    area_normals = 0.5 * np.cross(p[:, :, 1] - p[:, :, 0], p[:, :, 2] - p[:, :, 0])
    net = np.einsum("md,mfd->m", B, area_normals)
    scale = np.linalg.norm(B, axis=1) * np.linalg.norm(area_normals, axis=2).sum(axis=1)
    return np.abs(net) / np.where(scale > 0, scale, 1.0)


def exterior_evaluator(sys, x, min_distance: float = 0.5):
    """Callable ``points -> B`` in the exterior for a solved coupled system."""
    surf = sys.surface_ops.surf
    w, lam = sys.dirichlet(x), sys.neumann(x)
    return lambda pts: evaluate_exterior_B(surf, pts, w, lam, min_distance)


def circle(center, normal, radius, n: int = 64) -> np.ndarray:
    """``n`` points on a circle, counter-clockwise about ``normal`` (endpoint not repeated)."""
    normal = np.asarray(normal, float)
    normal = normal / np.linalg.norm(normal)
    helper = np.eye(3)[np.argmin(np.abs(normal))]
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    t = 2 * np.pi * np.arange(n) / n
    return np.asarray(center, float) + radius * (np.cos(t)[:, None] * u + np.sin(t)[:, None] * v)


def ampere_loop(field, loop, min_samples: int = 64) -> float:
    """``oint H . dl`` along a closed polyline with the composite trapezoid rule.

    Parameters
    ----------
    field : callable ``points -> B`` (tesla), e.g. from :func:`exterior_evaluator`
    loop : (k, 3) polyline vertices; the closing segment is implied
    min_samples : segments are subdivided until at least this many samples exist
    """
    loop = np.asarray(loop, float)
    if len(loop) > 1 and np.array_equal(loop[0], loop[-1]):
        loop = loop[:-1]
    if len(loop) < 3:
        raise ValueError("an Ampere loop needs at least three vertices")
    sub = max(1, -(-min_samples // len(loop)))
    nxt = np.roll(loop, -1, axis=0)
    s = np.arange(sub) / sub
    pts = (loop[:, None, :] + s[None, :, None] * (nxt - loop)[:, None, :]).reshape(-1, 3)
    H = np.asarray(field(pts), float) / MU0
    dl = np.roll(pts, -1, axis=0) - pts
    return float(0.5 * np.einsum("kd,kd->", H + np.roll(H, -1, axis=0), dl))


# ---------------------------------------------------------------------------
# output


def export_vtk(mesh, path, cell_data=None, point_data=None) -> Path:
    """Write a legacy ASCII VTK unstructured grid.

    ``mesh`` is a :class:`TetMesh` (tetra cells, all nodes) or a
    :class:`SurfaceMesh` (triangle cells on the surface vertices). Values
    with three columns are written as VECTORS, flat arrays as SCALARS.
    """
    if isinstance(mesh, TetMesh):
        pts, cells, ctype = mesh.nodes, mesh.tets, 10
    elif isinstance(mesh, SurfaceMesh):
        pts, cells, ctype = mesh.nodes[mesh.vertices], mesh.tri_vertices, 5
    else:
        raise TypeError("export_vtk expects a TetMesh or a SurfaceMesh")
    cell_data, point_data = dict(cell_data or {}), dict(point_data or {})
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", "fembem output", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(pts)} double")
    lines += [" ".join(repr(float(c)) for c in p) for p in pts]
    k = cells.shape[1]
    lines.append(f"CELLS {len(cells)} {len(cells) * (k + 1)}")
    lines += [f"{k} " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(ctype)] * len(cells)
    for header, data, count in (("CELL_DATA", cell_data, len(cells)), ("POINT_DATA", point_data, len(pts))):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, values in data.items():
            values = np.asarray(values, float)
            if values.shape[0] != count:
                raise ValueError(f"field {name!r} has {values.shape[0]} values, expected {count}")
            if values.ndim == 2 and values.shape[1] == 3:
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(repr(float(c)) for c in v) for v in values]
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [repr(float(v)) for v in values.ravel()]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_convergence_csv(rows, path, extra_columns=()) -> Path:
    """Write one row per mesh level with the standard columns (plus ``extra_columns``)."""
    path = Path(path)
    cols = list(CSV_COLUMNS) + list(extra_columns)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _fmt(row.get(c, "")) for c in cols})
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v
