"""Mesh-to-system pipeline shared by the command line and the studies."""
from __future__ import annotations

import time

import numpy as np

from . import MU0
from .bem import QuadratureSettings
from .coupling import CoupledSystem, SurfaceOperators, assemble_system, build_current_sheet
from .fem import EdgeSpace, assemble_curl_curl, assemble_mass, assemble_source, project_source, trace_restriction
from .mesh import MeshError, TetMesh, extract_boundary

MAX_SURFACE_EDGES = 20_000


def assemble_problem(
    mesh: TetMesh,
    cycles=(),
    mode: str = "extended",
    settings: QuadratureSettings = QuadratureSettings(),
    current=None,
    project: bool = True,
    max_surface_edges: int = MAX_SURFACE_EDGES,
) -> CoupledSystem:
    """Assemble the coupled system of a meshed configuration.

    Parameters
    ----------
    mesh : volume mesh with its material table
    cycles : closed surface node paths, one current sheet each
    current : optional current density override (per-tet array or callable)
    project : remove the gradient part of the load so the singular system is consistent

    The returned system keeps the mesh, edge space, surface, the
    ``mu_r^-1`` mass matrix and per-phase timings in ``context``.
    """
    t0 = time.perf_counter()
    surf = extract_boundary(mesh)
    if surf.n_edges > max_surface_edges:
        raise MeshError(
            f"surface has {surf.n_edges} edges; dense boundary blocks are limited to {max_surface_edges}"
        )
    space = EdgeSpace.on(mesh)
    mu = mesh.mu_r()
    A = assemble_curl_curl(space, mu)
    f = assemble_source(space, current=current)
    if project:
        f = project_source(space, f)
    R = trace_restriction(space, surf)
    t1 = time.perf_counter()
    ops = SurfaceOperators.assemble(surf, settings)
    t2 = time.perf_counter()
    sheets = [s for s in (build_current_sheet(surf, c) for c in cycles) if s is not None]
    fem_comp = np.empty(space.dim, dtype=np.int64)
    fem_comp[space.tet_edges.ravel()] = np.repeat(mesh.component, 6)
    sys = assemble_system(A, f, R, ops, fem_comp, sheets, mode)
    sys.context.update(
        mesh=mesh,
        space=space,
        surf=surf,
        mass=assemble_mass(space, 1.0 / mu),
        timings={"fem": t1 - t0, "bem": t2 - t1, "coupling": time.perf_counter() - t2},
    )
    return sys


def reassemble(sys: CoupledSystem) -> CoupledSystem:
    """Full from-scratch assembly on the current geometry of ``sys`` (reference for block updates)."""
    mesh = sys.context["mesh"]
    return assemble_problem(
        mesh,
        cycles=[s.cycle for s in sys.sheets],
        mode=sys.mode,
        settings=sys.surface_ops.settings,
        project=True,
    )


def magnetized_sphere(n: int, magnetization=(0.0, 0.0, 1.0), mu_r: float = 1.0) -> TetMesh:
    """Unit ball of the mapped-cube family with a uniform magnetization."""
    from .mesh import Material
    from .meshes import ball

    return ball(n).with_materials({1: Material(mu_r, tuple(magnetization))})


def sphere_exact_B(x, magnetization=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Flux density of a uniformly magnetized unit ball, inside and outside."""
    x = np.atleast_2d(np.asarray(x, float))
    M = np.asarray(magnetization, float)
    r = np.linalg.norm(x, axis=1)
    inside = r < 1.0
    out = np.empty_like(x)
    out[inside] = 2.0 / 3.0 * MU0 * M
    xo, ro = x[~inside], r[~inside, None]
    m = 4.0 * np.pi / 3.0 * M  # dipole moment of the unit ball
    out[~inside] = MU0 / (4 * np.pi) * (3 * xo * (xo @ m)[:, None] / ro**5 - m / ro**3)
    return out


def current_torus(mu_r: float = 1.0, n_phi: int = 16, n_radial: int = 2, n_height: int = 2, current: float = 1.0):
    """Square-section torus (radii 1 to 1.5, height 0.5) carrying ``current`` around the hole.

    Returns ``(mesh, cycles)``; the azimuthal current density is uniform over
    the cross-section, so the net current through every meridian section is
    ``current``.
    """
    from .mesh import Material
    from .meshes import torus
    from .sources import LoopCoil

    mesh, cycles = torus(n_radial=n_radial, n_height=n_height, n_phi=n_phi)
    # coil box slightly larger than the section so chord-cut tets stay covered
    density = current / 0.25
    coil = LoopCoil(radius=1.25, width=0.8, height=0.8, current=density * 0.64)
    return mesh.with_materials({1: Material(mu_r)}, current=coil), cycles
