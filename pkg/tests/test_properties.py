"""Property tests for structural invariants."""
from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fembem.bem import assemble_topological_gradient, surface_divergence
from fembem.config import loads_config
from fembem.coupling import SurfaceOperators, build_current_sheet, circulant_matvec
from fembem.fem import EdgeSpace, assemble_curl_curl, discrete_gradient
from fembem.mesh import Material, extract_boundary
from fembem.meshes import ball, box, rotation_about, torus
from fembem.post import ampere_loop
from fembem.solver import SolverConfig, minres

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite)
axis3 = vec3.filter(lambda v: np.linalg.norm(v) > 1e-2)
angle = st.floats(-np.pi, np.pi, allow_nan=False)

_BALL2 = ball(2).with_materials({1: Material()})
_SURF2 = extract_boundary(_BALL2)
_V2 = SurfaceOperators.assemble(_SURF2).V


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["ball2", "ball4", "box", "torus"]))
def test_divergence_of_gradient_vanishes(name):
    mesh = {"ball2": lambda: ball(2), "ball4": lambda: ball(4), "box": lambda: box(cells=(2, 3, 1)), "torus": lambda: torus(n_phi=6)[0]}[name]()
    surf = extract_boundary(mesh)
    D, G = surface_divergence(surf), assemble_topological_gradient(surf)
    assert (D @ G).count_nonzero() == 0


@settings(max_examples=10, deadline=None)
@given(
    arrays(np.float64, (2, 3), elements=st.floats(0.3, 3.0)),
    st.floats(0.1, 100.0),
    st.integers(0, 2**32 - 1),
)
def test_gradients_are_curl_free_for_any_geometry(scale, mu, seed):
    mesh = box(upper=tuple(scale[0]), cells=(2, 1, 2)).with_materials({1: Material(mu)})
    space = EdgeSpace.on(mesh)
    A = assemble_curl_curl(space)
    g = discrete_gradient(space) @ np.random.default_rng(seed).standard_normal(mesh.n_nodes)
    assert np.abs(A @ g).max() <= 1e-11 * abs(A).max() * max(np.abs(g).max(), 1.0)


@settings(max_examples=8, deadline=None)
@given(axis3, angle, vec3)
def test_single_layer_is_rigid_motion_invariant(axis, theta, shift):
    Q = rotation_about(axis, theta)
    moved = _SURF2.with_nodes(_SURF2.nodes @ Q.T + np.asarray(shift))
    V = SurfaceOperators.assemble(moved).V
    assert np.abs(V - _V2).max() <= 1e-10 * np.abs(_V2).max()


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_circulant_product_matches_dense(n, m, seed):
    rng = np.random.default_rng(seed)
    blocks = [rng.standard_normal((m, m)) for _ in range(n)]
    dense = np.block([[blocks[(i - k) % n] for i in range(n)] for k in range(n)])
    x = rng.standard_normal(n * m)
    y = dense @ x
    assert np.allclose(circulant_matvec(blocks, x), y, rtol=0, atol=1e-12 * max(np.abs(y).max(), 1.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_minres_solves_nonsingular_symmetric_systems(n, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 5.0, n)
    A = (Q * ev) @ Q.T
    b = rng.standard_normal(n)
    x, rep = minres(A, None, b, SolverConfig(rtol=1e-12))
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)
    assert np.all(np.diff(rep.residuals) <= 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 5), st.sampled_from(["toroidal", "poloidal"]))
def test_sheets_divergence_free_for_shifted_cycles(k, which):
    mesh, cycles = torus(n_phi=6)
    surf = extract_boundary(mesh)
    cyc = cycles[which]
    cyc = cyc[k % len(cyc) :] + cyc[: k % len(cyc)]  # start point does not matter
    sheet = build_current_sheet(surf, cyc)
    ref = build_current_sheet(surf, cycles[which])
    assert not np.any(surface_divergence(surf) @ sheet.coeffs)
    assert np.array_equal(sheet.coeffs, ref.coeffs)


@settings(max_examples=25, deadline=None)
@given(vec3, arrays(np.float64, (5, 3), elements=finite, unique=True))
def test_constant_field_has_no_circulation(B0, loop):
    B = lambda x: np.broadcast_to(np.asarray(B0, float), x.shape)
    scale = max(np.abs(B0).max(), 1.0) * max(np.abs(loop).max(), 1.0)
    assert abs(ampere_loop(B, loop)) <= 1e-5 * scale


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e4), vec3, st.floats(1e-12, 0.5), st.integers(1, 100000), st.booleans())
def test_config_round_trip(mu, M, rtol, max_iter, timings):
    text = f"""
[mesh]
builtin = "ball"
resolution = 4

[regions.3]
mu_r = {mu!r}
magnetization = [{M[0]!r}, {M[1]!r}, {M[2]!r}]

[solver]
rtol = {rtol!r}
max_iter = {max_iter}

[output]
timings = {str(timings).lower()}
"""
    cfg = loads_config(text)
    assert loads_config(cfg.dumps()) == cfg
    assert dict(cfg.regions)[3].mu_r == mu
