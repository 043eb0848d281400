"""MINRES and the block preconditioner."""
from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from fembem.problem import assemble_problem, magnetized_sphere
from fembem.solver import (
    BreakdownError,
    ConvergenceError,
    SolverConfig,
    build_preconditioner,
    minres,
    solve_system,
)


def _indefinite(n=50, seed=0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.concatenate([rng.uniform(1, 10, n // 2), -rng.uniform(1, 10, n - n // 2)])
    return (Q * ev) @ Q.T, rng.standard_normal(n)


def test_identity_converges_in_one_step():
    b = np.arange(1.0, 6.0)
    x, rep = minres(np.eye(5), None, b)
    assert rep.iterations == 1 and rep.converged
    assert np.allclose(x, b, rtol=1e-15)


def test_random_indefinite_against_dense_solve():
    A, b = _indefinite()
    x, rep = minres(A, None, b, SolverConfig(rtol=1e-12))
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)
    assert rep.iterations <= 50 + 5


def test_accepts_sparse_and_callables():
    A, b = _indefinite(20, 1)
    xs, _ = minres(sp.csr_matrix(A), None, b, SolverConfig(rtol=1e-12))
    xf, _ = minres(lambda v: A @ v, lambda r: r, b, SolverConfig(rtol=1e-12))
    assert np.allclose(xs, xf, rtol=1e-10)


def test_consistent_singular_system():
    rng = np.random.default_rng(2)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 30)))
    ev = np.concatenate([rng.uniform(1, 5, 10), -rng.uniform(1, 5, 10), np.zeros(10)])
    A = (Q * ev) @ Q.T
    b = A @ rng.standard_normal(30)  # in the range
    x, rep = minres(A, None, b, SolverConfig(rtol=1e-10))
    assert np.linalg.norm(A @ x - b) <= 1e-8 * np.linalg.norm(b)
    # started from zero, the iterate has no null-space component
    assert np.abs(Q[:, 20:].T @ x).max() <= 1e-8 * np.linalg.norm(x)


def test_residual_history_is_monotone():
    A, b = _indefinite(40, 3)
    M = np.diag(1.0 / np.abs(np.diag(A)) + 0.1)
    _, rep = minres(A, M, b, SolverConfig(rtol=1e-10))
    r = np.asarray(rep.residuals)
    assert r[0] == pytest.approx(1.0)
    assert np.all(np.diff(r) <= 1e-12)


def test_nonconvergence_carries_iterate():
    A, b = _indefinite(40, 4)
    with pytest.raises(ConvergenceError) as err:
        minres(A, None, b, SolverConfig(rtol=1e-12, max_iter=3))
    assert err.value.x is not None and err.value.x.shape == b.shape
    assert err.value.report.iterations == 3
    assert not isinstance(err.value, BreakdownError)


def test_indefinite_preconditioner_breaks_down():
    A, b = _indefinite(10, 5)
    M = np.diag(np.r_[np.ones(9), -1.0])
    with pytest.raises(BreakdownError):
        minres(A, M, b)


def test_non_finite_operator_breaks_down():
    with pytest.raises(BreakdownError, match="non-finite"):
        minres(lambda v: np.full_like(v, np.nan), None, np.ones(4))


def test_zero_rhs_returns_zero():
    x, rep = minres(np.eye(3), None, np.zeros(3))
    assert not np.any(x) and rep.converged and rep.iterations == 0


def test_exact_warm_start_needs_no_iterations():
    A, b = _indefinite(20, 6)
    xs = np.linalg.solve(A, b)
    x, rep = minres(A, None, b, SolverConfig(initial_guess="warm"), x0=xs)
    assert rep.iterations == 0 and np.array_equal(x, xs)
    # the zero policy ignores x0
    _, rep0 = minres(A, None, b, SolverConfig(), x0=xs)
    assert rep0.iterations > 0


@pytest.mark.parametrize("kw", [{"rtol": 0.0}, {"rtol": 1.5}, {"max_iter": 0}, {"initial_guess": "random"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


@pytest.fixture(scope="module")
def sphere2():
    return assemble_problem(magnetized_sphere(2))


def test_preconditioner_is_spd(sphere2):
    P = build_preconditioner(sphere2)
    assert not P.fallback
    n = P.shape[0]
    Pm = np.column_stack([P.matvec(e) for e in np.eye(n)])
    assert np.abs(Pm - Pm.T).max() <= 1e-10 * np.abs(Pm).max()
    assert np.linalg.eigvalsh(0.5 * (Pm + Pm.T)).min() > 0


def test_preconditioned_solve_matches_dense(sphere2):
    x, rep = solve_system(sphere2, cfg=SolverConfig(rtol=1e-10))
    S = sphere2.materialize()
    assert np.linalg.norm(S @ x - sphere2.rhs) <= 1e-7 * np.linalg.norm(sphere2.rhs)
    assert set(rep.timings) >= {"solve", "preconditioner"}
    assert rep.to_dict()["iterations"] == rep.iterations


def test_preconditioning_reduces_iterations(sphere2):
    _, plain = minres(sphere2, None, sphere2.rhs, SolverConfig(rtol=1e-8, max_iter=5000))
    _, prec = solve_system(sphere2, cfg=SolverConfig(rtol=1e-8))
    assert prec.iterations < plain.iterations
