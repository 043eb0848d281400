"""Shared fixtures: cached sphere solves and the acceptance summary printer."""
from __future__ import annotations

import functools
import time

import numpy as np
import pytest

from fembem import MU0
from fembem.post import exterior_evaluator, l2_norm_B, interior_B, volume_average_B
from fembem.problem import assemble_problem, magnetized_sphere
from fembem.solver import SolverConfig, build_preconditioner, minres

_ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def acceptance_log():
    def record(number: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((number, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@functools.lru_cache(maxsize=None)
def sphere_run(n: int, probe=(0.0, 0.0, 2.0)) -> dict:
    """Solve the magnetized unit ball ``ball(n)`` (M = e3, mu_r = 1) and keep summary numbers only."""
    t0 = time.perf_counter()
    sys_ = assemble_problem(magnetized_sphere(n))
    x, rep = minres(sys_, build_preconditioner(sys_), sys_.rhs, SolverConfig(rtol=1e-8))
    space = sys_.context["space"]
    out = {
        "seconds": time.perf_counter() - t0,
        "norm": l2_norm_B(space, interior_B(space, x)) / MU0,
        "average": volume_average_B(space, x) / MU0,
        "probe": exterior_evaluator(sys_, x)(np.asarray([probe]))[0] / MU0,
        "iterations": rep.iterations,
        "residuals": np.asarray(rep.residuals),
        "surface_edges": sys_.surface_ops.surf.n_edges,
    }
    return out
