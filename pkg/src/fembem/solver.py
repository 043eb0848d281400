"""Preconditioned MINRES and the block-diagonal preconditioner of the coupled system.

The FEM block is preconditioned by a sparse direct factorization of a
regularized surrogate ``A + R^T N_loc R + delta M`` per solid component,
where ``N_loc`` keeps only the self-interaction of every panel in the
hypersingular form and ``M`` is the ``mu_r^-1``-weighted edge mass matrix
that lifts the curl-curl kernel. The BEM block uses the diagonal of
``G^T V G`` and a dense inverse of the current-sheet block.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .bem import surface_divergence


class ConvergenceError(RuntimeError):
    """MINRES stopped without reaching the tolerance; carries the best iterate."""

    def __init__(self, message, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report


class BreakdownError(ConvergenceError):
    """Non-finite values or an indefinite preconditioner inside MINRES."""


@dataclass(frozen=True)
class SolverConfig:
    """MINRES settings. ``initial_guess`` is ``"zero"`` or ``"warm"``."""

    rtol: float = 1e-8
    max_iter: int = 5000
    initial_guess: str = "zero"

    def __post_init__(self):
        if not 0.0 < self.rtol < 1.0:
            raise ValueError(f"relative tolerance must lie in (0, 1), got {self.rtol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.initial_guess not in ("zero", "warm"):
            raise ValueError(f"unknown initial guess policy {self.initial_guess!r}")


@dataclass
class SolveReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)  # preconditioned, relative to the rhs
    timings: dict = field(default_factory=dict)
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": [float(r) for r in self.residuals],
            "timings": {k: float(v) for k, v in self.timings.items()},
        }


def _as_function(op) -> Callable[[np.ndarray], np.ndarray]:
    if op is None:
        return lambda v: v
    if callable(op) and not hasattr(op, "matvec"):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda v: op @ v


def minres(op, precond, rhs, cfg: SolverConfig = SolverConfig(), x0=None):
    """Preconditioned MINRES (Paige-Saunders recurrences).

    Parameters
    ----------
    op : symmetric operator (array, sparse matrix, or object with ``matvec``)
    precond : SPD operator applying the preconditioner inverse, or ``None``
    rhs : right-hand side
    cfg : tolerance, iteration cap and initial-guess policy
    x0 : start vector, used when ``cfg.initial_guess == "warm"``

    Returns
    -------
    x, SolveReport

    The stopping test compares the preconditioned residual norm with that of
    the right-hand side, so a good start vector saves iterations.
    """
    A, M = _as_function(op), _as_function(precond)
    b = np.asarray(rhs, float)
    report = SolveReport()
    t0 = time.perf_counter()
    x = np.zeros_like(b)
    if cfg.initial_guess == "warm" and x0 is not None:
        x = np.array(x0, float, copy=True)
    zb = M(b)
    bnorm = np.sqrt(max(float(b @ zb), 0.0))
    if bnorm == 0.0:
        report.converged = True
        report.residuals = [0.0]
        report.timings["solve"] = time.perf_counter() - t0
        return np.zeros_like(b), report

    r1 = b - A(x) if np.any(x) else b.copy()
    y = M(r1) if np.any(x) else zb
    beta1 = float(r1 @ y)
    if beta1 < 0:
        raise BreakdownError("preconditioner is not positive definite", x, report)
    beta1 = np.sqrt(beta1)
    report.residuals.append(beta1 / bnorm)
    if beta1 <= cfg.rtol * bnorm:
        report.converged = True
        report.timings["solve"] = time.perf_counter() - t0
        return x, report

    eps = np.finfo(float).eps
    oldb, beta, dbar, epsln, phibar = 0.0, beta1, 0.0, 0.0, beta1
    cs, sn = -1.0, 0.0
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)
    r2 = r1
    for itn in range(1, cfg.max_iter + 1):
        v = y / beta
        y = A(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = M(r2)
        oldb = beta
        beta2 = float(r2 @ y)
        if not np.isfinite(beta2) or not np.isfinite(alfa):
            raise BreakdownError(f"non-finite values in iteration {itn}", x, report)
        if beta2 < 0:
            raise BreakdownError(f"preconditioner is not positive definite (iteration {itn})", x, report)
        beta = np.sqrt(beta2)
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        report.iterations = itn
        report.residuals.append(phibar / bnorm)
        if phibar <= cfg.rtol * bnorm or beta == 0.0:
            report.converged = True
            break
    report.timings["solve"] = time.perf_counter() - t0
    if not report.converged:
        raise ConvergenceError(
            f"MINRES reached {cfg.max_iter} iterations at relative residual {report.residuals[-1]:.3e}",
            x,
            report,
        )
    return x, report


# ---------------------------------------------------------------------------
# preconditioner


class _Factor:
    """Sparse LDL^T-like factorization with a positivity check on the pivots."""

    def __init__(self, mat: sp.csc_matrix):
        self.spd = True
        try:
            lu = splu(
                mat.tocsc(),
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
            piv = lu.U.diagonal()
            if np.any(piv <= 0) or not np.all(np.isfinite(piv)):
                raise ValueError("negative pivot")
            self._solve = lu.solve
        except (RuntimeError, ValueError):
            # fall back to the absolute-value diagonal
            self.spd = False
            d = np.abs(mat.diagonal())
            d[d == 0] = 1.0
            inv = 1.0 / d
            self._solve = lambda r: inv * r

    def solve(self, r):
        return self._solve(r)


@dataclass(eq=False)
class BlockPreconditioner:
    """Block-diagonal SPD preconditioner, one FEM and one BEM block per solid component."""

    fem_blocks: list  # (indices, factor)
    bem_diag_inv: np.ndarray
    n_fem: int
    sheet_inv: np.ndarray | None = None
    fallback: bool = False

    @property
    def shape(self):
        n = self.n_fem + len(self.bem_diag_inv) + (0 if self.sheet_inv is None else len(self.sheet_inv))
        return (n, n)

    def matvec(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        out = np.empty_like(r)
        for idx, fac in self.fem_blocks:
            out[idx] = fac.solve(r[idx])
        nv = len(self.bem_diag_inv)
        out[self.n_fem : self.n_fem + nv] = self.bem_diag_inv * r[self.n_fem : self.n_fem + nv]
        if self.sheet_inv is not None:
            out[self.n_fem + nv :] = self.sheet_inv @ r[self.n_fem + nv :]
        return out

    __call__ = matvec
    __matmul__ = matvec


def local_hypersingular(surf, V0) -> sp.csr_matrix:
    """Sparse part of the hypersingular matrix built from the panel self-interactions only."""
    C = surface_divergence(surf).astype(float).multiply(1.0 / surf.areas[:, None]).tocsr()
    return (C.T @ sp.diags(np.diag(V0)) @ C).tocsr()


def build_preconditioner(sys, mass: sp.spmatrix | None = None, delta: float = 0.1) -> BlockPreconditioner:
    """Block-diagonal preconditioner for a :class:`~fembem.coupling.CoupledSystem`.

    Parameters
    ----------
    mass : ``mu_r^-1``-weighted edge mass matrix; defaults to ``sys.context["mass"]``.
        Without it the shift uses the diagonal of ``A``.
    delta : shift relative to the squared size of each component
    """
    if mass is None:
        mass = sys.context.get("mass")
    surf = sys.surface_ops.surf
    Nloc = local_hypersingular(surf, sys.surface_ops.V0)
    P = (sys.A + sys.R.T @ Nloc @ sys.R).tocsr()
    fem_blocks, fallback = [], False
    mesh = sys.context.get("mesh")
    for c in np.unique(sys.fem_component):
        idx = np.flatnonzero(sys.fem_component == c)
        blk = P[idx][:, idx]
        if mesh is not None:
            pts = mesh.nodes[np.unique(mesh.tets[mesh.component == c])]
            size = float(np.ptp(pts, axis=0).max())
        else:
            size = 1.0
        if mass is not None:
            shift = (delta / size**2) * mass.tocsr()[idx][:, idx]
        else:
            shift = sp.diags(delta * np.abs(blk.diagonal()))
        fac = _Factor((blk + shift).tocsc())
        fallback |= not fac.spd
        fem_blocks.append((idx, fac))
    nv = sys.n_vertices
    d = np.abs(np.diag(sys.W)[:nv]).copy()
    fallback |= bool(np.any(np.diag(sys.W)[:nv] <= 0))
    d[d == 0] = 1.0
    sheet_inv = None
    if sys.n_sheets and sys.mode == "extended":
        H = sys.W[nv:, nv:]
        try:
            np.linalg.cholesky(H)
            sheet_inv = np.linalg.inv(H)
        except np.linalg.LinAlgError:
            fallback = True
            sheet_inv = np.diag(1.0 / np.maximum(np.abs(np.diag(H)), 1e-300))
        sheet_inv = 0.5 * (sheet_inv + sheet_inv.T)
    return BlockPreconditioner(fem_blocks, 1.0 / d, sys.n_fem, sheet_inv, fallback)


def solve_system(sys, precond=None, cfg: SolverConfig = SolverConfig(), x0=None):
    """Build (or reuse) the preconditioner and run MINRES on ``sys``."""
    t0 = time.perf_counter()
    if precond is None:
        precond = build_preconditioner(sys)
    t1 = time.perf_counter()
    x, report = minres(sys, precond, sys.rhs, cfg, x0)
    report.timings["preconditioner"] = t1 - t0
    return x, report
