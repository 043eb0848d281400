"""Command line front end: ``fembem run <config>`` and ``fembem study <config>``.

Exit codes: 0 success, 2 invalid configuration or mesh, 3 solver did not
converge, 4 file input/output failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import CaseConfig, ConfigError, load_config
from .coupling import apply_motion, component_block
from .mesh import Material, MeshError, TetMesh, load_msh
from .meshes import ball, box, sector_copies, torus
from .post import export_vtk, interior_B, l2_error_B, l2_norm_B, write_convergence_csv
from .problem import assemble_problem, sphere_exact_B
from .solver import ConvergenceError, build_preconditioner, minres
from .sources import LoopCoil

log = logging.getLogger("fembem")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
THREADS_ENV = "FEMBEM_THREADS"


# ---------------------------------------------------------------------------
# case construction


def build_mesh(cfg: CaseConfig, table=None) -> tuple[TetMesh, dict]:
    """Volume mesh (with materials and sectors applied) and any named cycles."""
    t = dict(cfg.mesh if table is None else table)
    named = {}
    if "path" in t:
        mesh = load_msh(cfg.resolve(t["path"]))
    else:
        kind = t["builtin"]
        region = int(t.get("region", 1))
        try:
            if kind == "ball":
                mesh = ball(int(t.get("resolution", 4)), float(t.get("radius", 1.0)), tuple(t.get("center", (0, 0, 0))), region)
            elif kind == "torus":
                keys = ("r_inner", "r_outer", "height", "n_radial", "n_height", "n_phi")
                kw = {k: t[k] for k in keys if k in t}
                mesh, named = torus(region=region, **kw)
            else:
                mesh = box(
                    tuple(t.get("lower", (0, 0, 0))),
                    tuple(t.get("upper", (1, 1, 1))),
                    tuple(int(c) for c in t.get("cells", (1, 1, 1))),
                    region=region,
                )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, MeshError):
                raise
            raise ConfigError(f"invalid built-in {kind} mesh parameters: {exc}") from exc
    if cfg.sectors > 1:
        mesh = sector_copies(mesh, cfg.sectors, cfg.sector_axis)
    regions = dict(cfg.regions)
    missing = [r for r in mesh.regions if r not in regions]
    if missing:
        raise ConfigError(f"no material (mu_r) for mesh region tag(s) {missing}")
    unused = [r for r in regions if r not in mesh.regions]
    if unused:
        raise ConfigError(f"region tag(s) {unused} do not exist in the mesh")
    mats = {r: Material(c.mu_r, c.magnetization, c.current_density) for r, c in regions.items()}
    current = _coil_current(cfg)
    mesh = mesh.with_materials(mats, current=current)
    for step in cfg.motion:
        if not 0 <= step.component < mesh.n_components:
            raise ConfigError(f"motion refers to component {step.component}; the mesh has {mesh.n_components}")
    return mesh, named


def _coil_current(cfg: CaseConfig):
    if not cfg.coils:
        return None
    coils = [LoopCoil(c.center, c.axis, c.radius, c.width, c.height, c.current) for c in cfg.coils]
    return lambda x: sum(c(x) for c in coils)


def _cycles(cfg: CaseConfig, named: dict):
    out = []
    for c in cfg.cycles:
        if isinstance(c, str):
            if c not in named:
                raise ConfigError(f"unknown built-in cycle {c!r}; available: {sorted(named)}")
            out.append(named[c])
        else:
            out.append(list(c))
    return out


def _mesh_h(mesh: TetMesh) -> float:
    e, _ = mesh.edges()
    return float(np.linalg.norm(mesh.nodes[e[:, 1]] - mesh.nodes[e[:, 0]], axis=1).max())


def _assemble(cfg: CaseConfig, mesh, named):
    try:
        return assemble_problem(mesh, _cycles(cfg, named), mode=cfg.mode)
    except MeshError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _row(level, sys_, x, iterations, seconds, cfg: CaseConfig) -> dict:
    """One CSV row; ``l2_error`` is filled when the case names an analytic reference."""
    space = sys_.context["space"]
    error = ""
    if cfg.study.reference == "magnetized_sphere":
        error = l2_error_B(space, x, lambda p: sphere_exact_B(p, _magnetization(cfg)))[0]
    return {
        "level": level,
        "h": _mesh_h(sys_.context["mesh"]),
        "N_FEM": sys_.n_fem,
        "N_BEM": sys_.n_bem,
        "l2_norm": l2_norm_B(space, interior_B(space, x)),
        "l2_error": error,
        "iterations": iterations,
        "seconds": seconds if cfg.timings else "",
    }


# ---------------------------------------------------------------------------
# commands


def run_case(cfg: CaseConfig, output: Path) -> dict:
    """Solve one case (and its motion script); write VTK, CSV and JSON artifacts."""
    output.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    mesh, named = build_mesh(cfg)
    sys_ = _assemble(cfg, mesh, named)
    precond = build_preconditioner(sys_)
    log.info("assembled %d FEM + %d BEM unknowns", sys_.n_fem, sys_.n_bem)
    summary = {"steps": [], "n_fem": sys_.n_fem, "n_bem": sys_.n_bem}
    if cfg.sectors > 1:
        summary["circulant_deviation"] = _circulant_deviation(sys_)
    rows = []
    steps = cfg.motion or (None,)
    x_prev = None
    for k, step in enumerate(steps, start=1):
        ts = time.perf_counter()
        if step is not None:
            try:
                sys_ = apply_motion(sys_, step.rigid_motion())
            except MeshError as exc:
                raise ConfigError(f"motion step {k}: {exc}") from exc
        try:
            x, rep = minres(sys_, precond, sys_.rhs, cfg.solver, x_prev)
        except ConvergenceError as exc:
            if exc.report is not None:
                summary["steps"].append({"step": k, **exc.report.to_dict()})
            _write_json(cfg, output, summary)
            raise
        x_prev = x
        seconds = time.perf_counter() - (t0 if k == 1 else ts)
        if k == 1:
            rep.timings.update(sys_.context.get("timings", {}))
        rows.append(_row(k if cfg.motion else 0, sys_, x, rep.iterations, seconds, cfg))
        summary["steps"].append({"step": k, **rep.to_dict()})
        log.info("step %d: %d iterations", k, rep.iterations)
        if "vtk" in cfg.formats:
            name = f"step_{k:03d}" if cfg.motion else "solution"
            _write_vtk(output, name, sys_, x)
    if "csv" in cfg.formats:
        write_convergence_csv(rows, output / "results.csv")
    summary["rows"] = rows
    _write_json(cfg, output, summary)
    return summary


def _magnetization(cfg: CaseConfig):
    mags = [r.magnetization for _, r in cfg.regions if any(r.magnetization)]
    return mags[0] if mags else (0.0, 0.0, 0.0)


def _circulant_deviation(sys_) -> float:
    surf = sys_.surface_ops.surf
    n = int(surf.component.max()) + 1
    if n < 3:
        return 0.0
    v12 = component_block(surf, 0, 1)
    v23 = component_block(surf, 1, 2)
    return float(np.abs(v12 - v23).max() / np.abs(v12).max())


def _write_vtk(output: Path, name: str, sys_, x):
    mesh, space = sys_.context["mesh"], sys_.context["space"]
    export_vtk(mesh, output / f"{name}.vtk", cell_data={"B": interior_B(space, x)})
    phi = np.asarray(x)[sys_.n_fem : sys_.n_fem + sys_.n_vertices]
    export_vtk(sys_.surface_ops.surf, output / f"{name}_surface.vtk", point_data={"phi": phi})


def _write_json(cfg: CaseConfig, output: Path, summary: dict):
    if "json" not in cfg.formats:
        return
    data = json.loads(json.dumps(summary, default=_json_default))
    if not cfg.timings:
        for step in data.get("steps", []):
            step.pop("timings", None)
    (output / "report.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def convergence_study(cfg: CaseConfig, output: Path) -> dict:
    """Solve every mesh level (and permeability, in sweep mode); write the study tables."""
    levels = cfg.study.meshes
    if len(levels) < 2:
        raise ConfigError("a convergence study needs at least two mesh levels in [study] meshes")
    output.mkdir(parents=True, exist_ok=True)
    sweep = cfg.study.mu_r or (None,)
    rows = []
    for mu in sweep:
        prev = None
        for level, table in enumerate(levels, start=1):
            t0 = time.perf_counter()
            case = cfg
            if mu is not None:
                regs = dict(cfg.regions)
                if cfg.study.sweep_region not in regs:
                    raise ConfigError(f"sweep region {cfg.study.sweep_region} is not in [regions]")
                regs[cfg.study.sweep_region] = replace(regs[cfg.study.sweep_region], mu_r=mu)
                case = replace(cfg, regions=tuple(sorted(regs.items())))
            mesh, named = build_mesh(case, table)
            sys_ = _assemble(case, mesh, named)
            x, rep = minres(sys_, build_preconditioner(sys_), sys_.rhs, case.solver)
            row = _row(level, sys_, x, rep.iterations, time.perf_counter() - t0, case)
            error = row["l2_error"]
            row["mu_r"] = "" if mu is None else mu
            flag = ""
            if error != "" and prev is not None and not error < prev:
                flag = "non-monotone"
                log.warning("error did not decrease at level %d", level)
            row["flag"] = flag
            prev = error if error != "" else prev
            rows.append(row)
            log.info("level %d mu_r %s: %d iterations", level, mu, rep.iterations)
    extra = ("mu_r", "flag")
    if "csv" in cfg.formats:
        write_convergence_csv(rows, output / "study.csv", extra)
        if cfg.study.mu_r:
            _write_iteration_table(rows, output / "iterations.csv", cfg.study.mu_r, len(levels))
    errors = [r["l2_error"] for r in rows if r["l2_error"] != ""]
    monotone = all(r["flag"] == "" for r in rows)
    summary = {"rows": rows, "converged": bool(errors) and monotone, "monotone": monotone}
    if "json" in cfg.formats:
        clean = json.loads(json.dumps(summary, default=_json_default))
        if not cfg.timings:
            for r in clean["rows"]:
                r.pop("seconds", None)
        (output / "study.json").write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")
    return summary


def _write_iteration_table(rows, path: Path, mus, n_levels):
    """Iteration counts shaped as levels x permeabilities."""
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level"] + [f"mu_r={m:g}" for m in mus])
        for level in range(1, n_levels + 1):
            w.writerow([level] + [next(r["iterations"] for r in rows if r["level"] == level and r["mu_r"] == m) for m in mus])


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fembem", description="Symmetric FEM-BEM magnetostatic solver")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (default: ${THREADS_ENV} or library default)")
    p.add_argument("--output", type=Path, default=None, help="output directory (overrides the config)")
    p.add_argument("--verbose", "-v", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "solve one case"), ("study", "mesh convergence or permeability sweep")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", type=Path)
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        sp.add_argument("--output", type=Path, default=argparse.SUPPRESS)
        sp.add_argument("--verbose", "-v", action="count", default=argparse.SUPPRESS)
    return p


def _threads(arg) -> int | None:
    if arg is not None:
        if arg < 1:
            raise ConfigError("--threads must be a positive integer")
        return arg
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be positive")
        return n
    return None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    try:
        threads = _threads(args.threads)
        cfg = load_config(args.config)
        output = args.output if args.output is not None else cfg.resolve(cfg.output_directory)
        with threadpool_limits(limits=threads):
            if args.command == "run":
                run_case(cfg, output)
            else:
                convergence_study(cfg, output)
    except (ConfigError, MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
