"""Case configuration: a TOML file with nested tables.

Example::

    [mesh]
    builtin = "ball"          # or: path = "sphere.msh" (relative to the config file)
    resolution = 8

    [regions.1]
    mu_r = 1.0
    magnetization = [0.0, 0.0, 1.0]

    [solver]
    rtol = 1e-8

    [output]
    directory = "out"

See the README for every table and key.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coupling import RigidMotion
from .meshes import rotation_about
from .solver import SolverConfig

BUILTIN_MESHES = ("ball", "torus", "box")
OUTPUT_FORMATS = ("vtk", "csv", "json")


class ConfigError(ValueError):
    """Invalid or inconsistent case configuration."""


def _vec(value, name, n=3) -> tuple:
    try:
        arr = np.asarray(value, float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of {n} numbers") from exc
    if arr.size != n or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a list of {n} finite numbers")
    return tuple(float(v) for v in arr)


def _check_keys(table: dict, allowed, where: str):
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in [{where}]")


@dataclass(frozen=True)
class RegionConfig:
    mu_r: float = 1.0
    magnetization: tuple = (0.0, 0.0, 0.0)
    current_density: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, tag, d: dict) -> "RegionConfig":
        _check_keys(d, ("mu_r", "magnetization", "current_density"), f"regions.{tag}")
        if "mu_r" not in d:
            raise ConfigError(f"region {tag} has no mu_r")
        mu = d["mu_r"]
        if not isinstance(mu, (int, float)) or not np.isfinite(mu) or mu <= 0:
            raise ConfigError(f"region {tag}: mu_r must be a positive number")
        return cls(
            float(mu),
            _vec(d.get("magnetization", (0, 0, 0)), f"regions.{tag}.magnetization"),
            _vec(d.get("current_density", (0, 0, 0)), f"regions.{tag}.current_density"),
        )


@dataclass(frozen=True)
class CoilConfig:
    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    radius: float = 1.0
    width: float = 0.1
    height: float = 0.1
    current: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "CoilConfig":
        _check_keys(d, [f.name for f in dataclasses.fields(cls)], "coils")
        try:
            return cls(
                _vec(d.get("center", (0, 0, 0)), "coil center"),
                _vec(d.get("axis", (0, 0, 1)), "coil axis"),
                float(d.get("radius", 1.0)),
                float(d.get("width", 0.1)),
                float(d.get("height", 0.1)),
                float(d.get("current", 1.0)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid coil: {exc}") from exc


@dataclass(frozen=True)
class MotionStep:
    component: int
    axis: tuple = (0.0, 0.0, 1.0)
    angle: float = 0.0  # radians
    translation: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, d: dict) -> "MotionStep":
        _check_keys(d, ("component", "axis", "angle", "translation"), "motion")
        if "component" not in d:
            raise ConfigError("motion step without component")
        return cls(
            int(d["component"]),
            _vec(d.get("axis", (0, 0, 1)), "motion axis"),
            float(d.get("angle", 0.0)),
            _vec(d.get("translation", (0, 0, 0)), "motion translation"),
        )

    def rigid_motion(self) -> RigidMotion:
        return RigidMotion(self.component, rotation_about(self.axis, self.angle), np.asarray(self.translation))


@dataclass(frozen=True)
class StudyConfig:
    meshes: tuple = ()  # tuple of mesh tables (dicts frozen as sorted item tuples)
    mu_r: tuple = ()
    sweep_region: int = 1
    reference: str = ""


@dataclass(frozen=True)
class CaseConfig:
    """Validated case description; ``base`` resolves relative file paths."""

    mesh: tuple  # sorted (key, value) items of the [mesh] table
    regions: tuple  # sorted (tag, RegionConfig)
    coils: tuple = ()
    cycles: tuple = ()  # node-id tuples or names of built-in cycles
    mode: str = "extended"
    sectors: int = 1
    sector_axis: tuple = (0.0, 0.0, 1.0)
    motion: tuple = ()
    solver: SolverConfig = SolverConfig(initial_guess="warm")
    output_directory: str = "output"
    formats: tuple = OUTPUT_FORMATS
    timings: bool = True
    study: StudyConfig = StudyConfig()
    base: str = field(default=".", compare=False)

    # -- construction -------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict, base=".") -> "CaseConfig":
        _check_keys(
            d, ("mesh", "regions", "source", "cycles", "periodicity", "motion", "solver", "output", "study"), "top level"
        )
        if "mesh" not in d:
            raise ConfigError("missing [mesh] table")
        mesh = _mesh_table(d["mesh"], "mesh")
        regions = d.get("regions", {})
        if not isinstance(regions, dict) or not regions:
            raise ConfigError("missing [regions] table")
        reg = []
        for tag, table in regions.items():
            try:
                itag = int(tag)
            except ValueError as exc:
                raise ConfigError(f"region tag {tag!r} is not an integer") from exc
            reg.append((itag, RegionConfig.from_dict(itag, table)))
        source = d.get("source", {})
        _check_keys(source, ("coils",), "source")
        coils = tuple(CoilConfig.from_dict(c) for c in source.get("coils", []))
        cyc = d.get("cycles", {})
        _check_keys(cyc, ("paths", "mode"), "cycles")
        paths = []
        for p in cyc.get("paths", []):
            if isinstance(p, str):
                paths.append(p)
            else:
                try:
                    paths.append(tuple(int(i) for i in p))
                except (TypeError, ValueError) as exc:
                    raise ConfigError("a cycle is a list of node ids or a built-in cycle name") from exc
        mode = cyc.get("mode", "extended")
        if mode not in ("extended", "schur"):
            raise ConfigError(f"cycles.mode must be 'extended' or 'schur', got {mode!r}")
        per = d.get("periodicity", {})
        _check_keys(per, ("sectors", "axis"), "periodicity")
        sectors = per.get("sectors", 1)
        if not isinstance(sectors, int) or sectors < 1:
            raise ConfigError("periodicity.sectors must be an integer >= 1")
        motion = tuple(MotionStep.from_dict(m) for m in d.get("motion", []))
        sol = d.get("solver", {})
        _check_keys(sol, ("rtol", "max_iter", "initial_guess"), "solver")
        try:
            solver = SolverConfig(
                float(sol.get("rtol", 1e-8)), int(sol.get("max_iter", 5000)), sol.get("initial_guess", "warm")
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [solver] table: {exc}") from exc
        out = d.get("output", {})
        _check_keys(out, ("directory", "formats", "timings"), "output")
        formats = tuple(out.get("formats", OUTPUT_FORMATS))
        bad = [f for f in formats if f not in OUTPUT_FORMATS]
        if bad:
            raise ConfigError(f"unknown output format(s) {bad}")
        st = d.get("study", {})
        _check_keys(st, ("meshes", "mu_r", "sweep_region", "reference"), "study")
        study = StudyConfig(
            tuple(_mesh_table(m, "study.meshes") for m in st.get("meshes", [])),
            tuple(float(m) for m in st.get("mu_r", [])),
            int(st.get("sweep_region", 1)),
            str(st.get("reference", "")),
        )
        if study.reference not in ("", "magnetized_sphere"):
            raise ConfigError(f"unknown study reference {study.reference!r}")
        if any(m <= 0 for m in study.mu_r):
            raise ConfigError("study.mu_r values must be positive")
        return cls(
            mesh=mesh,
            regions=tuple(sorted(reg)),
            coils=coils,
            cycles=tuple(paths),
            mode=mode,
            sectors=sectors,
            sector_axis=_vec(per.get("axis", (0, 0, 1)), "periodicity.axis"),
            motion=motion,
            solver=solver,
            output_directory=str(out.get("directory", "output")),
            formats=formats,
            timings=bool(out.get("timings", True)),
            study=study,
            base=str(base),
        )

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "mesh": dict(self.mesh),
            "regions": {str(t): dataclasses.asdict(r) for t, r in self.regions},
            "solver": dataclasses.asdict(self.solver),
            "output": {"directory": self.output_directory, "formats": list(self.formats), "timings": self.timings},
            "periodicity": {"sectors": self.sectors, "axis": list(self.sector_axis)},
            "cycles": {"paths": [p if isinstance(p, str) else list(p) for p in self.cycles], "mode": self.mode},
        }
        if self.coils:
            d["source"] = {"coils": [dataclasses.asdict(c) for c in self.coils]}
        if self.motion:
            d["motion"] = [dataclasses.asdict(m) for m in self.motion]
        if self.study != StudyConfig():
            d["study"] = {
                "meshes": [dict(m) for m in self.study.meshes],
                "mu_r": list(self.study.mu_r),
                "sweep_region": self.study.sweep_region,
                "reference": self.study.reference,
            }
        return _plain(d)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base) / p


def _mesh_table(d, where) -> tuple:
    if not isinstance(d, dict):
        raise ConfigError(f"[{where}] must be a table")
    if ("path" in d) == ("builtin" in d):
        raise ConfigError(f"[{where}] needs exactly one of 'path' or 'builtin'")
    if "builtin" in d and d["builtin"] not in BUILTIN_MESHES:
        raise ConfigError(f"unknown built-in mesh {d['builtin']!r}; choose from {BUILTIN_MESHES}")
    return tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in d.items()))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_config(path) -> CaseConfig:
    """Parse and validate a TOML case file (``OSError`` if it cannot be read)."""
    path = Path(path)
    text = path.read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return CaseConfig.from_dict(data, base=path.parent)


def loads_config(text: str, base=".") -> CaseConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from exc
    return CaseConfig.from_dict(data, base=base)
