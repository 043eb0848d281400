"""Configuration parsing and the ``fembem`` command line."""
from __future__ import annotations

import csv
import json

import pytest

from fembem.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, main
from fembem.config import CaseConfig, ConfigError, load_config, loads_config
from fembem.mesh import write_msh
from fembem.meshes import ball, union

SPHERE = """
[mesh]
builtin = "ball"
resolution = 2

[regions.1]
mu_r = 1.0
magnetization = [0.0, 0.0, 1.0]

[output]
directory = "out"
timings = false
"""


def _write(tmp_path, text, name="case.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_config_round_trip(tmp_path):
    cfg = loads_config(SPHERE + "\n[[motion]]\ncomponent = 0\ntranslation = [0.0, 0.0, 0.1]\n")
    again = loads_config(cfg.dumps())
    assert again == cfg
    assert isinstance(cfg, CaseConfig) and cfg.solver.initial_guess == "warm"


@pytest.mark.parametrize(
    "text, match",
    [
        ("[regions.1]\nmu_r = 1.0\n", "mesh"),
        ('[mesh]\nbuiltin = "ball"\n', "regions"),
        ('[mesh]\nbuiltin = "cone"\n[regions.1]\nmu_r = 1.0\n', "built-in"),
        ('[mesh]\nbuiltin = "ball"\n[regions.1]\nmu_r = -2.0\n', "mu_r"),
        ('[mesh]\nbuiltin = "ball"\n[regions.1]\nmu_r = 1.0\n[solver]\nrtol = 2.0\n', "solver"),
        ('[mesh]\nbuiltin = "ball"\n[regions.1]\nmu_r = 1.0\n[extra]\n', "unknown key"),
        ('[mesh]\nbuiltin = "ball"\n[regions.1]\nmu_r = 1.0\n[output]\nformats = ["xml"]\n', "format"),
        ("not toml = = 1", "."),
    ],
)
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        loads_config(text)


def test_run_writes_artifacts(tmp_path):
    path = _write(tmp_path, SPHERE)
    assert main(["run", str(path)]) == EXIT_OK
    out = tmp_path / "out"
    assert {p.name for p in out.iterdir()} >= {"solution.vtk", "solution_surface.vtk", "results.csv", "report.json"}
    report = json.loads((out / "report.json").read_text())
    assert report["steps"][0]["converged"] and "timings" not in report["steps"][0]


def test_output_override_and_threads(tmp_path, monkeypatch):
    path = _write(tmp_path, SPHERE)
    assert main(["run", str(path), "--output", str(tmp_path / "elsewhere"), "--threads", "1"]) == EXIT_OK
    assert (tmp_path / "elsewhere" / "results.csv").exists()
    monkeypatch.setenv("FEMBEM_THREADS", "zero")
    assert main(["run", str(path)]) == EXIT_CONFIG
    monkeypatch.delenv("FEMBEM_THREADS")
    assert main(["run", str(path), "--threads", "0"]) == EXIT_CONFIG


def test_csv_is_reproducible_without_timings(tmp_path):
    path = _write(tmp_path, SPHERE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(path), "--output", str(a)]) == EXIT_OK
    assert main(["run", str(path), "--output", str(b)]) == EXIT_OK
    for name in ("results.csv", "report.json", "solution.vtk"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_missing_material_names_the_tag(tmp_path, capsys):
    path = _write(tmp_path, SPHERE.replace('resolution = 2', 'resolution = 2\nregion = 7'))
    assert main(["run", str(path)]) == EXIT_CONFIG
    assert "7" in capsys.readouterr().err


def test_missing_config_file_is_io_error(tmp_path):
    assert main(["run", str(tmp_path / "absent.toml")]) == EXIT_IO


def test_missing_mesh_file_is_io_error(tmp_path):
    path = _write(tmp_path, SPHERE.replace('builtin = "ball"\nresolution = 2', 'path = "nowhere.msh"'))
    assert main(["run", str(path)]) == EXIT_IO


def test_mesh_file_relative_to_config(tmp_path):
    write_msh(tmp_path / "sphere.msh", ball(2))
    path = _write(tmp_path, SPHERE.replace('builtin = "ball"\nresolution = 2', 'path = "sphere.msh"'))
    assert main(["run", str(path)]) == EXIT_OK


def test_non_convergence_exit_code(tmp_path):
    path = _write(tmp_path, SPHERE + "\n[solver]\nrtol = 1e-12\nmax_iter = 2\n")
    assert main(["run", str(path)]) == EXIT_SOLVER
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["steps"][0]["iterations"] == 2 and not report["steps"][0]["converged"]


def test_surface_size_guard(tmp_path, capsys):
    big = '[mesh]\nbuiltin = "box"\ncells = [90, 90, 1]\nupper = [9.0, 9.0, 0.1]\n[regions.1]\nmu_r = 1.0\n'
    assert main(["run", str(_write(tmp_path, big))]) == EXIT_CONFIG
    assert "20000" in capsys.readouterr().err.replace(",", "").replace("_", "")


def test_study_needs_two_levels(tmp_path):
    text = SPHERE + '\n[study]\nreference = "magnetized_sphere"\n[[study.meshes]]\nbuiltin = "ball"\nresolution = 2\n'
    assert main(["study", str(_write(tmp_path, text))]) == EXIT_CONFIG


def test_study_two_levels(tmp_path):
    text = SPHERE + '\n[study]\nreference = "magnetized_sphere"\n'
    text += '[[study.meshes]]\nbuiltin = "ball"\nresolution = 2\n[[study.meshes]]\nbuiltin = "ball"\nresolution = 4\n'
    assert main(["study", str(_write(tmp_path, text))]) == EXIT_OK
    with (tmp_path / "out" / "study.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["level"] for r in rows] == ["1", "2"]
    assert float(rows[1]["l2_error"]) < float(rows[0]["l2_error"])
    assert rows[0]["seconds"] == ""


def test_three_step_motion(tmp_path):
    text = """
[mesh]
path = "pair.msh"

[regions.1]
mu_r = 1.0
magnetization = [0.0, 0.0, 1.0]

[regions.2]
mu_r = 50.0

[[motion]]
component = 1
translation = [0.0, 0.0, 0.05]

[[motion]]
component = 1
axis = [0.0, 0.0, 1.0]
angle = 0.2

[[motion]]
component = 1
translation = [0.05, 0.0, 0.0]

[output]
directory = "out"
timings = false
"""
    write_msh(tmp_path / "pair.msh", union(ball(2), ball(2, center=(2.6, 0.0, 0.0), region=2)))
    assert main(["run", str(_write(tmp_path, text))]) == EXIT_OK
    out = tmp_path / "out"
    assert all((out / f"step_{k:03d}.vtk").exists() for k in (1, 2, 3))
    report = json.loads((out / "report.json").read_text())
    assert [s["step"] for s in report["steps"]] == [1, 2, 3]
    assert all(s["converged"] for s in report["steps"])


def test_motion_into_contact_is_config_error(tmp_path):
    text = SPHERE.replace('builtin = "ball"\nresolution = 2', 'path = "pair.msh"') + "\n[regions.2]\nmu_r = 5.0\n"
    text += "[[motion]]\ncomponent = 1\ntranslation = [-2.0, 0.0, 0.0]\n"
    write_msh(tmp_path / "pair.msh", union(ball(2), ball(2, center=(2.6, 0.0, 0.0), region=2)))
    assert main(["run", str(_write(tmp_path, text))]) == EXIT_CONFIG


def test_load_config_resolves_relative_paths(tmp_path):
    cfg = load_config(_write(tmp_path, SPHERE))
    assert cfg.resolve("out") == tmp_path / "out"
