"""End-to-end command-line behaviour: generation, runs, profiles, validation."""

import json

import numpy as np
import pytest

from ritesolver.assembly import Assembler
from ritesolver.cli import (
    CaseConfig,
    ConfigError,
    LineOutsideDomain,
    ProfileSpec,
    builtin_case,
    emit_profile,
    generate_case,
    main,
    run_case,
)
from ritesolver.geometry import load_mesh
from ritesolver.kernels import RadiativeProperties
from ritesolver.solver import solve_rites
from ritesolver.validation import lemma3_interior_identity
from ritesolver.visibility import chi_point


# ---------------------------------------------------------------------------
# Builtin enclosure generation


def test_generate_cube_counts(tmp_path):
    assert main(["generate", "cube", "--resolution", "5", "--out", str(tmp_path)]) == 0
    path = tmp_path / "cube_r5.json"
    assert path.is_file()
    mesh, grid = load_mesh(path)
    assert mesh.n_elements == 150
    assert grid.n_cells == 125
    assert np.all(grid.dims == 5)


def test_generate_lshape_geometry(tmp_path):
    path = generate_case("lshape", 2, tmp_path)
    mesh, grid = load_mesh(path)
    areas = mesh.arrays().areas
    assert areas.sum() == pytest.approx(26.0)
    # Interior volume is 7 cubic meters; at two cells per meter that is 56
    # interior cells out of the 1 x 3 x 3 bounding grid.
    from ritesolver.assembly import collocation_points

    col = collocation_points(mesh, grid)
    assert col.n_interior == 56
    assert grid.n_cells == 2 * 6 * 6
    # Inward orientation: the solid-angle closure holds from an interior point.
    report = lemma3_interior_identity(mesh, (0.5, 0.5, 0.5))
    assert report.passed


def test_lshape_notch_blocks_line_of_sight():
    mesh, _ = builtin_case("lshape", 2)
    # High up in the tall arm to the far end of the low arm: the inside
    # corner of the notch cuts the line.
    assert chi_point((0.5, 0.5, 2.999), (0.5, 2.9, 0.001), mesh) == 0.0
    # Dropping the start low enough clears the corner.
    assert chi_point((0.5, 0.5, 0.5), (0.5, 2.9, 0.001), mesh) == 1.0


def test_builtin_case_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        builtin_case("sphere", 3)
    with pytest.raises(ConfigError):
        builtin_case("cube", 0)
    with pytest.raises(ConfigError):
        generate_case("wedge", 2, ".")


# ---------------------------------------------------------------------------
# Configuration parsing


def write_config(tmp_path, **overrides):
    mesh_path = generate_case("cube", 2, tmp_path)
    data = {
        "mesh": mesh_path.name,
        "sigma_a": 0.4,
        "sigma_s": 0.6,
        "output": str(tmp_path / "out"),
        "profiles": [
            {
                "name": "floor_mid",
                "start": [0.0, 0.5, 0.0],
                "end": [1.0, 0.5, 0.0],
                "samples": 5,
                "quantity": "q",
            },
            {
                "name": "column",
                "start": [0.25, 0.25, 0.25],
                "end": [0.25, 0.25, 0.75],
                "samples": 2,
                "quantity": "G",
            },
        ],
    }
    data.update(overrides)
    path = tmp_path / "case.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_config_rejects_unknown_keys(tmp_path):
    path = write_config(tmp_path)
    data = json.loads(path.read_text())
    data["quadrature"] = 4
    with pytest.raises(ConfigError, match="unknown config keys"):
        CaseConfig.from_dict(data, base_dir=tmp_path)


def test_config_requires_core_keys(tmp_path):
    write_config(tmp_path)
    with pytest.raises(ConfigError, match="missing required key"):
        CaseConfig.from_dict({"mesh": "cube_r2.json", "sigma_a": 1.0},
                             base_dir=tmp_path)


def test_config_checks_mesh_exists(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        CaseConfig.from_dict(
            {"mesh": "nowhere.json", "sigma_a": 1.0, "sigma_s": 0.0},
            base_dir=tmp_path,
        )


def test_profile_spec_validation():
    with pytest.raises(ConfigError, match="at least 2 samples"):
        ProfileSpec("p", (0, 0, 0), (1, 0, 0), 1, "q")
    with pytest.raises(ConfigError, match="must be 'q' or 'G'"):
        ProfileSpec("p", (0, 0, 0), (1, 0, 0), 2, "flux")


def test_main_reports_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mesh": "missing.json", "sigma_a": 1, "sigma_s": 0}))
    assert main(["run", "--config", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Full runs


def test_run_writes_outputs_and_reruns_identically(tmp_path, capsys):
    config = write_config(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", "--config", str(config), "--out", str(out_a)]) == 0
    assert main(["run", "--config", str(config), "--out", str(out_b)]) == 0
    capsys.readouterr()
    produced = sorted(f.name for f in out_a.iterdir())
    assert produced == [
        "config.json",
        "convergence.csv",
        "oracles.csv",
        "oracles.txt",
        "profile_column.csv",
        "profile_floor_mid.csv",
    ]
    for name in produced:
        if name == "config.json":
            continue  # echoes the differing output directory
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
    echoed = json.loads((out_a / "config.json").read_text())
    assert echoed["sigma_a"] == 0.4
    assert echoed["sigma_s"] == 0.6


def test_run_flag_overrides_reach_the_echo(tmp_path, capsys):
    config = write_config(tmp_path, profiles=[])
    out = tmp_path / "o"
    code = main([
        "run", "--config", str(config), "--out", str(out),
        "--tol", "1e-6", "--max-iter", "50", "--seed", "99",
    ])
    capsys.readouterr()
    assert code == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["tolerance"] == 1e-6
    assert echoed["max_iterations"] == 50
    assert echoed["seed"] == 99


def test_run_reports_nonconvergence(tmp_path, capsys):
    config = write_config(tmp_path, profiles=[])
    out = tmp_path / "o"
    with pytest.warns(UserWarning):
        code = main([
            "run", "--config", str(config), "--out", str(out),
            "--max-iter", "1", "--tol", "1e-14",
        ])
    capsys.readouterr()
    assert code == 1


def test_validate_subcommand_passes(tmp_path, capsys):
    config = write_config(tmp_path, profiles=[])
    out = tmp_path / "v"
    assert main(["validate", "--config", str(config), "--out", str(out)]) == 0
    capsys.readouterr()
    assert (out / "oracles.csv").is_file()
    assert (out / "oracles.txt").is_file()


# ---------------------------------------------------------------------------
# Profile extraction


@pytest.fixture(scope="module")
def solved_case():
    mesh, grid = builtin_case("cube", 2)
    props = RadiativeProperties(sigma_a=0.4, sigma_s=0.6,
                                domain_diameter=mesh.diameter())
    asm = Assembler(mesh, grid)
    surface = asm.assemble_surface(props)
    volume = asm.assemble_volume(props)
    state = solve_rites(surface, volume, props)
    return mesh, grid, asm.collocation, volume, state


def test_profile_hits_cell_centers_exactly(solved_case):
    mesh, grid, collocation, volume, state = solved_case
    spec = ProfileSpec("column", (0.25, 0.25, 0.25), (0.25, 0.25, 0.75), 2, "G")
    rows = emit_profile(state, collocation, grid, mesh, spec)
    assert rows.shape == (2, 5)
    # Both samples sit on cell centers, so the emitted values are the solved
    # incident energies of those cells, bit for bit.
    for row, flat in zip(rows, (0, 4)):
        position = int(np.nonzero(volume.cells == flat)[0][0])
        assert row[4] == state.incident[position]
    assert rows[0, 0] == 0.0
    assert rows[1, 0] == pytest.approx(0.5)


def test_profile_flux_line_is_wall_bound(solved_case):
    mesh, grid, collocation, volume, state = solved_case
    spec = ProfileSpec("floor", (0.0, 0.5, 0.0), (1.0, 0.5, 0.0), 5, "q")
    rows = emit_profile(state, collocation, grid, mesh, spec)
    assert rows.shape == (5, 5)
    # Samples on the floor plane read floor collocation values only: every
    # emitted value must be one of the floor points' fluxes.
    floor_elements = {
        k for k, e in enumerate(mesh.elements) if e.normal[2] == 1.0
    }
    floor_values = {
        float(state.q[i]) for i in range(collocation.n_boundary)
        if int(collocation.boundary_element[i]) in floor_elements
    }
    for value in rows[:, 4]:
        assert float(value) in floor_values


def test_profile_outside_domain_raises(solved_case):
    mesh, grid, collocation, volume, state = solved_case
    far_wall = ProfileSpec("far", (2.0, 2.0, 0.0), (3.0, 3.0, 0.0), 3, "q")
    with pytest.raises(LineOutsideDomain):
        emit_profile(state, collocation, grid, mesh, far_wall)
    outside = ProfileSpec("up", (0.5, 0.5, 1.5), (0.5, 0.5, 2.5), 3, "G")
    with pytest.raises(LineOutsideDomain):
        emit_profile(state, collocation, grid, mesh, outside)


def test_run_case_library_route_matches_cli(tmp_path):
    mesh_path = generate_case("cube", 2, tmp_path)
    config = CaseConfig.from_dict(
        {"mesh": mesh_path.name, "sigma_a": 0.4, "sigma_s": 0.6,
         "output": str(tmp_path / "lib_out")},
        base_dir=tmp_path,
    )
    result = run_case(config)
    assert result.exit_code == 0
    assert result.state.converged
    assert all(r.passed for r in result.reports)
    assert (result.output_dir / "convergence.csv").is_file()
