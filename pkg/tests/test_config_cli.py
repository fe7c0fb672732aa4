"""Config parsing/building, file writers, and the command line entry point."""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from fvgw.cli import main
from fvgw.config import (
    ConfigError,
    build_simulation,
    load_config,
    parse_config,
    serialize_config,
)
from fvgw.mesh import build_rect_mesh, save_mesh
from fvgw.output import (
    write_fields_csv,
    write_monitors_csv,
    write_run_metadata,
    write_vtk,
)
from fvgw.scheme import State
from fvgw.solver import MonitorRecord
from fvgw.verification import DEFAULT_SEED, run_verification

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
[mesh]
nx = 4
ny = 4

[fluid]
water_density = 2.0
total_mobility_floor = 0.5
density = {law = "logistic", rho_min = 1.0, rho_max = 2.0, rate = 0.5}
mobility_gas = {law = "power", exponent = 2}
mobility_water = {law = "power", exponent = 2, decreasing = true}
capillary = {law = "polynomial", coeffs = [0.0, 3.0, -2.0]}

[initial]
pressure = 1.0
saturation = 0.5

[time]
dt = 0.05
t_end = 0.1
"""


# -- parsing and validation ---------------------------------------------------


def test_parse_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg["mesh"]["nx"] == 4
    assert cfg["fluid"]["density"]["law"] == "logistic"
    assert cfg["time"]["dt"] == 0.05


def test_unknown_key_is_named():
    bad = MINIMAL + "\n[solver]\nnewton_tolerance = 1e-8\n"
    with pytest.raises(ConfigError, match="newton_tolerance"):
        parse_config(bad)
    with pytest.raises(ConfigError, match="grit"):
        parse_config(MINIMAL + "\n[grit]\nx = 1\n")


def test_missing_sections_are_named():
    without_time = MINIMAL.replace("[time]", "[solver]").replace(
        "dt = 0.05", "newton_tol = 1e-10").replace("t_end = 0.1", "")
    with pytest.raises(ConfigError, match=r"\[time\]"):
        parse_config(without_time)
    without_sat = MINIMAL.replace("saturation = 0.5", "")
    with pytest.raises(ConfigError, match="saturation"):
        parse_config(without_sat)


def test_toml_syntax_error_wrapped():
    with pytest.raises(ConfigError, match="TOML"):
        parse_config("[mesh\nnx = 4")


def test_serialize_round_trip():
    for name in ("injection.toml", "smooth_testmode.toml", "uniform.toml"):
        cfg = load_config(CONFIG_DIR / name)
        text = serialize_config(cfg)
        assert parse_config(text) == cfg
        # canonical form is a fixed point
        assert serialize_config(parse_config(text)) == text


def test_field_specs_evaluate():
    cfg = parse_config(MINIMAL)
    cfg["initial"]["pressure"] = {
        "kind": "linear", "base": 1.0, "gradient": [-0.5, 0.0]}
    cfg["initial"]["saturation"] = {
        "kind": "cosine", "base": 0.5, "amplitude": 0.25, "axis": 1}
    setup = build_simulation(cfg)
    x = setup.mesh.cell_centers
    assert np.allclose(setup.initial.p, 1.0 - 0.5 * x[:, 0])
    assert np.allclose(setup.initial.s, 0.5 + 0.25 * np.cos(np.pi * x[:, 1]))


def test_box_field_spec():
    cfg = parse_config(MINIMAL)
    cfg["fluid"]["permeability"] = {
        "kind": "box", "value": 0.05,
        "bounds": [[0.25, 0.75], [0.25, 0.75]], "outside": 1.0}
    setup = build_simulation(cfg)
    k = setup.model.permeability_field(setup.mesh.n_cells)
    x = setup.mesh.cell_centers
    inside = np.all((x >= 0.25) & (x <= 0.75), axis=1)
    assert np.all(k[inside] == 0.05)
    assert np.all(k[~inside] == 1.0)


def test_negative_source_rejected():
    cfg = parse_config(MINIMAL)
    cfg["sources"] = {"production": -0.1}
    with pytest.raises(ConfigError, match="nonnegative"):
        build_simulation(cfg)


def test_unknown_law_rejected():
    cfg = parse_config(MINIMAL)
    cfg["fluid"]["density"] = {"law": "tabulated", "value": 1.0}
    with pytest.raises(ConfigError, match="tabulated"):
        build_simulation(cfg)


def test_boundary_section_required_for_tagged_mesh():
    cfg = parse_config(MINIMAL)
    cfg["mesh"]["tags"] = {"left": "water_injection"}
    with pytest.raises(ConfigError, match=r"\[boundary\]"):
        build_simulation(cfg)


def test_mesh_file_excludes_inline_keys(tmp_path):
    save_mesh(build_rect_mesh((3, 3)), tmp_path / "m.mesh")
    cfg = parse_config(MINIMAL)
    cfg["mesh"] = {"file": str(tmp_path / "m.mesh"), "nx": 3}
    with pytest.raises(ConfigError, match="file excludes"):
        build_simulation(cfg)
    cfg["mesh"] = {"file": str(tmp_path / "m.mesh")}
    setup = build_simulation(cfg)
    assert setup.mesh.n_cells == 9


def test_shipped_configs_build():
    for path in sorted(CONFIG_DIR.glob("*.toml")):
        setup = build_simulation(load_config(path))
        res = setup.scheme.assemble_residual(
            setup.initial, setup.initial, setup.solver.dt)
        assert np.all(np.isfinite(res.vector())), path.name


# -- writers ------------------------------------------------------------------


def sample_state(mesh, seed=3):
    rng = np.random.default_rng(seed)
    return State(p=rng.uniform(0.0, 1.0, mesh.n_cells),
                 s=rng.uniform(0.0, 1.0, mesh.n_cells))


def test_fields_csv_layout(tmp_path):
    mesh = build_rect_mesh((3, 2))
    state = sample_state(mesh)
    path = tmp_path / "fields.csv"
    write_fields_csv(path, mesh, state)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    lines = raw.decode().splitlines()
    assert lines[0] == "cell_id,x,y,p,s"
    assert len(lines) == 1 + mesh.n_cells
    first = lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[3]) == state.p[0]

    mesh3 = build_rect_mesh((2, 2, 2))
    write_fields_csv(tmp_path / "f3.csv", mesh3, sample_state(mesh3))
    assert (tmp_path / "f3.csv").read_text().splitlines()[0] == \
        "cell_id,x,y,z,p,s"


def test_monitors_csv_header(tmp_path):
    rec = MonitorRecord(step=1, time=0.1, dt=0.1, newton_iters=3,
                        min_s=0.0, max_s=1.0, gas_energy=0.5,
                        water_energy=0.25, water_mass_defect=1e-12)
    path = tmp_path / "monitors.csv"
    write_monitors_csv(path, [rec])
    lines = path.read_text().splitlines()
    assert lines[0] == \
        "step,time,dt,newton_iters,min_s,max_s,gas_energy,water_energy,water_mass_defect"
    assert lines[1].split(",")[0] == "1"
    assert float(lines[1].split(",")[8]) == 1e-12


def test_run_metadata_contents(tmp_path):
    cfg = parse_config(MINIMAL)
    setup = build_simulation(cfg)
    path = tmp_path / "run_meta.json"
    write_run_metadata(path, setup.model, config_text=serialize_config(cfg),
                       extra={"n_steps": 2})
    meta = json.loads(path.read_text())
    assert meta["m0"] == 0.5
    assert meta["rho_min"] == 1.0
    assert meta["c1"] == 0.5 * 1.0
    assert meta["n_steps"] == 2
    assert parse_config(meta["config"]) == cfg


def test_vtk_writer(tmp_path):
    mesh = build_rect_mesh((3, 2))
    path = tmp_path / "out.vtk"
    write_vtk(path, mesh, sample_state(mesh))
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version")
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert "CELL_DATA 6" in text
    assert "SCALARS pressure double" in text
    assert "SCALARS saturation double" in text


# -- command line -------------------------------------------------------------


def test_simulate_uniform(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["simulate", str(CONFIG_DIR / "uniform.toml"),
                 "--output", str(out)])
    assert code == 0
    assert "steps: 5" in capsys.readouterr().out
    rows = (out / "monitors.csv").read_text().splitlines()[1:]
    assert len(rows) == 5
    for row in rows:
        cells = row.split(",")
        assert float(cells[4]) == 0.5 and float(cells[5]) == 0.5
        assert float(cells[8]) == 0.0
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["final_time"] == 0.25
    assert meta["snapshots"] == ["fields_0000.csv", "fields_0001.csv"]


def test_simulate_is_deterministic(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert main(["simulate", str(CONFIG_DIR / "smooth_testmode.toml"),
                     "--output", str(out)]) == 0
    for name in ("monitors.csv", "fields_0000.csv", "fields_0004.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_simulate_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(MINIMAL + "\n[fluid2]\nx = 1\n")
    assert main(["simulate", str(bad)]) == 2
    assert "fluid2" in capsys.readouterr().err
    assert main(["simulate", str(tmp_path / "missing.toml")]) == 2


def test_simulate_vtk_output(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(MINIMAL + '\n[output]\nformats = ["csv", "vtk"]\n')
    out = tmp_path / "run"
    assert main(["simulate", str(cfg_path), "--output", str(out)]) == 0
    assert (out / "fields_0000.vtk").exists()
    assert (out / "fields_0000.csv").exists()


def test_verify_single_suite(capsys):
    code = main(["verify", "--quick", "--suite", "mesh"])
    out = capsys.readouterr().out
    assert code == 0
    checks = [line for line in out.splitlines() if line.startswith("PASS")]
    assert checks and all(" mesh." in line for line in checks)


def test_verify_unknown_suite(capsys):
    assert main(["verify", "--suite", "nosuch"]) == 2
    assert "nosuch" in capsys.readouterr().err


def test_verify_injected_defect(capsys):
    code = main(["verify", "--quick", "--suite", "fluxes",
                 "--inject-defect", "g2-sign"])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL  fluxes.conservativity" in out


def test_verify_seed_env(monkeypatch):
    monkeypatch.setenv("FVGW_SEED", "12345")
    report = run_verification(level="quick", suites=["physics"])
    assert report.seed == 12345
    monkeypatch.delenv("FVGW_SEED")
    assert run_verification(level="quick", suites=["physics"]).seed == \
        DEFAULT_SEED


def test_convergence_command(tmp_path, capsys):
    cfg_path = tmp_path / "smooth.toml"
    base = load_config(CONFIG_DIR / "smooth_testmode.toml")
    base["mesh"]["nx"] = base["mesh"]["ny"] = 8
    base["time"] = {"dt": 0.02, "t_end": 0.04}
    cfg_path.write_text(serialize_config(base))
    out = tmp_path / "table.csv"
    code = main(["convergence", str(cfg_path), "--levels", "2",
                 "--output", str(out)])
    assert code == 0
    assert "err_p" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert lines[0] == "level,h,dt,err_p,err_s,order_p,order_s"
    assert len(lines) == 3
    errs = np.array([[float(v) for v in line.split(",")[3:5]]
                     for line in lines[1:]])
    assert np.all(errs[1] < errs[0])
    assert main(["convergence", str(cfg_path), "--levels", "1"]) == 2


def test_check_mesh_command(tmp_path, capsys):
    path = tmp_path / "good.mesh"
    save_mesh(build_rect_mesh((4, 3)), path)
    assert main(["check-mesh", str(path)]) == 0
    assert "admissible: yes" in capsys.readouterr().out

    mesh = build_rect_mesh((4, 3))
    mesh.cell_centers[0, 1] += 0.21  # break center alignment across faces
    skewed = tmp_path / "skewed.mesh"
    save_mesh(mesh, skewed)
    assert main(["check-mesh", str(skewed)]) == 1
    assert "admissible: NO" in capsys.readouterr().out

    garbage = tmp_path / "garbage.mesh"
    garbage.write_text("not a mesh\n")
    assert main(["check-mesh", str(garbage)]) == 2
    assert main(["check-mesh", str(tmp_path / "absent.mesh")]) == 2
