import csv
import io
import math

import numpy as np
import pytest

from fracdarcy.errors import face_jumps
from fracdarcy.study import (CSV_COLUMNS, ConfigError, StudyConfig, export_fields,
                             read_vtk_cell_data, run_study, solve_level)


@pytest.mark.parametrize("kwargs, match", [
    ({"xi": 0.5}, "xi"), ({"xi": 1.01}, "xi"), ({"levels": []}, "empty"),
    ({"levels": [8, 8]}, "increasing"), ({"levels": [16, 8]}, "increasing"),
    ({"levels": [3, 6]}, "even"), ({"levels": [8.5]}, "integers"), ({"levels": 8}, "integers"),
    ({"scheme": "tpfa"}, "scheme"), ({"mesh": "prism"}, "mesh"), ({"case": "nope"}, "case"),
    ({"tol": 0}, "tol"), ({"ilut_drop": -1}, "ilut_drop"), ({"t_scale": 0}, "t_scale"),
    ({"sigma_mode": "x"}, "sigma_mode"), ({"jump_sign": "x"}, "jump_sign"),
    ({"error_mode": "x"}, "error_mode"), ({"case": 3}, "case")])
def test_config_validation(kwargs, match):
    with pytest.raises(ConfigError, match=match):
        StudyConfig(**kwargs)


def test_config_from_mapping_and_overrides(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        StudyConfig.from_mapping({"schem": "hfv"})
    path = tmp_path / "c.json"
    path.write_text('{"scheme": "hfv", "levels": [4, 8]}')
    cfg = StudyConfig.from_json(path)
    assert cfg.scheme == "hfv" and cfg.levels == (4, 8)
    cfg = cfg.with_overrides(["xi=0.9", "mesh=tetrahedral", "levels=[2, 4]"])
    assert (cfg.xi, cfg.mesh, cfg.levels) == (0.9, "tetrahedral", (2, 4))
    with pytest.raises(ConfigError, match="key=value"):
        cfg.with_overrides(["xi"])
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="object"):
        StudyConfig.from_json(path)
    path.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        StudyConfig.from_json(path)


def test_inline_case_parameters():
    cfg = StudyConfig(case={"base": "isotropic", "T_f": [2.0, 2.0, 2.0, 2.0]})
    assert cfg.case_label == "isotropic"
    assert np.all(cfg.build_case().data.T_f == 2.0)


@pytest.fixture(scope="module")
def small_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study") / "vag.csv"
    cfg = StudyConfig(levels=(2, 4, 8), timing=False, output=str(out))
    return cfg, run_study(cfg), out


def test_csv_layout(small_study):
    cfg, result, out = small_study
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [int(r["n"]) for r in rows] == [2, 4, 8]
    assert [int(r["key"]) for r in rows] == [1, 2, 3]
    assert rows[0]["alpha_sol"] == ""
    assert all(r["alpha_sol"] for r in rows[1:])
    assert all(r["converged"] == "1" for r in rows)
    assert all(r["cpu_seconds"] == "" for r in rows)
    assert int(rows[-1]["n_cells"]) == 512 and int(rows[-1]["n_dofs"]) == 1949
    assert int(rows[-1]["n_dofs_eliminated"]) == 1437


def test_orders_recomputed_from_csv(small_study):
    _, _, out = small_study
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    for kind in ("sol", "grad", "jump"):
        for a, b in zip(rows, rows[1:]):
            ratio = float(a[f"err_{kind}"]) / float(b[f"err_{kind}"])
            h_ratio = (int(b["n_cells"]) / int(a["n_cells"])) ** (1 / 3)
            alpha = math.log(ratio) / math.log(h_ratio)
            assert abs(alpha - float(b[f"alpha_{kind}"])) <= 1e-12


def test_csv_is_reproducible(small_study):
    cfg, result, out = small_study
    again = run_study(cfg)
    assert again.to_csv() == result.to_csv() == out.read_text()


def test_non_convergence_is_flagged(tmp_path):
    cfg = StudyConfig(levels=(2, 4), tol=1e-300, timing=False)
    result = run_study(cfg)
    assert not result.converged
    assert len(result.levels) == 2
    rows = list(csv.DictReader(io.StringIO(result.to_csv())))
    assert [r["converged"] for r in rows] == ["0", "0"]


def test_anisotropic_study_records_warning():
    logged = []
    result = run_study(StudyConfig(case="anisotropic", levels=(2,), timing=False),
                       log=logged.append)
    assert result.warnings and "compatibility ratio" in result.warnings[0]
    assert any(msg.startswith("warning:") for msg in logged)


def test_vtk_round_trip(tmp_path):
    cfg = StudyConfig(scheme="hfv", levels=(4,))
    lv = solve_level(cfg, 4)
    matrix, fracture = export_fields(lv.scheme, lv.solution, tmp_path / "out" / "hfv")
    assert matrix.exists() and fracture.exists()
    cells = read_vtk_cell_data(matrix)
    assert np.allclose(cells["pressure"], lv.solution[:64], rtol=1e-15)
    frac = read_vtk_cell_data(fracture)
    jumps = face_jumps(lv.scheme, lv.solution)
    assert np.allclose(frac["jump_side0"], jumps[:, 0], rtol=1e-15)
    assert np.allclose(frac["jump_magnitude"], np.abs(jumps).max(axis=1), rtol=1e-15)
    assert set(frac) == {"fracture_pressure", "jump_side0", "jump_side1", "jump_magnitude"}


@pytest.mark.parametrize("scheme, mesh", [("vag-cv", "cartesian"), ("vag-fe", "tetrahedral")])
def test_vtk_constant_field(tmp_path, scheme, mesh):
    lv = solve_level(StudyConfig(scheme=scheme, mesh=mesh, levels=(2,)), 2)
    u = np.full(lv.scheme.layout.n_dofs, 3.25)
    matrix, fracture = export_fields(lv.scheme, u, tmp_path / "const")
    assert np.all(read_vtk_cell_data(matrix)["pressure"] == 3.25)
    frac = read_vtk_cell_data(fracture)
    assert np.all(frac["fracture_pressure"] == 3.25)
    assert np.all(frac["jump_magnitude"] == 0.0)


def test_vtk_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    lv = solve_level(StudyConfig(levels=(2,)), 2)
    with pytest.raises(OSError):
        export_fields(lv.scheme, lv.solution, blocker / "sub" / "x")


def test_large_transmissibility_closes_the_jump_field():
    base = solve_level(StudyConfig(scheme="hfv", levels=(4,)), 4)
    stiff = solve_level(StudyConfig(scheme="hfv", levels=(4,), t_scale=1e6), 4)
    j0 = np.abs(face_jumps(base.scheme, base.solution)).max()
    j1 = np.abs(face_jumps(stiff.scheme, stiff.solution)).max()
    assert stiff.converged
    assert j1 < 1e-3 * j0
