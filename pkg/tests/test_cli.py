import csv
import io
import json
import subprocess
import sys

import pytest

from fracdarcy.cli import main


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "study.json"
    path.write_text(json.dumps({"scheme": "vag-fe", "levels": [2, 4], "timing": False}))
    return path


def test_study_prints_csv(config, capsys):
    assert main(["study", str(config), "--quiet"]) == 0
    out, err = capsys.readouterr()
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["n"] for r in rows] == ["2", "4"]
    assert err == ""


def test_progress_goes_to_stderr(config, capsys):
    assert main(["study", str(config)]) == 0
    _, err = capsys.readouterr()
    assert "n=4" in err and "err_sol" in err


def test_output_file_and_vtk(config, tmp_path, capsys):
    out = tmp_path / "res" / "table.csv"
    vtk = tmp_path / "vtk"
    code = main(["study", str(config), "--quiet", "--vtk",
                 "--override", f"output={out}", "--override", f"vtk_dir={vtk}"])
    assert code == 0
    assert capsys.readouterr().out == ""
    assert out.read_text().startswith("key,n,scheme")
    assert sorted(p.name for p in vtk.iterdir()) == [
        "vag-fe_n2_fracture.vtk", "vag-fe_n2_matrix.vtk",
        "vag-fe_n4_fracture.vtk", "vag-fe_n4_matrix.vtk"]


@pytest.mark.parametrize("args", [
    ["--override", "xi=0.5"], ["--override", "levels=[]"], ["--override", "bogus=1"],
    ["--override", "xi"], ["--vtk"]])
def test_invalid_configuration_exits_2(config, capsys, args):
    assert main(["study", str(config), "--quiet", *args]) == 2
    assert "fracdarcy: error" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["study", str(tmp_path / "absent.json")]) == 2


def test_non_convergence_exits_1(config, capsys):
    assert main(["study", str(config), "--quiet", "--override", "tol=1e-300"]) == 1


def test_module_entry_point(config):
    proc = subprocess.run([sys.executable, "-m", "fracdarcy.cli", "study", str(config), "--quiet"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0].startswith("key,n,scheme")
