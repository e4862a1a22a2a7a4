import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

import bforc.solver
from bforc.cli import DEFAULT_LEVELS, config_from_args, main
from bforc.femspace import ElementChoice
from bforc.output import CSV_HEADER, emit_plot, read_csv


def run(tmp_path, *args):
    return main(["--out", str(tmp_path), *args])


@pytest.fixture(scope="module")
def th_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("th")
    code = main(["--out", str(out), "--test", "1", "--levels", "4,8,16,32"])
    return code, out


def test_full_th_table(th_run):
    code, out = th_run
    assert code == 0
    text = (out / "convergence_test1_taylor-hood.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    rows = read_csv(out / "convergence_test1_taylor-hood.csv")
    assert [int(r["n"]) for r in rows] == [4, 8, 16, 32]
    assert rows[0]["rate_u"] == ""
    for key in ("rate_u", "rate_p", "rate_T"):
        assert 1.8 <= float(rows[-1][key]) <= 2.2
    assert (out / "convergence_test1_taylor-hood.svg").exists()


def test_rate_metadata_relation(th_run):
    _, out = th_run
    meta = json.loads((out / "convergence_test1_taylor-hood.json").read_text())
    assert meta["element"] == "taylor-hood" and meta["s"] == 3.0
    rows = read_csv(out / "convergence_test1_taylor-hood.csv")
    for pair, row in zip(meta["pairs"], rows[1:]):
        for key, rate_key in (("err_u_h1", "rate_u"), ("err_p_l2", "rate_p"), ("err_T_h1", "rate_T")):
            entry = pair[key]
            assert entry["rate_vs_h"] == pytest.approx(2 * abs(entry["slope_vs_ndof"]), rel=1e-14)
            assert entry["rate_vs_h"] == pytest.approx(float(row[rate_key]), rel=1e-12)
    # the measured Ndof slope approaches the h-equivalent one under refinement
    last = meta["pairs"][-1]["err_u_h1"]
    assert last["measured_slope_vs_ndof"] == pytest.approx(last["slope_vs_ndof"], abs=0.1)


def test_svg_structure(th_run):
    _, out = th_run
    root = ET.parse(out / "convergence_test1_taylor-hood.svg").getroot()
    ns = {"s": "http://www.w3.org/2000/svg"}
    series = root.findall("s:polyline[@class='series']", ns)
    guides = root.findall("s:line[@class='guide']", ns)
    assert len(series) == 3 and len(guides) == 1
    assert all(len(p.get("points").split()) == 4 for p in series)
    assert any("Ndof^-1" == (t.text or "") for t in root.findall("s:text", ns))


def test_emit_plot_needs_two_rows(tmp_path):
    row = {"n": "4", "h": "0.35", "ndof": "172", "err_u_h1": "1e-2", "err_p_l2": "1e-3", "err_T_h1": "1e-3"}
    with pytest.raises(ValueError):
        emit_plot([row], tmp_path / "x.svg")
    with pytest.raises(ValueError):
        emit_plot([row, dict(row, err_p_l2="0")], tmp_path / "x.svg")


def test_vtk_output(tmp_path):
    assert run(tmp_path, "--test", "1", "--levels", "4", "--emit", "vtk") == 0
    files = list(tmp_path.glob("*.vtk"))
    assert [f.name for f in files] == ["solution_test1_taylor-hood_n4.vtk"]
    lines = files[0].read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 2.0"
    assert lines[2:4] == ["ASCII", "DATASET UNSTRUCTURED_GRID"]
    assert "POINTS 25 double" in lines
    assert "CELLS 32 128" in lines and "CELL_TYPES 32" in lines
    assert "POINT_DATA 25" in lines
    i = lines.index("VECTORS u double")
    assert all(len(l.split()) == 3 and float(l.split()[2]) == 0.0 for l in lines[i + 1:i + 26])
    assert "SCALARS p double 1" in lines and "SCALARS T double 1" in lines
    assert not list(tmp_path.glob("*.csv"))


def test_single_level_default_csv_only(tmp_path):
    assert run(tmp_path, "--levels", "4") == 0
    assert sorted(f.suffix for f in tmp_path.iterdir()) == [".csv", ".json"]


def test_deterministic_csv(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("BFORC_THREADS", "1")
    assert run(a, "--test", "4", "--element", "mini", "--levels", "4,8") == 0
    monkeypatch.setenv("BFORC_THREADS", "2")
    assert run(b, "--test", "4", "--element", "mini", "--levels", "4,8") == 0
    name = "convergence_test4_mini.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_custom_exponent(tmp_path):
    assert run(tmp_path, "--test", "custom", "--s", "3.5", "--levels", "4,8", "--emit", "csv") == 0
    meta = json.loads((tmp_path / "convergence_testcustom_taylor-hood.json").read_text())
    assert meta["s"] == 3.5


@pytest.mark.parametrize("args", [
    ["--test", "9"],
    ["--test", "custom"],
    ["--test", "custom", "--s", "5"],
    ["--test", "1", "--s", "3.5"],
    ["--levels", "8,4"],
    ["--levels", "a,b"],
    ["--levels", "4", "--emit", "svg"],
    ["--emit", "png"],
    ["--element", "p3"],
    ["--tol", "0"],
    ["--max-iter", "0"],
])
def test_usage_errors(tmp_path, args, capsys):
    assert run(tmp_path, *args) == 1
    assert "usage:" in capsys.readouterr().err


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BFORC_THREADS", "many")
    assert run(tmp_path, "--levels", "4") == 1


def test_picard_failure_exit_code(tmp_path):
    assert run(tmp_path, "--levels", "4", "--max-iter", "1") == 2


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def broken(M, rhs):
        raise bforc.solver.SingularMatrixError("forced")

    monkeypatch.setattr(bforc.solver, "sparse_lu_solve", broken)
    assert run(tmp_path, "--levels", "4") == 3


def test_defaults():
    cfg = config_from_args([])
    assert cfg.levels == DEFAULT_LEVELS[ElementChoice.TAYLOR_HOOD]
    assert cfg.emit == {"csv", "svg"} and cfg.tol == 1e-6 and cfg.max_iter == 100
    assert config_from_args(["--element", "mini"]).levels == (8, 16, 32, 64)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bforc", "--test", "9"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage:" in proc.stderr
