import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import scipy.io

sys.path.append(str(Path(__file__).resolve().parents[1]))

from cutheat.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUN, main
from cutheat.utils.config import ExperimentGrid, RunConfig
from cutheat.utils.experiment import ERROR_COLUMNS, fit_orders, render_summary, run_grid, run_single
from cutheat.utils.fespace import build_space, interpolate
from cutheat.utils.geometry import build_active_mesh
from cutheat.utils.manufactured import example_traveling_circle
from cutheat.utils.mesh import UNIT_SQUARE, build_uniform_mesh
from cutheat.utils.storage import (
    EOC_FILE,
    ERRORS_FILE,
    GNUPLOT_FILE,
    NORM_COLUMNS,
    RUN_FILE,
    SUMMARY_FILE,
    dump_system,
    gnuplot_script,
    read_json,
    read_table,
    write_classification_vtk,
    write_function_vtk,
    write_json,
)


def test_json_roundtrip(tmp_path):
    path = write_json(tmp_path / "nested" / "run.json", {"a": 1, "b": [0.5, 0.25], "c": np.float64(2.0)})
    assert read_json(path) == {"a": 1, "b": [0.5, 0.25], "c": 2.0}
    assert read_json(tmp_path / "missing.json") == {}


def test_vtk_writers(tmp_path):
    mesh = build_uniform_mesh(UNIT_SQUARE, 8)
    active = build_active_mesh(mesh, example_traveling_circle().domain, 0.0, 0.08)
    for degree in (1, 2):
        u = interpolate(build_space(mesh, degree), active, lambda x: x[..., 0])
        path = write_function_vtk(tmp_path / f"u_p{degree}.vtk", u, active)
        text = path.read_text()
        assert text.startswith("# vtk DataFile")
        assert "u_h" in text
    classes = write_classification_vtk(tmp_path / "classes.vtk", active).read_text()
    assert "cell_class" in classes


def test_dump_system(tmp_path):
    import scipy.sparse as sp

    matrix = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 3.0]]))
    a_path, b_path = dump_system(tmp_path / "step_0001", matrix, np.array([1.0, 2.0]))
    assert np.allclose(scipy.io.mmread(str(a_path)).toarray(), matrix.toarray())
    assert np.allclose(np.asarray(scipy.io.mmread(str(b_path))).ravel(), [1.0, 2.0])


def test_gnuplot_script_names_every_norm():
    script = gnuplot_script()
    for norm in NORM_COLUMNS:
        assert f"column('{norm}')" in script
    assert ERRORS_FILE in script


def test_run_single_records_failures():
    config = RunConfig(problem="static_square", tmax=0.04, n=4, dt=0.02, tol=1e-30)
    row = run_single(config)
    assert row["status"] == "SolverDivergence"
    assert "step 1" in row["error"]
    assert np.isnan(row["L2L2"])
    assert set(row) == set(ERROR_COLUMNS)


def test_singular_factorization_fails_only_its_cell(monkeypatch):
    import scipy.sparse.linalg as spla

    def singular(_):
        raise RuntimeError("Factor is exactly singular")

    monkeypatch.setattr(spla, "splu", singular)
    row = run_single(RunConfig(problem="static_square", tmax=0.04, n=4, dt=0.02))
    assert row["status"] == "SolverDivergence"
    assert "step 1" in row["error"]


def test_full_grid_reports(tmp_path):
    grid = ExperimentGrid(problem="static_square", tmax=0.1, h=[1 / 4, 1 / 8], dt=[1 / 20, 1 / 40])
    result = run_grid(grid, tmp_path)
    assert len(result.errors) == 4
    assert (result.errors["status"] == "ok").all()
    for name in (ERRORS_FILE, EOC_FILE, SUMMARY_FILE, GNUPLOT_FILE, RUN_FILE):
        assert (tmp_path / name).exists()

    stored = read_table(tmp_path / ERRORS_FILE)
    assert list(stored.columns) == ERROR_COLUMNS
    for norm in NORM_COLUMNS:
        expected = [float(f"{v:.5e}") for v in result.errors[norm]]
        assert np.allclose(stored[norm].to_numpy(), expected, rtol=1e-12, atol=0.0)
    first_row = (tmp_path / ERRORS_FILE).read_text().splitlines()[1]
    assert "e-" in first_row

    summary = (tmp_path / SUMMARY_FILE).read_text()
    assert "1/4" in summary and "1/40" in summary
    assert "eoc_h" in summary and "eoc_dt" in summary
    assert read_json(tmp_path / RUN_FILE)["cells"] == 4


def test_grid_is_reproducible():
    grid = ExperimentGrid(problem="static_square", tmax=0.1, h=[1 / 4], dt=[1 / 20, 1 / 40])
    first = run_grid(grid).errors
    second = run_grid(grid).errors
    for norm in NORM_COLUMNS:
        assert np.array_equal(first[norm].to_numpy(), second[norm].to_numpy())


def test_diagonal_grid_has_a_diagonal_fit(tmp_path):
    grid = ExperimentGrid(
        problem="traveling_circle", tmax=0.1, degree=1, mode="diagonal", h=[1 / 8, 1 / 16, 1 / 32], cbar=[0.32]
    )
    result = run_grid(grid, tmp_path)
    assert list(result.errors["dt"]) == pytest.approx([0.04, 0.02, 0.01])
    diagonal = result.eoc[result.eoc["protocol"] == "diagonal"]
    assert set(diagonal["norm"]) == set(NORM_COLUMNS)
    assert diagonal["fixed"].to_numpy() == pytest.approx(0.32)
    assert "eoc_dt,h" in result.summary


def test_fit_orders_and_summary_from_a_synthetic_table():
    rows = []
    for h in (1 / 4, 1 / 8, 1 / 16, 1 / 32):
        for dt in (1 / 10, 1 / 20, 1 / 40, 1 / 80):
            value = 0.5 * h**2 + 3.0 * dt**2
            rows.append({**{c: None for c in ERROR_COLUMNS}, "h": h, "dt": dt, "status": "ok",
                         "end_time_L2": value, "L2L2": value, "L2H1av": 2 * h + dt**2})
    df = pd.DataFrame(rows, columns=ERROR_COLUMNS)
    for norm in NORM_COLUMNS:
        df[norm] = df[norm].astype(float)
    eoc = fit_orders(df, [])
    temporal = eoc[(eoc["norm"] == "L2L2") & (eoc["protocol"] == "temporal")]
    spatial = eoc[(eoc["norm"] == "L2H1av") & (eoc["protocol"] == "spatial")]
    assert len(temporal) == 4 and len(spatial) == 4
    assert temporal["order"].to_numpy() == pytest.approx(2.0, abs=0.01)
    assert spatial["order"].to_numpy() == pytest.approx(1.0, abs=0.01)
    summary = render_summary(df, eoc, [])
    assert "2.00" in summary and "1.00" in summary


def _write_config(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return path


def test_cli_single_run(tmp_path):
    path = _write_config(tmp_path, "problem = static_square\nn = 4\ndt = 1/20\ntmax = 0.1\n")
    out = tmp_path / "out"
    assert main(["--config", str(path), "--out", str(out), "--vtk", "--quiet"]) == EXIT_OK
    errors = read_table(out / ERRORS_FILE)
    assert len(errors) == 1 and errors["status"][0] == "ok"
    run = read_json(out / RUN_FILE)
    assert len(run["steps"]) == 2
    assert (out / "vtk" / "u_0002.vtk").exists()


def test_cli_grid(tmp_path):
    path = _write_config(tmp_path, "problem = static_square\ntmax = 0.1\nh = 1/4\ndt = 1/10, 1/20\n")
    assert main(["--config", str(path), "--out", str(tmp_path / "grid"), "--quiet"]) == EXIT_OK
    assert (tmp_path / "grid" / SUMMARY_FILE).exists()


def test_cli_exit_codes(tmp_path):
    bad = _write_config(tmp_path, "problem = static_square\nn = 4\ndt = 0\ntmax = 0.1\n")
    assert main(["--config", str(bad), "--quiet"]) == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "missing.cfg"), "--quiet"]) == EXIT_CONFIG
    failing = _write_config(tmp_path, "problem = static_square\nn = 4\ndt = 1/20\ntmax = 0.1\ntol = 1e-30\n")
    assert main(["--config", str(failing), "--out", str(tmp_path / "fail"), "--quiet"]) == EXIT_RUN
