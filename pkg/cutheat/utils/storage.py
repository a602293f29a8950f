"""Writers for result tables, run metadata, VTK fields and debug dumps."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import meshio
import numpy as np
import orjson
import pandas as pd
import scipy.io

from .fespace import FEFunction
from .geometry import ActiveMesh
from .mesh import BackgroundMesh

logger = logging.getLogger(__name__)

BASE_DIR = Path(__file__).resolve().parents[2]
REPORTS_DIR = BASE_DIR / "reports"

ERRORS_FILE = "errors.csv"
EOC_FILE = "eoc.csv"
SUMMARY_FILE = "summary.txt"
GNUPLOT_FILE = "convergence.gp"
RUN_FILE = "run.json"

FLOAT_FORMAT = "%.5e"
NORM_COLUMNS = ["end_time_L2", "L2L2", "L2H1av"]
NORM_TITLES = {
    "end_time_L2": "End-time error ||e^N||_L2(Omega^N)",
    "L2L2": "Error ||e||_L2(L2)",
    "L2H1av": "Error ||e||_L2(H1_av)",
}

PathLike = Union[str, Path]


def ensure_dir(path: PathLike) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_table(path: PathLike, rows: Union[pd.DataFrame, Sequence[Mapping]], columns: Optional[List[str]] = None) -> Path:
    """CSV with a header row and reals in scientific notation with 6 significant digits."""
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    path = Path(path)
    ensure_dir(path.parent)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug("wrote %d rows to %s", len(df), path)
    return path


def read_table(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, keep_default_na=False, na_values=[""])


def write_json(path: PathLike, payload: Mapping) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))
    return path


def read_json(path: PathLike) -> Dict:
    path = Path(path)
    if not path.exists():
        return {}
    return orjson.loads(path.read_bytes())


def _cell_block(degree: int, cells: np.ndarray) -> List[meshio.CellBlock]:
    return [meshio.CellBlock("triangle6" if degree == 2 else "triangle", cells)]


def write_mesh_vtk(path: PathLike, mesh: BackgroundMesh, cell_data: Optional[Mapping[str, np.ndarray]] = None) -> Path:
    """Legacy ASCII VTK of the background mesh with optional per-cell arrays."""
    path = Path(path)
    ensure_dir(path.parent)
    data = {name: [np.asarray(values)] for name, values in (cell_data or {}).items()}
    out = meshio.Mesh(np.column_stack([mesh.vertices, np.zeros(mesh.n_vertices)]), _cell_block(1, mesh.cells), cell_data=data)
    meshio.write(path, out, file_format="vtk", binary=False)
    return path


def write_classification_vtk(path: PathLike, active: ActiveMesh) -> Path:
    return write_mesh_vtk(path, active.mesh, {"cell_class": active.classes.astype(np.int32)})


def write_function_vtk(path: PathLike, u: FEFunction, active: ActiveMesh) -> Path:
    """u_h restricted to the active cells, as point data on the DOF nodes."""
    space = u.space
    path = Path(path)
    ensure_dir(path.parent)
    points = np.column_stack([space.dof_coordinates, np.zeros(space.n_dofs)])
    cells = space.cell_dofs[active.active_cells]
    out = meshio.Mesh(
        points,
        _cell_block(space.degree, cells),
        point_data={"u_h": u.coefficients, "active": u.active_mask.astype(np.int32)},
        cell_data={"cell_class": [active.classes[active.active_cells].astype(np.int32)]},
    )
    meshio.write(path, out, file_format="vtk", binary=False)
    return path


def dump_system(prefix: PathLike, matrix, rhs: np.ndarray) -> List[Path]:
    """Matrix Market dumps ``<prefix>_A.mtx`` and ``<prefix>_b.mtx``."""
    prefix = Path(prefix)
    ensure_dir(prefix.parent)
    a_path = prefix.parent / f"{prefix.name}_A.mtx"
    b_path = prefix.parent / f"{prefix.name}_b.mtx"
    scipy.io.mmwrite(str(a_path), matrix)
    scipy.io.mmwrite(str(b_path), np.asarray(rhs, dtype=float).reshape(-1, 1))
    return [a_path, b_path]


def gnuplot_script(csv_name: str = ERRORS_FILE, norms: Iterable[str] = NORM_COLUMNS) -> str:
    """Log-log plot of each norm against h, one curve per time step."""
    lines = [
        "# errors.csv columns: h,n,dt,...; plot with `gnuplot convergence.gp`",
        "set datafile separator ','",
        "set datafile columnheaders",
        "set logscale xy",
        "set key left top",
        "set xlabel 'h'",
        "set terminal pngcairo size 900,600",
    ]
    for norm in norms:
        lines += [
            f"set output '{norm}.png'",
            f"set ylabel '{norm}'",
            f"plot for [dt in system(\"tail -n +2 {csv_name} | cut -d, -f3 | sort -u\")] \\",
            f"    '{csv_name}' using (strcol(3) eq dt ? $1 : 1/0):(column('{norm}')) "
            "with linespoints title 'dt='.dt",
        ]
    return "\n".join(lines) + "\n"


def write_gnuplot(path: PathLike, csv_name: str = ERRORS_FILE) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    path.write_text(gnuplot_script(csv_name), encoding="utf-8")
    return path


def write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    path.write_text(text, encoding="utf-8")
    return path


__all__ = [
    "REPORTS_DIR",
    "ERRORS_FILE",
    "EOC_FILE",
    "SUMMARY_FILE",
    "GNUPLOT_FILE",
    "RUN_FILE",
    "NORM_COLUMNS",
    "NORM_TITLES",
    "ensure_dir",
    "write_table",
    "read_table",
    "write_json",
    "read_json",
    "write_mesh_vtk",
    "write_classification_vtk",
    "write_function_vtk",
    "dump_system",
    "gnuplot_script",
    "write_gnuplot",
    "write_text",
]
