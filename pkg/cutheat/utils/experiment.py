"""Convergence grids: independent runs, error tables, order fits and the summary layout."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .analysis import (
    MIN_DIAGONAL_POINTS,
    MIN_OFFSET_POINTS,
    EocFit,
    error_norms,
    fit_diagonal,
    fit_spatial,
    fit_temporal,
    solution_l2_norms,
)
from .config import ExperimentGrid, RunConfig, mesh_size_label
from .errors import CutHeatError
from .storage import (
    EOC_FILE,
    ERRORS_FILE,
    GNUPLOT_FILE,
    NORM_COLUMNS,
    NORM_TITLES,
    RUN_FILE,
    SUMMARY_FILE,
    ensure_dir,
    write_gnuplot,
    write_json,
    write_table,
    write_text,
)
from .timestepper import run

logger = logging.getLogger(__name__)

ERROR_COLUMNS = [
    "h",
    "n",
    "dt",
    "steps",
    *NORM_COLUMNS,
    "max_residual",
    "energy_sum",
    "max_solution_L2",
    "cfl_ok",
    "runtime",
    "status",
    "error",
]
EOC_COLUMNS = [
    "norm",
    "protocol",
    "fixed",
    "order",
    "constant",
    "offset",
    "standard_error",
    "relative_error",
    "n_points",
    "usable",
]


def run_single(config: RunConfig, *, vtk_dir: Optional[Path] = None) -> Dict[str, object]:
    """One errors.csv row; failures are recorded in ``status``/``error`` instead of raised."""
    row: Dict[str, object] = {
        "h": 1.0 / config.n,
        "n": config.n,
        "dt": config.dt,
        "steps": config.n_steps,
        **{norm: math.nan for norm in NORM_COLUMNS},
        "max_residual": math.nan,
        "energy_sum": math.nan,
        "max_solution_L2": math.nan,
        "cfl_ok": None,
        "runtime": math.nan,
        "status": "ok",
        "error": "",
    }
    started = time.perf_counter()
    try:
        trajectory = run(config, vtk_dir=vtk_dir)
        report = error_norms(trajectory, config.build_problem())
    except CutHeatError as exc:
        step = f" at step {exc.step}" if exc.step is not None else ""
        logger.warning("run n=%d dt=%.4g failed%s: %s", config.n, config.dt, step, exc)
        row.update(status=type(exc).__name__, error=f"{exc}{step}", runtime=time.perf_counter() - started)
        return row
    row.update(report.norms())
    row.update(
        max_residual=float(np.max(trajectory.residuals)),
        energy_sum=trajectory.energy_sum,
        max_solution_L2=float(np.max(solution_l2_norms(trajectory))),
        cfl_ok=trajectory.cfl_ok,
        runtime=time.perf_counter() - started,
    )
    logger.info(
        "run n=%d dt=%.4g: L2(T)=%.3e L2L2=%.3e L2H1av=%.3e",
        config.n, config.dt, row["end_time_L2"], row["L2L2"], row["L2H1av"],
    )
    return row


def _cell_vtk_dir(grid: ExperimentGrid, out_dir: Path, config: RunConfig) -> Optional[Path]:
    if not grid.vtk:
        return None
    return out_dir / "vtk" / f"n{config.n}_dt{config.dt:.6g}"


def _series(df: pd.DataFrame, norm: str, key: str, value: float, x: str) -> List[tuple]:
    sel = df[np.isclose(df[key], value, rtol=1e-9, atol=0.0) & (df["status"] == "ok")]
    sel = sel[np.isfinite(sel[norm])]
    return [(float(a), float(b)) for a, b in zip(sel[x], sel[norm])]


def _diagonal_series(df: pd.DataFrame, norm: str, cbar: float) -> List[tuple]:
    ok = df[(df["status"] == "ok") & np.isclose(df["dt"], cbar * df["h"], rtol=1e-9, atol=0.0)]
    ok = ok[np.isfinite(ok[norm])]
    return [(float(a), float(b)) for a, b in zip(ok["h"], ok[norm])]


def _fit_row(norm: str, fixed: float, fit: EocFit) -> Dict[str, object]:
    data = fit.as_dict()
    return {
        "norm": norm,
        "protocol": fit.protocol,
        "fixed": fixed,
        **{k: data[k] for k in ("order", "constant", "offset", "standard_error", "relative_error", "n_points", "usable")},
    }


def grid_ratios(grid: ExperimentGrid) -> List[float]:
    if grid.mode == "diagonal":
        return sorted({round(dt / h, 12) for h, dt in grid.pairs()}, reverse=True)
    return list(grid.cbar)


def fit_orders(df: pd.DataFrame, ratios: Sequence[float]) -> pd.DataFrame:
    """All temporal, spatial and diagonal fits the table supports, one row each."""
    rows: List[Dict[str, object]] = []
    for norm in NORM_COLUMNS:
        for h in sorted(df["h"].unique(), reverse=True):
            series = _series(df, norm, "h", h, "dt")
            if len(series) >= MIN_OFFSET_POINTS:
                rows.append(_fit_row(norm, h, fit_temporal(series)))
        for dt in sorted(df["dt"].unique(), reverse=True):
            series = _series(df, norm, "dt", dt, "h")
            if len(series) >= MIN_OFFSET_POINTS:
                rows.append(_fit_row(norm, dt, fit_spatial(series)))
        for cbar in ratios:
            series = _diagonal_series(df, norm, cbar)
            if len(series) >= MIN_DIAGONAL_POINTS and all(v > 0 for _, v in series):
                rows.append(_fit_row(norm, cbar, fit_diagonal(series)))
    return pd.DataFrame(rows, columns=EOC_COLUMNS)


def _lookup(eoc: pd.DataFrame, norm: str, protocol: str, fixed: float) -> str:
    if eoc.empty:
        return ""
    sel = eoc[(eoc["norm"] == norm) & (eoc["protocol"] == protocol) & np.isclose(eoc["fixed"], fixed, rtol=1e-9)]
    if sel.empty:
        return ""
    row = sel.iloc[0]
    return f"{row['order']:.2f}" if bool(row["usable"]) else "-"


def render_summary(df: pd.DataFrame, eoc: pd.DataFrame, ratios: Sequence[float]) -> str:
    """Text tables: rows h, columns dt, an eoc_dt column, an eoc_h row and one diagonal row per ratio."""
    hs = sorted(df["h"].unique(), reverse=True)
    dts = sorted(df["dt"].unique(), reverse=True)
    width = 10
    header = "h \\ dt".ljust(8) + "".join(mesh_size_label(dt).rjust(width) for dt in dts) + "eoc_dt".rjust(width)
    blocks: List[str] = []
    for norm in NORM_COLUMNS:
        lines = [NORM_TITLES[norm], header, "-" * len(header)]
        for h in hs:
            cells = []
            for dt in dts:
                sel = df[np.isclose(df["h"], h, rtol=1e-9) & np.isclose(df["dt"], dt, rtol=1e-9)]
                if sel.empty:
                    cells.append("")
                elif sel.iloc[0]["status"] != "ok":
                    cells.append("failed")
                else:
                    cells.append(f"{sel.iloc[0][norm]:.2e}")
            lines.append(
                mesh_size_label(h).ljust(8)
                + "".join(c.rjust(width) for c in cells)
                + _lookup(eoc, norm, "temporal", h).rjust(width)
            )
        lines.append("-" * len(header))
        lines.append("eoc_h".ljust(8) + "".join(_lookup(eoc, norm, "spatial", dt).rjust(width) for dt in dts))
        for cbar in ratios:
            diag_dts = [h * cbar for h in hs if any(math.isclose(h * cbar, dt, rel_tol=1e-9) for dt in dts)]
            value = _lookup(eoc, norm, "diagonal", cbar)
            cells = [""] * len(dts)
            if diag_dts and value:
                last = min(diag_dts)
                idx = next(i for i, dt in enumerate(dts) if math.isclose(dt, last, rel_tol=1e-9))
                cells[idx] = value
            lines.append("eoc_dt,h".ljust(8) + "".join(c.rjust(width) for c in cells) + f"  cbar={cbar:.4g}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


@dataclass(frozen=True)
class GridResult:
    errors: pd.DataFrame
    eoc: pd.DataFrame
    summary: str
    out_dir: Optional[Path]


def run_grid(grid: ExperimentGrid, out_dir: Optional[Path] = None) -> GridResult:
    """Run every grid cell (in parallel with ``jobs`` > 1) and write the reports to ``out_dir``."""
    if out_dir is None and grid.out is not None:
        out_dir = Path(grid.out)
    configs = [grid.run_config(h, dt) for h, dt in grid.pairs()]
    logger.info("running %d grid cells (%s mode, P%d) with %d job(s)", len(configs), grid.mode, grid.degree, grid.jobs)
    if out_dir is not None:
        ensure_dir(out_dir)
    rows = Parallel(n_jobs=grid.jobs)(
        delayed(run_single)(cfg, vtk_dir=_cell_vtk_dir(grid, out_dir, cfg) if out_dir is not None else None)
        for cfg in configs
    )
    errors = pd.DataFrame(rows, columns=ERROR_COLUMNS)
    failed = int((errors["status"] != "ok").sum())
    if failed:
        logger.warning("%d of %d grid cells failed", failed, len(rows))
    ratios = grid_ratios(grid)
    eoc = fit_orders(errors, ratios)
    summary = render_summary(errors, eoc, ratios)

    if out_dir is not None:
        write_table(out_dir / ERRORS_FILE, errors)
        write_table(out_dir / EOC_FILE, eoc)
        write_text(out_dir / SUMMARY_FILE, summary)
        write_gnuplot(out_dir / GNUPLOT_FILE, ERRORS_FILE)
        write_json(
            out_dir / RUN_FILE,
            {
                "grid": grid.model_dump(),
                "cells": len(rows),
                "failed": failed,
                "fits": eoc.to_dict(orient="records"),
            },
        )
        logger.info("wrote grid reports to %s", out_dir)
    return GridResult(errors=errors, eoc=eoc, summary=summary, out_dir=out_dir)


__all__ = [
    "ERROR_COLUMNS",
    "EOC_COLUMNS",
    "GridResult",
    "run_single",
    "run_grid",
    "fit_orders",
    "grid_ratios",
    "render_summary",
]
