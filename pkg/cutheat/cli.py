"""Command-line entry point for single runs and convergence grids."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

ROOT_DIR = Path(__file__).resolve().parents[1]
if str(ROOT_DIR) not in sys.path:
    sys.path.append(str(ROOT_DIR))

from cutheat.utils.analysis import error_norms, solution_l2_norms
from cutheat.utils.config import ExperimentGrid, RunConfig, load_config
from cutheat.utils.errors import ConfigError, CutHeatError
from cutheat.utils.experiment import ERROR_COLUMNS, run_grid
from cutheat.utils.storage import (
    ERRORS_FILE,
    REPORTS_DIR,
    RUN_FILE,
    write_classification_vtk,
    write_json,
    write_table,
)
from cutheat.utils.timestepper import Trajectory, run

logger = logging.getLogger("cutheat")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUN = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cutheat",
        description="Crank-Nicolson CutFEM for the heat equation on moving domains.",
    )
    parser.add_argument("--config", required=True, type=Path, help="flat key=value run or grid configuration")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default: config 'out' or reports/)")
    parser.add_argument("--vtk", action="store_true", help="write per-step legacy VTK fields")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return parser


def _step_table(trajectory: Trajectory) -> List[Dict[str, object]]:
    return [
        {
            "step": rec.step,
            "t": rec.t,
            "energy": rec.energy,
            "energy_norm": rec.energy_norm,
            "residual": rec.residual,
            "active_cells": rec.active_cells,
            "active_dofs": rec.active_dofs,
            "strip_cells": rec.strip_cells,
        }
        for rec in trajectory.steps
    ]


def _run_single(config: RunConfig, out_dir: Path) -> None:
    vtk_dir = out_dir / "vtk" if config.vtk else None
    trajectory = run(config, vtk_dir=vtk_dir)
    report = error_norms(trajectory, config.build_problem())
    if vtk_dir is not None:
        write_classification_vtk(vtk_dir / "classes_0001.vtk", trajectory.active_meshes[0])

    row = {column: None for column in ERROR_COLUMNS}
    row.update(
        h=1.0 / config.n,
        n=config.n,
        dt=config.dt,
        steps=config.n_steps,
        max_residual=float(np.max(trajectory.residuals)),
        energy_sum=trajectory.energy_sum,
        max_solution_L2=float(np.max(solution_l2_norms(trajectory))),
        cfl_ok=trajectory.cfl_ok,
        runtime=trajectory.runtime,
        status="ok",
        error="",
        **report.norms(),
    )
    write_table(out_dir / ERRORS_FILE, [row], columns=ERROR_COLUMNS)
    write_json(
        out_dir / RUN_FILE,
        {"config": config.model_dump(), "errors": report.as_dict(), "steps": _step_table(trajectory)},
    )
    logger.info(
        "L2(T)=%.3e L2(L2)=%.3e L2(H1_av)=%.3e; reports in %s",
        report.end_time_L2, report.L2L2, report.L2H1av, out_dir,
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        logger.error("invalid config %s: %s", args.config, exc)
        return EXIT_CONFIG
    except OSError as exc:
        logger.error("cannot read config %s: %s", args.config, exc)
        return EXIT_CONFIG

    updates: Dict[str, object] = {}
    if args.out is not None:
        updates["out"] = str(args.out)
    if args.vtk:
        updates["vtk"] = True
    config = config.model_copy(update=updates)
    out_dir = Path(config.out) if config.out else REPORTS_DIR

    try:
        if isinstance(config, ExperimentGrid):
            result = run_grid(config, out_dir)
            print(result.summary)
            if (result.errors["status"] != "ok").all():
                return EXIT_RUN
        else:
            _run_single(config, out_dir)
    except CutHeatError as exc:
        step = f" at step {exc.step}" if exc.step is not None else ""
        logger.error("run failed%s: %s", step, exc)
        return EXIT_RUN
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
