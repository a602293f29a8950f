"""Run the traveling-circle convergence studies and write their reports."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Dict, List, Optional

from cutheat.utils.config import ExperimentGrid
from cutheat.utils.experiment import run_grid
from cutheat.utils.storage import REPORTS_DIR, write_json

logger = logging.getLogger("cutheat.convergence")

DIAGONAL_RATIOS = [32 / 50, 32 / 100]


def time_steps(levels: int) -> List[float]:
    return [1.0 / 50 * 2.0**-i for i in range(levels)]


def mesh_sizes(levels: int, coarsest: int = 32) -> List[float]:
    return [1.0 / coarsest * 2.0**-j for j in range(levels)]


def study_grids(dt_levels: int, h_levels: int, jobs: int) -> Dict[str, ExperimentGrid]:
    """P1 full table, P2 full table and the P2 diagonal sweep."""
    shared = dict(problem="traveling_circle", tmax=0.1, cbar=DIAGONAL_RATIOS, jobs=jobs)
    return {
        "p1": ExperimentGrid(**shared, degree=1, h=mesh_sizes(h_levels), dt=time_steps(dt_levels)),
        "p2": ExperimentGrid(**shared, degree=2, h=mesh_sizes(h_levels), dt=time_steps(dt_levels)),
        "p2_diagonal": ExperimentGrid(
            problem="traveling_circle",
            tmax=0.1,
            degree=2,
            mode="diagonal",
            h=mesh_sizes(h_levels, coarsest=16),
            cbar=[32 / 100],
            jobs=jobs,
        ),
    }


def main(argv: Optional[List[str]] = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dt-levels", type=int, default=5, help="time steps 1/50 * 2^-i, i < dt-levels")
    parser.add_argument("--h-levels", type=int, default=3, help="mesh sizes 1/32 * 2^-j, j < h-levels")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", type=Path, default=REPORTS_DIR)
    parser.add_argument("--study", choices=["p1", "p2", "p2_diagonal"], action="append")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    grids = study_grids(args.dt_levels, args.h_levels, args.jobs)
    selected = args.study or list(grids)
    index = {}
    for name in selected:
        result = run_grid(grids[name], args.out / name)
        print(result.summary)
        index[name] = {
            "cells": int(len(result.errors)),
            "failed": int((result.errors["status"] != "ok").sum()),
            "fits": int(len(result.eoc)),
        }
    write_json(args.out / "studies.json", index)


if __name__ == "__main__":
    main()
