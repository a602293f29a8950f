"""Full-size traveling-circle convergence sweeps; run with ``pytest -m slow``."""
import sys
from pathlib import Path

import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))

from cutheat.utils.analysis import fit_diagonal, fit_spatial, fit_temporal
from cutheat.utils.config import ExperimentGrid
from cutheat.utils.experiment import run_grid

pytestmark = pytest.mark.slow

STEPS = [1 / 50 * 2.0**-i for i in range(5)]


def _series(errors, key, norm):
    ok = errors[errors["status"] == "ok"]
    assert len(ok) == len(errors), ok["error"].tolist()
    return list(zip(ok[key], ok[norm]))


def test_p1_temporal_order():
    grid = ExperimentGrid(problem="traveling_circle", tmax=0.1, degree=1, h=[1 / 64], dt=STEPS, jobs=2)
    errors = run_grid(grid).errors
    for norm in ("end_time_L2", "L2L2"):
        fit = fit_temporal(_series(errors, "dt", norm))
        assert 1.7 <= fit.order <= 2.5


def test_p1_spatial_order():
    grid = ExperimentGrid(
        problem="traveling_circle", tmax=0.1, degree=1, h=[1 / 16, 1 / 32, 1 / 64, 1 / 128], dt=[1 / 800], jobs=2
    )
    errors = run_grid(grid).errors
    assert 1.6 <= fit_spatial(_series(errors, "h", "L2L2")).order <= 2.3
    assert 0.7 <= fit_spatial(_series(errors, "h", "L2H1av")).order <= 1.3


def test_p2_diagonal_order():
    grid = ExperimentGrid(
        problem="traveling_circle", tmax=0.1, degree=2, mode="diagonal", h=[1 / 16, 1 / 32, 1 / 64], cbar=[32 / 100]
    )
    errors = run_grid(grid).errors
    assert 1.7 <= fit_diagonal(_series(errors, "h", "L2L2")).order <= 2.3
    assert fit_diagonal(_series(errors, "h", "end_time_L2")).order >= 1.7
