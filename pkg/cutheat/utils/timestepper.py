"""Crank-Nicolson time loop on the moving domain."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .config import RunConfig
from .errors import CutHeatError, SolverDivergence
from .fespace import FEFunction, FESpace, build_space, interpolate, transfer
from .forms import (
    FormParams,
    StepOperators,
    assemble_operators,
    assemble_system,
    default_quad_degree,
    energy,
    energy_norm,
    ritz_system,
)
from .geometry import ActiveMesh, build_active_mesh
from .linalg import relative_residual, solve
from .manufactured import ManufacturedProblem
from .mesh import BackgroundMesh, build_uniform_mesh
from .storage import REPORTS_DIR, dump_system, write_function_vtk

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StepRecord:
    step: int
    t: float
    solution: FEFunction
    energy: float
    energy_norm: float
    residual: float
    active_cells: int
    active_dofs: int
    strip_cells: int


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solutions u_h^1..u_h^N with the active meshes they live on.

    ``initial`` is u_h^0, defined on the step-1 active mesh ``active_meshes[0]``.
    """

    config: Optional[RunConfig]
    mesh: BackgroundMesh
    space: FESpace
    params: FormParams
    initial: FEFunction
    steps: List[StepRecord] = field(default_factory=list)
    active_meshes: List[ActiveMesh] = field(default_factory=list)
    cfl_ok: bool = True
    runtime: float = 0.0

    @property
    def dt(self) -> float:
        return self.params.dt

    @property
    def times(self) -> np.ndarray:
        return np.array([rec.t for rec in self.steps])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([rec.residual for rec in self.steps])

    @property
    def energy_sum(self) -> float:
        """dt times the sum of the per-step squared energies."""
        return self.dt * float(sum(rec.energy for rec in self.steps))

    @property
    def final(self) -> FEFunction:
        return self.steps[-1].solution if self.steps else self.initial


def form_params(config: RunConfig, mesh: BackgroundMesh) -> FormParams:
    return FormParams(gamma_D=config.gamma_D, gamma_g=config.gamma_g, dt=config.dt, h=mesh.h)


def initial_condition(
    config: RunConfig,
    space: FESpace,
    active_1: ActiveMesh,
    u0: Callable[[np.ndarray], np.ndarray],
    *,
    grad_u0: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    operators: Optional[StepOperators] = None,
) -> FEFunction:
    """u_h^0 on the step-1 active mesh, by nodal interpolation or Ritz projection."""
    if config.initial == "interpolate":
        return interpolate(space, active_1, u0)
    if grad_u0 is None:
        raise CutHeatError("Ritz initial projection needs the gradient of the initial value")
    params = form_params(config, space.mesh)
    if operators is None:
        quad_degree = default_quad_degree(space.degree) + config.quad_extra
        operators = assemble_operators(active_1, space, quad_degree=quad_degree)
    system = ritz_system(operators, params, u0, grad_u0)
    x = solve(system.matrix, system.rhs, config.tol, config.max_iter, method=config.solver)
    return FEFunction(space, system.expand(x, space.n_dofs), space.active_dofs(active_1))


def _step(
    config: RunConfig,
    problem: ManufacturedProblem,
    operators: StepOperators,
    params: FormParams,
    u_prev: FEFunction,
    t_n: float,
    dump_dir: Optional[Path] = None,
) -> StepRecord:
    active = operators.active
    space = operators.space
    system = assemble_system(operators, params, u_prev, problem.f, problem.g_bc, t_n)
    if dump_dir is not None:
        dump_system(dump_dir / f"step_{active.step:04d}", system.matrix, system.rhs)
    x0 = u_prev.coefficients[system.dofs]
    x = solve(system.matrix, system.rhs, config.tol, config.max_iter, method=config.solver, x0=x0)
    if not np.all(np.isfinite(x)):
        raise SolverDivergence("solution contains non-finite values", residual=float("nan"))
    residual = relative_residual(system.matrix, x, system.rhs) if system.rhs.size else 0.0
    u_n = FEFunction(space, system.expand(x, space.n_dofs), space.active_dofs(active))
    strip = 0 if active.strip_cells is None else int(active.strip_cells.size)
    return StepRecord(
        step=active.step,
        t=t_n,
        solution=u_n,
        energy=energy(operators, params, u_n, u_prev),
        energy_norm=energy_norm(operators, params, u_n),
        residual=residual,
        active_cells=int(active.active_cells.size),
        active_dofs=int(system.dofs.size),
        strip_cells=strip,
    )


def run(
    config: RunConfig,
    *,
    problem: Optional[ManufacturedProblem] = None,
    vtk_dir: Optional[Path] = None,
) -> Trajectory:
    """Run all N steps; step errors are re-raised with their step index set.

    ``problem`` replaces the manufactured problem named in ``config``.
    """
    started = time.perf_counter()
    problem = config.build_problem() if problem is None else problem
    mesh = build_uniform_mesh(problem.box, config.n)
    space = build_space(mesh, config.degree)
    params = form_params(config, mesh)
    quad_degree = default_quad_degree(config.degree) + config.quad_extra

    cfl_ok = config.dt <= mesh.h**2
    if not cfl_ok:
        logger.warning("parabolic CFL condition violated: dt=%.3e > h^2=%.3e", config.dt, mesh.h**2)
    if config.vtk and vtk_dir is None:
        vtk_dir = (Path(config.out) if config.out else REPORTS_DIR) / "vtk"
    dump_dir = (Path(config.out) if config.out else REPORTS_DIR) / "systems" if config.dump else None

    records: List[StepRecord] = []
    actives: List[ActiveMesh] = []
    initial: Optional[FEFunction] = None
    u_prev: Optional[FEFunction] = None
    prev_active: Optional[ActiveMesh] = None

    for n in range(1, config.n_steps + 1):
        t_n = n * config.dt
        try:
            active = build_active_mesh(mesh, problem.domain, t_n, config.delta, prev_active, step=n)
            operators = assemble_operators(active, space, quad_degree=quad_degree)
            if u_prev is None:
                initial = initial_condition(
                    config,
                    space,
                    active,
                    problem.initial,
                    grad_u0=lambda x: problem.grad_u(x, 0.0),
                    operators=operators,
                )
                u_prev = initial
            else:
                u_prev = transfer(u_prev, active)
            record = _step(config, problem, operators, params, u_prev, t_n, dump_dir)
        except CutHeatError as exc:
            if exc.step is None:
                exc.step = n
            logger.error("step %d (t=%.6g) failed: %s", n, t_n, exc)
            raise

        logger.info(
            "step %d t=%.6g active cells=%d dofs=%d strip=%d residual=%.2e",
            n, t_n, record.active_cells, record.active_dofs, record.strip_cells, record.residual,
        )
        if vtk_dir is not None:
            write_function_vtk(Path(vtk_dir) / f"u_{n:04d}.vtk", record.solution, active)
        records.append(record)
        actives.append(active)
        u_prev = record.solution
        prev_active = active

    if initial is None:
        raise CutHeatError("run produced no time steps")
    return Trajectory(
        config=config,
        mesh=mesh,
        space=space,
        params=params,
        initial=initial,
        steps=records,
        active_meshes=actives,
        cfl_ok=cfl_ok,
        runtime=time.perf_counter() - started,
    )


__all__ = ["StepRecord", "Trajectory", "form_params", "initial_condition", "run"]
