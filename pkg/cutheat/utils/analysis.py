"""Error norms against the exact solution and least-squares convergence-order fits."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.linear_model import LinearRegression

from .errors import InvalidArgumentError
from .fespace import FEFunction
from .geometry import ActiveMesh
from .manufactured import ManufacturedProblem
from .quadrature import MAX_DEGREE, build_cut_quadrature
from .timestepper import Trajectory

logger = logging.getLogger(__name__)

ORDER_BOUNDS = (0.5, 5.0)
ORDER_TOL = 1e-4
USABLE_REL_ERROR = 0.2
MIN_OFFSET_POINTS = 4
MIN_DIAGONAL_POINTS = 2

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ErrorReport:
    """The three error norms of one run plus the per-step values they are built from.

    ``l2_per_step[k-1]`` is ||e^k||_{L2(Omega^k)}; ``h1av_per_step[k-1]`` is
    ||grad e^k + grad e^{k-1}||_{L2(Omega^k)}.
    """

    end_time_L2: float
    L2L2: float
    L2H1av: float
    dt: float
    times: List[float] = field(default_factory=list)
    l2_per_step: List[float] = field(default_factory=list)
    h1av_per_step: List[float] = field(default_factory=list)

    def norms(self) -> Dict[str, float]:
        return {"end_time_L2": self.end_time_L2, "L2L2": self.L2L2, "L2H1av": self.L2H1av}

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def error_degree(m: int) -> int:
    return min(2 * m + 2, MAX_DEGREE)


def _step_errors(
    active: ActiveMesh,
    problem: ManufacturedProblem,
    u_n: FEFunction,
    u_prev: FEFunction,
    t_n: float,
    t_prev: float,
    degree: int,
) -> Tuple[float, float]:
    quad = build_cut_quadrature(active, degree)
    cells, ref, pts, weights = quad.volume(active.mesh)
    if weights.size == 0:
        return 0.0, 0.0
    e = problem.u(pts, t_n) - u_n.values(cells, ref)
    grad_e = problem.grad_u(pts, t_n) - u_n.gradients(cells, ref)
    grad_e_prev = problem.grad_u(pts, t_prev) - u_prev.gradients(cells, ref)
    grad_sum = grad_e + grad_e_prev
    l2 = math.sqrt(max(float(np.dot(weights, e * e)), 0.0))
    h1av = math.sqrt(max(float(np.dot(weights, np.einsum("pa,pa->p", grad_sum, grad_sum))), 0.0))
    return l2, h1av


def error_norms(trajectory: Trajectory, problem: ManufacturedProblem) -> ErrorReport:
    """End-time L2, L2(L2) and L2(H1_av) errors with quadrature of degree 2m + 2."""
    if not trajectory.steps:
        raise InvalidArgumentError("trajectory has no time steps")
    degree = error_degree(trajectory.space.degree)
    dt = trajectory.dt
    l2_values: List[float] = []
    h1_values: List[float] = []
    u_prev = trajectory.initial
    t_prev = 0.0
    for record, active in zip(trajectory.steps, trajectory.active_meshes):
        l2, h1 = _step_errors(active, problem, record.solution, u_prev, record.t, t_prev, degree)
        l2_values.append(l2)
        h1_values.append(h1)
        u_prev, t_prev = record.solution, record.t
    l2_arr = np.asarray(l2_values)
    h1_arr = np.asarray(h1_values)
    return ErrorReport(
        end_time_L2=float(l2_arr[-1]),
        L2L2=math.sqrt(dt * float(np.sum(l2_arr**2))),
        L2H1av=math.sqrt(dt * float(np.sum(h1_arr**2))),
        dt=dt,
        times=[float(rec.t) for rec in trajectory.steps],
        l2_per_step=l2_values,
        h1av_per_step=h1_values,
    )


def solution_l2_norms(trajectory: Trajectory) -> np.ndarray:
    """||u_h^0||_{L2(Omega^1)} followed by ||u_h^n||_{L2(Omega^n)} for n = 1..N."""
    degree = error_degree(trajectory.space.degree)
    pairs = [(trajectory.initial, trajectory.active_meshes[0])]
    pairs += [(rec.solution, active) for rec, active in zip(trajectory.steps, trajectory.active_meshes)]
    norms = []
    for u, active in pairs:
        cells, ref, _, weights = build_cut_quadrature(active, degree).volume(active.mesh)
        values = u.values(cells, ref)
        norms.append(math.sqrt(max(float(np.dot(weights, values * values)), 0.0)))
    return np.asarray(norms)


@dataclass(frozen=True)
class EocFit:
    """value ~ offset + constant * x**order for one protocol.

    ``standard_error`` is the asymptotic standard error of ``order``; the
    fit is ``usable`` when it is at most 20% of the order.
    """

    protocol: str
    order: float
    constant: float
    offset: float
    residual: float
    standard_error: float
    n_points: int
    usable: bool

    @property
    def relative_error(self) -> float:
        if self.order == 0.0 or not math.isfinite(self.standard_error):
            return math.inf
        return abs(self.standard_error / self.order)

    def as_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data["relative_error"] = self.relative_error
        return data


def _prepare(points: Sequence[Tuple[float, float]], minimum: int) -> Tuple[np.ndarray, np.ndarray]:
    data = np.asarray(points, dtype=float).reshape(-1, 2)
    if data.shape[0] < minimum:
        raise InvalidArgumentError(f"need at least {minimum} data points, got {data.shape[0]}")
    x, y = data[:, 0], data[:, 1]
    if np.any(x <= 0.0) or not np.all(np.isfinite(data)):
        raise InvalidArgumentError("step sizes must be positive and all values finite")
    return x, y


def _inner_fit(x: np.ndarray, y: np.ndarray, p: float) -> Tuple[float, float, float]:
    """Best (offset >= 0, constant) for fixed order; returns (offset, constant, rss)."""
    xp = x**p
    design = np.column_stack([np.ones_like(xp), xp])
    (offset, constant), *_ = np.linalg.lstsq(design, y, rcond=None)
    if offset < 0.0:
        offset = 0.0
        denom = float(xp @ xp)
        constant = float(xp @ y) / denom if denom > 0.0 else 0.0
    r = offset + constant * xp - y
    return float(offset), float(constant), float(r @ r)


def _golden_section(fn, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def _order_standard_error(
    x: np.ndarray, offset: float, constant: float, p: float, rss: float, with_offset: bool
) -> float:
    xp = x**p
    columns = [xp, constant * xp * np.log(x)]
    if with_offset:
        columns.insert(0, np.ones_like(xp))
    jac = np.column_stack(columns)
    dof = x.size - jac.shape[1]
    if dof <= 0 or np.linalg.matrix_rank(jac) < jac.shape[1]:
        return math.inf
    scale = max(float(np.max(np.abs(jac))), 1e-300)
    try:
        cov = np.linalg.inv((jac / scale).T @ (jac / scale)) / scale**2
    except np.linalg.LinAlgError:
        return math.inf
    variance = rss / dof * float(cov[-1, -1])
    return math.sqrt(max(variance, 0.0))


def _fit_with_offset(points: Sequence[Tuple[float, float]], protocol: str) -> EocFit:
    x, y = _prepare(points, MIN_OFFSET_POINTS)
    lo, hi = ORDER_BOUNDS

    def rss_of(p: float) -> float:
        return _inner_fit(x, y, p)[2]

    # Coarse scan brackets the global minimum before the golden-section refinement.
    grid = np.linspace(lo, hi, 91)
    values = np.array([rss_of(p) for p in grid])
    best = int(np.argmin(values))
    p = _golden_section(rss_of, grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)], ORDER_TOL)
    offset, constant, rss = _inner_fit(x, y, p)

    se = _order_standard_error(x, offset, constant, p, rss, with_offset=offset > 0.0)
    fit = EocFit(
        protocol=protocol,
        order=float(p),
        constant=constant,
        offset=offset,
        residual=math.sqrt(rss),
        standard_error=se,
        n_points=int(x.size),
        usable=False,
    )
    usable = math.isfinite(se) and constant > 0.0 and fit.relative_error <= USABLE_REL_ERROR
    if not usable:
        logger.debug("%s fit flagged unusable: order=%.3f se=%.3g", protocol, p, se)
    return EocFit(**{**asdict(fit), "usable": bool(usable)})


def fit_temporal(errors: Sequence[Tuple[float, float]]) -> EocFit:
    """Fit value = g_h + c * dt**p over (dt, value) pairs at fixed h."""
    return _fit_with_offset(errors, "temporal")


def fit_spatial(errors: Sequence[Tuple[float, float]]) -> EocFit:
    """Fit value = g_dt + c * h**p over (h, value) pairs at fixed dt."""
    return _fit_with_offset(errors, "spatial")


def fit_diagonal(errors: Sequence[Tuple[float, float]]) -> EocFit:
    """Log-log regression value = c * h**p for dt = cbar * h (no offset)."""
    x, y = _prepare(errors, MIN_DIAGONAL_POINTS)
    if np.any(y <= 0.0):
        raise InvalidArgumentError("diagonal fit needs positive error values")
    log_x = np.log(x)[:, None]
    log_y = np.log(y)
    model = LinearRegression().fit(log_x, log_y)
    p = float(model.coef_[0])
    constant = math.exp(float(model.intercept_))
    resid = log_y - model.predict(log_x)
    rss = float(resid @ resid)
    dof = x.size - 2
    spread = float(np.sum((log_x[:, 0] - log_x[:, 0].mean()) ** 2))
    if dof > 0 and spread > 0.0:
        se = math.sqrt(rss / dof / spread)
    else:
        se = 0.0
    rel = abs(se / p) if p != 0.0 else math.inf
    return EocFit(
        protocol="diagonal",
        order=p,
        constant=constant,
        offset=0.0,
        residual=math.sqrt(rss),
        standard_error=se,
        n_points=int(x.size),
        usable=bool(rel <= USABLE_REL_ERROR),
    )


def pairwise_orders(errors: Sequence[Tuple[float, float]]) -> List[float]:
    """log(e_i / e_{i+1}) / log(x_i / x_{i+1}) for consecutive refinement levels."""
    data = sorted(((float(x), float(y)) for x, y in errors), reverse=True)
    orders = []
    for (x0, y0), (x1, y1) in zip(data, data[1:]):
        orders.append(math.log(y0 / y1) / math.log(x0 / x1) if y0 > 0 and y1 > 0 else math.nan)
    return orders


__all__ = [
    "ErrorReport",
    "EocFit",
    "error_norms",
    "error_degree",
    "solution_l2_norms",
    "fit_temporal",
    "fit_spatial",
    "fit_diagonal",
    "pairwise_orders",
]
