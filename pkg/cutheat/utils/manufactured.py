"""Manufactured solutions with globally defined data.

Every field is a closed form valid on the whole box, so each one is its own
smooth extension off the physical domain. The source is always derived as
u_t - Δu from the closed forms of u_t and Δu, never entered separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .errors import InvalidArgumentError
from .geometry import MovingDomain
from .mesh import UNIT_SQUARE, Box

SpaceTimeFn = Callable[[np.ndarray, float], np.ndarray]

DEFAULT_RADIUS_SQUARED = 0.09


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    u: SpaceTimeFn
    grad_u: SpaceTimeFn
    u_t: SpaceTimeFn
    laplace_u: SpaceTimeFn
    domain: MovingDomain
    box: Box
    t_max: float

    @property
    def w_max(self) -> float:
        return self.domain.w_max

    def f(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.u_t(x, t) - self.laplace_u(x, t)

    def g_bc(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.u(x, t)

    def initial(self, x: np.ndarray) -> np.ndarray:
        return self.u(x, 0.0)


def check_source_consistency(
    problem: ManufacturedProblem,
    rng: np.random.Generator,
    n: int = 100,
    step: float = 1e-4,
) -> float:
    """Max mismatch between f and finite-difference u_t - Δu at random points.

    Relative to the largest |u_t| + |Δu| seen in the sample.
    """
    x0, y0, x1, y1 = problem.box
    pts = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    times = rng.uniform(step, problem.t_max, n)
    u = problem.u
    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    fd = np.empty(n)
    for i, (x, t) in enumerate(zip(pts, times)):
        u_t = (u(x, t + step) - u(x, t - step)) / (2 * step)
        lap = (u(x + ex, t) + u(x - ex, t) + u(x + ey, t) + u(x - ey, t) - 4 * u(x, t)) / step**2
        fd[i] = float(u_t - lap)
    exact = np.array([float(problem.f(x, t)) for x, t in zip(pts, times)])
    scale = max(
        max(float(abs(problem.u_t(x, t))) + float(abs(problem.laplace_u(x, t))) for x, t in zip(pts, times)),
        1e-12,
    )
    return float(np.max(np.abs(fd - exact)) / scale)


def example_traveling_circle(r2: float = DEFAULT_RADIUS_SQUARED, t_max: float = 0.1) -> ManufacturedProblem:
    """Circle of squared radius ``r2`` moving with velocity (1, 0) through the unit square.

    u = exp(-4π²t) cos(2πx) cos(2πy) gives u_t = -4π²u and Δu = -8π²u, so the
    source is f = 4π²u rather than zero.
    """
    if not r2 > 0:
        raise InvalidArgumentError(f"squared radius must be positive, got {r2}")
    radius = math.sqrt(r2)
    if 0.5 + t_max + radius >= 1.0 or 0.5 - radius <= 0.0:
        raise InvalidArgumentError(
            f"circle with r^2={r2} leaves the unit square before t={t_max}; "
            f"r^2=0.9 would mean radius 0.949 in a box of width 1, use r^2={DEFAULT_RADIUS_SQUARED} (radius 0.3)"
        )
    k = 2.0 * math.pi
    decay = 4.0 * math.pi**2

    def phi(x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x[..., 0] - 0.5 - t) ** 2 + (x[..., 1] - 0.5) ** 2 - r2

    def distance(x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.hypot(x[..., 0] - 0.5 - t, x[..., 1] - 0.5) - radius

    def u(x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return math.exp(-decay * t) * np.cos(k * x[..., 0]) * np.cos(k * x[..., 1])

    def grad_u(x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        amp = math.exp(-decay * t)
        gx = -k * amp * np.sin(k * x[..., 0]) * np.cos(k * x[..., 1])
        gy = -k * amp * np.cos(k * x[..., 0]) * np.sin(k * x[..., 1])
        return np.stack([gx, gy], axis=-1)

    def u_t(x: np.ndarray, t: float) -> np.ndarray:
        return -decay * u(x, t)

    def laplace_u(x: np.ndarray, t: float) -> np.ndarray:
        return -2.0 * k**2 * u(x, t)

    domain = MovingDomain(phi=phi, w_max=1.0, description=f"traveling circle r^2={r2}", distance=distance)
    return ManufacturedProblem("traveling_circle", u, grad_u, u_t, laplace_u, domain, UNIT_SQUARE, t_max)


def example_static_square(t_max: float = 0.1) -> ManufacturedProblem:
    """Omega = D = [0,1]^2 with u = exp(-2π²t) sin(πx) sin(πy), f = 0, g = 0."""
    k = math.pi
    decay = 2.0 * math.pi**2

    def phi(x: np.ndarray, t: float) -> np.ndarray:
        return -np.ones(np.asarray(x).shape[:-1])

    def u(x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return math.exp(-decay * t) * np.sin(k * x[..., 0]) * np.sin(k * x[..., 1])

    def grad_u(x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        amp = math.exp(-decay * t)
        gx = k * amp * np.cos(k * x[..., 0]) * np.sin(k * x[..., 1])
        gy = k * amp * np.sin(k * x[..., 0]) * np.cos(k * x[..., 1])
        return np.stack([gx, gy], axis=-1)

    def u_t(x: np.ndarray, t: float) -> np.ndarray:
        return -decay * u(x, t)

    def laplace_u(x: np.ndarray, t: float) -> np.ndarray:
        return -2.0 * k**2 * u(x, t)

    domain = MovingDomain(phi=phi, w_max=0.0, description="static unit square")
    return ManufacturedProblem("static_square", u, grad_u, u_t, laplace_u, domain, UNIT_SQUARE, t_max)


PROBLEMS: Dict[str, Callable[..., ManufacturedProblem]] = {
    "traveling_circle": example_traveling_circle,
    "static_square": example_static_square,
}


def get_problem(name: str, **kwargs) -> ManufacturedProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError as exc:
        raise InvalidArgumentError(f"unknown problem {name!r}; expected one of {sorted(PROBLEMS)}") from exc
    return factory(**kwargs)


__all__ = [
    "ManufacturedProblem",
    "example_traveling_circle",
    "example_static_square",
    "check_source_consistency",
    "get_problem",
    "PROBLEMS",
    "DEFAULT_RADIUS_SQUARED",
]
