"""Flat ``key=value`` run and grid configuration, validated with pydantic."""
from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .geometry import DELTA_FACTOR
from .manufactured import DEFAULT_RADIUS_SQUARED, PROBLEMS, ManufacturedProblem, get_problem

DEFAULT_GAMMA_D = {1: 1.0, 2: 10.0}
DEFAULT_GAMMA_G = 1e-3

REAL_KEYS = {"dt", "tmax", "gamma_D", "gamma_g", "delta", "delta_factor", "tol", "r2"}
LIST_KEYS = {"h", "dt", "cbar"}
BOOL_KEYS = {"vtk", "dump"}
GRID_MARKERS = {"h", "mode"}


class _Physics(BaseModel):
    """Keys shared by single runs and grids."""

    model_config = ConfigDict(extra="forbid")

    problem: str
    tmax: float = Field(..., gt=0)
    degree: int = Field(1, ge=1, le=2)
    gamma_D: Optional[float] = Field(None, gt=0)
    gamma_g: float = Field(DEFAULT_GAMMA_G, gt=0)
    delta_factor: float = Field(DELTA_FACTOR, gt=0)
    solver: Literal["direct", "gmres", "bicgstab"] = "direct"
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(500, ge=1)
    quad_extra: int = Field(0, ge=0, le=2)
    r2: float = Field(DEFAULT_RADIUS_SQUARED, gt=0)
    initial: Literal["interpolate", "ritz"] = "interpolate"
    vtk: bool = False
    dump: bool = False
    out: Optional[str] = None

    @model_validator(mode="after")
    def _fill_defaults(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; expected one of {sorted(PROBLEMS)}")
        if self.gamma_D is None:
            self.gamma_D = DEFAULT_GAMMA_D[self.degree]
        return self

    def problem_kwargs(self) -> Dict[str, float]:
        kwargs: Dict[str, float] = {"t_max": self.tmax}
        if self.problem == "traveling_circle":
            kwargs["r2"] = self.r2
        return kwargs

    def build_problem(self) -> ManufacturedProblem:
        return get_problem(self.problem, **self.problem_kwargs())


class RunConfig(_Physics):
    """One time-stepping run on an ``n`` x ``n`` criss-cross mesh."""

    n: int = Field(..., ge=1)
    dt: float = Field(..., gt=0)
    delta: Optional[float] = Field(None, ge=0)

    @model_validator(mode="after")
    def _check_steps(self):
        if self.n_steps < 1:
            raise ValueError(f"tmax={self.tmax:.6g} is shorter than half a time step dt={self.dt:.6g}")
        if self.delta is None:
            self.delta = self.delta_factor * self.dt
        w_max = self.build_problem().w_max
        if self.delta < w_max * self.dt:
            raise ValueError(f"delta={self.delta:.4g} is below w_max*dt={w_max * self.dt:.4g}")
        return self

    @property
    def n_steps(self) -> int:
        """N = tmax/dt rounded half up; the run ends at N * dt."""
        return int(math.floor(self.tmax / self.dt + 0.5))


class ExperimentGrid(_Physics):
    """Convergence grid over mesh sizes 1/n and time steps.

    In ``full`` mode every (h, dt) pair runs; in ``diagonal`` mode the i-th h
    is paired with the i-th dt (or with ``cbar * h`` when dt is omitted).
    """

    mode: Literal["full", "diagonal"] = "full"
    h: List[float] = Field(..., min_length=1)
    dt: Optional[List[float]] = None
    cbar: List[float] = Field(default_factory=list)
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_lists(self):
        for name in ("h", "dt"):
            values = getattr(self, name)
            if values is None:
                continue
            if not values:
                raise ValueError(f"{name} list is empty")
            if any(v <= 0 for v in values):
                raise ValueError(f"{name} values must be positive")
            if any(b >= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} values must be strictly decreasing")
        for value in self.h:
            n = 1.0 / value
            if abs(n - round(n)) > 1e-6:
                raise ValueError(f"h={value:.6g} is not 1/n for an integer n")
        if any(c <= 0 for c in self.cbar):
            raise ValueError("cbar values must be positive")
        if self.mode == "full" and self.dt is None:
            raise ValueError("full grid needs a dt list")
        if self.mode == "diagonal":
            if self.dt is None:
                if len(self.cbar) != 1:
                    raise ValueError("diagonal grid without dt needs exactly one cbar")
                self.dt = [self.cbar[0] * h for h in self.h]
            elif len(self.dt) != len(self.h):
                raise ValueError(f"diagonal grid needs equal list lengths, got {len(self.h)} h and {len(self.dt)} dt")
        return self

    def pairs(self) -> List[Tuple[float, float]]:
        if self.mode == "diagonal":
            return list(zip(self.h, self.dt))
        return [(h, dt) for h in self.h for dt in self.dt]

    def run_config(self, h: float, dt: float) -> RunConfig:
        shared = self.model_dump(exclude={"mode", "h", "dt", "cbar", "jobs"})
        return RunConfig(**shared, n=int(round(1.0 / h)), dt=dt)


def _parse_real(text: str) -> float:
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def _convert(key: str, raw: str, grid: bool) -> object:
    if key in LIST_KEYS and (grid or key != "dt"):
        return [_parse_real(part) for part in raw.split(",") if part.strip()]
    if key in REAL_KEYS:
        return _parse_real(raw)
    if key in BOOL_KEYS:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    return raw


def _tokenize(text: str) -> Dict[str, Tuple[str, int]]:
    pairs: Dict[str, Tuple[str, int]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"expected key=value, got {content!r}", line=number)
        key, value = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=number)
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r}", line=number)
        pairs[key] = (value, number)
    return pairs


def parse_config(text: str) -> Union[RunConfig, ExperimentGrid]:
    """Parse and validate a flat config; the presence of ``h`` or ``mode`` selects a grid."""
    pairs = _tokenize(text)
    grid = bool(GRID_MARKERS & pairs.keys())
    model = ExperimentGrid if grid else RunConfig
    known = set(model.model_fields)
    values: Dict[str, object] = {}
    for key, (raw, number) in pairs.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", line=number)
        try:
            values[key] = _convert(key, raw, grid)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"invalid value for {key!r}: {exc}", line=number) from exc

    try:
        return model(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = first.get("loc", ())
        key = str(loc[0]) if loc else None
        line = pairs[key][1] if key in pairs else None
        if first.get("type") == "missing":
            raise ConfigError(f"missing required key {key!r}", line=None) from exc
        label = f"{key}: " if key else ""
        raise ConfigError(f"{label}{first.get('msg', 'invalid value')}", line=line) from exc


def load_config(path: Union[str, Path]) -> Union[RunConfig, ExperimentGrid]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def mesh_size_label(h: float) -> str:
    """``1/32`` style label for a mesh size or time step."""
    inv = 1.0 / h
    if math.isclose(inv, round(inv), rel_tol=1e-9):
        return f"1/{int(round(inv))}"
    return f"{h:.6g}"


__all__ = [
    "RunConfig",
    "ExperimentGrid",
    "parse_config",
    "load_config",
    "mesh_size_label",
    "DEFAULT_GAMMA_D",
    "DEFAULT_GAMMA_G",
]
