"""Pydantic models shared across all layers."""

from __future__ import annotations

from enum import Enum
from typing import Optional

import sympy
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Subset(str, Enum):
    FULL = "FULL"
    FAST = "FAST"
    SLOW = "SLOW"


class StageKind(str, Enum):
    DRIFT = "drift"
    KICK = "kick"
    INNER_LOOP = "inner_loop"


class Experiment(str, Enum):
    SIMULATE = "simulate"
    CONVERGE = "converge"
    BENCHMARK = "benchmark"
    SHADOW_VERIFY = "shadow-verify"


class CostWeights(BaseModel):
    """Cost units charged per logical evaluation."""

    slow_force: float = Field(1.0, ge=0.0)
    fast_force: float = Field(0.001, ge=0.0, description="Fast part is scaled down by a factor of 0.001")
    slow_force_gradient: float = Field(2.0, ge=0.0, description="Forces plus Jacobian-vector contraction")
    fast_force_gradient: float = Field(0.002, ge=0.0)
    drift: float = Field(0.0, ge=0.0)


class ThreeBodySetup(BaseModel):
    """Sun-Earth-Moon parameters in the AU / SU / month unit system.

    The SI column is kept for reference only; runs use the AU/SU/mo values.
    Initial velocities point along +x (tangential), magnitudes as tabulated.
    """

    model_config = ConfigDict(frozen=True)

    G: float = Field(0.2662, gt=0.0, description="AU^3 / (SU mo^2)")
    masses: tuple[float, float, float] = (1.0, 3e-6, 0.0369e-6)
    positions: tuple[tuple[float, float], ...] = ((0.0, 0.0), (0.0, 1.0167138), (0.0, 1.0191138))
    speeds: tuple[float, float, float] = (0.0, 0.5160, 0.5337)

    G_si: float = 6.67384e-11
    masses_si: tuple[float, float, float] = (1.9891e30, 5.9736e24, 7.3477e22)
    positions_si: tuple[tuple[float, float], ...] = ((0.0, 0.0), (0.0, 1.52098e11), (0.0, 1.52504e11))
    speeds_si: tuple[float, float, float] = (0.0, 29.78e3, 30.802e3)

    @field_validator("masses")
    @classmethod
    def _positive_masses(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(m <= 0 for m in v):
            raise ValueError("masses must be strictly positive")
        return v


class ConvergenceReport(BaseModel):
    """Max relative energy error per step size and the fitted order."""

    scheme: str
    h: list[float]
    max_rel_err: list[float]
    slope: Optional[float] = None
    intercept: Optional[float] = None
    window: Optional[tuple[int, int]] = Field(None, description="Inclusive index range of the fitted points")
    residual: Optional[float] = Field(None, description="RMS residual of the log-log fit")
    local_slopes: list[float] = Field(default_factory=list)
    flagged: bool = False
    note: str = ""


class CostRow(BaseModel):
    scheme: str
    h: float
    weighted_cost: float
    max_rel_err: float
    counts: dict[str, int] = Field(default_factory=dict)


class RunStatus(BaseModel):
    """Progress snapshot pushed while a trajectory is integrated."""

    scheme: str
    step: int = 0
    steps_total: int = 0
    time_mo: float = 0.0
    rel_energy_error: float = 0.0


class AppConfig(BaseModel):
    """Process-wide settings."""

    log_level: str = "INFO"
    output_dir: str = "results"
    max_degree: int = Field(4, ge=1, le=6)
    workers: int = Field(4, ge=1, le=64)
    force_cache: bool = True


def parse_rational(value: object) -> sympy.Rational:
    """Exact rational from an int, a `p/q` string, a Fraction or a decimal string."""
    if isinstance(value, sympy.Rational):
        return value
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    try:
        r = sympy.Rational(str(value).strip())
    except (TypeError, ValueError, SyntaxError) as e:
        raise ValueError(f"not a rational: {value!r}") from e
    if not isinstance(r, sympy.Rational):
        raise ValueError(f"not a rational: {value!r}")
    return r


# Step sizes in months for converge and benchmark runs
DEFAULT_H_GRID = (0.16, 0.08, 0.04, 0.02, 0.01)


class RunConfig(BaseModel):
    """One command-line run: experiment, schemes, step sizes and outputs."""

    model_config = ConfigDict(populate_by_name=True)

    experiment: Experiment
    schemes: list[str] = Field(default_factory=lambda: ["leapfrog"])
    M: int = Field(30, ge=1)
    lam: Optional[str] = Field(None, alias="lambda", description="Outer kick weight as p/q")
    h: Optional[float] = Field(None, gt=0.0)
    h_grid: Optional[list[float]] = None
    t_end: float = Field(12.0, ge=0.0)
    sample_every: int = Field(1, ge=1)
    weights: CostWeights = Field(default_factory=CostWeights)
    output: Optional[str] = None
    workers: Optional[int] = Field(None, ge=1, le=64)
    target: float = Field(1e-8, gt=0.0, description="Matched accuracy level for benchmark summaries")
    degree: Optional[int] = Field(None, ge=1, le=6, description="Truncation degree; defaults to AppConfig.max_degree")
    commuting: bool = False
    claims: list[str] = Field(default_factory=list)
    scheme_text: Optional[str] = None

    @field_validator("schemes")
    @classmethod
    def _known_schemes(cls, v: list[str]) -> list[str]:
        from shadowstep.schemes import SCHEME_NAMES

        if not v:
            raise ValueError("at least one scheme is required")
        unknown = [name for name in v if name not in SCHEME_NAMES]
        if unknown:
            raise ValueError(f"unknown scheme(s) {unknown}; known: {sorted(SCHEME_NAMES)}")
        return v

    @field_validator("lam")
    @classmethod
    def _lambda_range(cls, v: Optional[str]) -> Optional[str]:
        if v is None:
            return v
        r = parse_rational(v)
        if not 0 < r < sympy.Rational(1, 2):
            raise ValueError(f"lambda must lie in (0, 1/2), got {r}")
        return str(r)

    @field_validator("h_grid")
    @classmethod
    def _descending_grid(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is None:
            return v
        if any(h <= 0 for h in v):
            raise ValueError("step sizes must be positive")
        if any(a <= b for a, b in zip(v, v[1:])):
            raise ValueError("step sizes must be sorted strictly descending")
        return v

    @model_validator(mode="after")
    def _experiment_needs(self) -> "RunConfig":
        if self.h_grid is None and self.experiment in (Experiment.CONVERGE, Experiment.BENCHMARK):
            self.h_grid = list(DEFAULT_H_GRID)
        match self.experiment:
            case Experiment.SIMULATE:
                if self.h is None:
                    raise ValueError("simulate requires h")
            case Experiment.CONVERGE:
                if self.h_grid is None or len(self.h_grid) < 4:
                    raise ValueError("converge requires an h_grid of at least 4 step sizes")
            case Experiment.BENCHMARK:
                if self.h_grid is None or len(self.h_grid) < 2:
                    raise ValueError("benchmark requires an h_grid of at least 2 step sizes")
        return self
