"""
Data models for the PABF toolkit.

This module defines the validated configuration tree of a run (RunSpec and
its sections, including the particle SystemSpec) and the small record types
reported by the checks and diagnostics.
"""

import math
from enum import Enum
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SystemKind(str, Enum):
    """Particle system families."""

    TOY = "toy-separable"
    TRIMER = "trimer"


class Mode(str, Enum):
    """Which force biases the dynamics."""

    ABF = "abf"
    PABF = "pabf"


class Weighting(str, Enum):
    """Weight used inside the Poisson problem of the projection."""

    WEIGHTED = "weighted"
    UNIFORM = "uniform"


def _split_csv(value):
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class SystemSpec(BaseModel):
    """
    Particle system definition.

    Fields left as None are filled with kind-dependent defaults after
    validation, so a validated SystemSpec is always fully concrete.
    """

    model_config = ConfigDict(extra="forbid")

    kind: SystemKind = SystemKind.TOY
    N: Optional[int] = Field(None, ge=1)
    d: Optional[int] = Field(None, ge=1, le=3)
    box_length: Optional[float] = Field(None, gt=0)
    beta: float = Field(4.0, gt=0)

    # trimer potentials
    epsilon: float = Field(1.0, gt=0)
    sigma: float = Field(1.0, gt=0)
    well_depth: float = Field(5.0, ge=0)
    r0: Optional[float] = Field(None, gt=0)
    well_width: Optional[float] = Field(None, gt=0)
    k_theta: float = Field(2.0, ge=0)
    r_cut: Optional[float] = Field(None, gt=0)
    r_min: Optional[float] = Field(None, gt=0)
    xi_delta: float = Field(0.1, ge=0, lt=0.5)
    trimer_indices: Tuple[int, int, int] = (0, 1, 2)

    # toy-separable potentials
    toy_amplitude: float = 1.0
    toy_b: float = 0.3
    toy_u_amplitude: float = 1.0

    @field_validator("trimer_indices", mode="before")
    @classmethod
    def _parse_indices(cls, value):
        return _split_csv(value)

    @model_validator(mode="after")
    def _fill_defaults(self):
        if self.kind == SystemKind.TOY:
            self.N = 3 if self.N is None else self.N
            self.d = 1 if self.d is None else self.d
            self.box_length = 1.0 if self.box_length is None else self.box_length
        else:
            self.N = 100 if self.N is None else self.N
            self.d = 2 if self.d is None else self.d
            self.box_length = 10.0 * self.sigma if self.box_length is None else self.box_length
        if self.r0 is None:
            self.r0 = 2.0 ** (1.0 / 6.0) * self.sigma
        if self.well_width is None:
            self.well_width = 0.5 * self.sigma
        if self.r_cut is None:
            self.r_cut = 2.5 * self.sigma
        if self.r_min is None:
            self.r_min = 0.8 * self.sigma

        if self.kind == SystemKind.TOY:
            if self.N * self.d < 2:
                raise ValueError("toy-separable system needs at least two coordinates (N*d >= 2)")
            return self

        if self.N < 3:
            raise ValueError("trimer system needs N >= 3")
        if self.d != 2:
            raise ValueError("trimer system lives in d = 2")
        if len(set(self.trimer_indices)) != 3:
            raise ValueError("trimer_indices must be distinct")
        if any(index < 0 or index >= self.N for index in self.trimer_indices):
            raise ValueError("trimer_indices must lie in [0, N)")
        if self.r_min >= self.r_cut:
            raise ValueError("r_min must be smaller than r_cut")
        if 2.0 * self.r_cut > self.box_length:
            raise ValueError("box_length must be at least 2*r_cut for the minimum image convention")
        return self

    @property
    def r_compact(self):
        return self.r0

    @property
    def r_stretched(self):
        return self.r0 + 2.0 * self.well_width

    @property
    def n_coords(self):
        return self.N * self.d


class GridSpec(BaseModel):
    """Reaction-coordinate grid resolution."""

    model_config = ConfigDict(extra="forbid")

    n1: int = Field(64, ge=4)
    n2: int = Field(64, ge=4)


class DynamicsSpec(BaseModel):
    """Integration schedule."""

    model_config = ConfigDict(extra="forbid")

    dt: float = Field(5e-4, gt=0)
    n_sweeps: int = Field(2000, ge=0)
    k_sub: int = Field(10, ge=1)
    M: int = Field(64, ge=1)


class EstimatorSpec(BaseModel):
    """Mean-force estimator knobs."""

    model_config = ConfigDict(extra="forbid")

    n_min: int = Field(50, ge=1)
    eps_density: float = Field(1e-3, gt=0)


class SolverSpec(BaseModel):
    """Projection solver knobs; max_iter defaults to 10*n1*n2."""

    model_config = ConfigDict(extra="forbid")

    tol: float = Field(1e-8, gt=0, lt=1)
    max_iter: Optional[int] = Field(None, ge=1)
    weighting: Weighting = Weighting.WEIGHTED
    jacobi: bool = True


class SnapshotSpec(BaseModel):
    """Snapshot schedule: explicit times or t = first * factor**j."""

    model_config = ConfigDict(extra="forbid")

    times: Union[Literal["geometric"], List[float]] = "geometric"
    first: float = Field(0.025, gt=0)
    factor: float = Field(2.0, gt=1)

    @field_validator("times", mode="before")
    @classmethod
    def _parse_times(cls, value):
        if isinstance(value, str) and value.strip() != "geometric":
            return _split_csv(value)
        if isinstance(value, str):
            return value.strip()
        return value

    @field_validator("times")
    @classmethod
    def _increasing(cls, value):
        if isinstance(value, list):
            if any(t <= 0 or not math.isfinite(t) for t in value):
                raise ValueError("snapshot times must be positive and finite")
            if any(b <= a for a, b in zip(value, value[1:])):
                raise ValueError("snapshot times must be strictly increasing")
        return value

    def schedule(self, t_end):
        """
        Scheduled snapshot times up to t_end.

        Args:
            t_end: Simulated time at the end of the run.

        Returns:
            Sorted list of times, each <= t_end.
        """
        limit = t_end * (1.0 + 1e-12)
        if isinstance(self.times, list):
            return [t for t in self.times if t <= limit]
        times = []
        t = self.first
        while t <= limit:
            times.append(t)
            t *= self.factor
        return times


class RunSpec(BaseModel):
    """Everything one ABF or PABF run depends on."""

    model_config = ConfigDict(extra="forbid")

    system: SystemSpec = Field(default_factory=SystemSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    dynamics: DynamicsSpec = Field(default_factory=DynamicsSpec)
    estimator: EstimatorSpec = Field(default_factory=EstimatorSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    snapshots: SnapshotSpec = Field(default_factory=SnapshotSpec)
    mode: Mode = Mode.PABF
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "pabf_output"

    @model_validator(mode="after")
    def _fill_solver_budget(self):
        if self.solver.max_iter is None:
            self.solver.max_iter = 10 * self.grid.n1 * self.grid.n2
        return self

    @property
    def t_end(self):
        return self.dynamics.n_sweeps * self.dynamics.k_sub * self.dynamics.dt


class MomentReport(BaseModel):
    """Outcome of the Boltzmann moment check."""

    steps: int
    replicas: int
    estimate: float
    std_error: float
    reference: float
    z_score: float
    passed: bool


class CheckResult(BaseModel):
    """One line of the built-in invariant suite."""

    name: str
    passed: bool
    detail: str = ""


class TimeseriesRow(BaseModel):
    """One row of timeseries.csv."""

    t: float
    int_var_F: float = math.nan
    int_var_gradA: float = math.nan
    l2_error: float = math.nan
    neg_log_flatness1: float = math.nan
    neg_log_flatness2: float = math.nan


class SummaryRow(TimeseriesRow):
    """Cross-run timeseries row with the standard errors of the variances."""

    int_var_F_se: float = math.nan
    int_var_gradA_se: float = math.nan
    int_norm_var_F: float = math.nan
    int_norm_var_gradA: float = math.nan
    variance_reduction_ok: bool = True
    variance_reduced: bool = True


class VarianceVerdict(BaseModel):
    """Variance-reduction outcome over all matched snapshot times."""

    times: int
    reduced: int
    within_allowance: int
    fraction_reduced: float
    passed: bool
