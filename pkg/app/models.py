from __future__ import annotations

from enum import StrEnum

from pydantic import BaseModel, model_validator

# Upper bound on beta for the coupled schedule eta = eps^(1 - beta)
MAX_BETA = 2.0 / 7.0
FIG4_BOX_HALF_WIDTH = 26.0  # radii up to 24 stay clear of the seam at t_final = 1


class FluxSampling(StrEnum):
    STAGGERED = "staggered"
    NODAL = "nodal"


class FluxMode(StrEnum):
    HMM = "hmm"
    REFERENCE = "reference"


class ScaleSchedule(StrEnum):
    FIXED_ETA = "fixed-eta"
    COUPLED = "coupled"


class SweepVariable(StrEnum):
    ALPHA = "alpha"
    EPS = "eps"


class ValidationReport(BaseModel):
    label: str
    samples: int
    c1_estimate: float
    c2_estimate: float
    symmetry_violation: float
    periodicity_violation: float


class FluxVector(BaseModel):
    value: list[float]
    r0: list[float]
    slope: list[float]
    source: FluxMode = FluxMode.HMM

    # Provenance; micro scales are None for reference fluxes
    eps: float | None = None
    eta: float | None = None
    tau: float | None = None
    p: int | None = None
    q: int | None = None
    resolution: int = 0


class RateFit(BaseModel):
    slope: float
    intercept: float
    residual: float  # max |log deviation| from the fitted line
    n_used: int
    flagged: bool = False


class ConvergenceRecord(BaseModel):
    sweep_var: float
    error: float

    eps: float
    eta: float
    tau: float
    p: int
    q: int
    pts_per_eps: int
    coefficient: str
    dim: int
    r0: list[float]
    slope: list[float]
    label: str = ""


class ExperimentConfig(BaseModel):
    """One upscaling-error sweep (a section of the experiment config file)."""

    name: str = "convergence"
    coefficient: str = "periodic-1d"
    constant_value: float | None = None
    dim: int = 1
    p: int = 3
    q: int = 6

    schedule: ScaleSchedule = ScaleSchedule.FIXED_ETA
    eta: float = 0.01
    tau: float | None = None  # defaults to eta
    beta: float = 0.2
    eps: list[float] = []  # empty means the dyadic default
    levels: int | None = None  # dyadic levels; 6 in 1D, 4 in 2D
    sweep_var: SweepVariable = SweepVariable.ALPHA
    fit_points: int | None = None  # fit only the smallest sweep_var values; None fits all

    r0: list[float] = [0.0]
    slope: list[float] = [1.0]
    pts_per_eps: int = 32
    cfl: float = 0.5
    flux_sampling: FluxSampling = FluxSampling.STAGGERED
    reference_n: int | None = None  # None matches the micro resolution

    label: str = ""
    output: str = "convergence.csv"

    @model_validator(mode="after")
    def _check(self) -> ExperimentConfig:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.r0) != self.dim or len(self.slope) != self.dim:
            raise ValueError(f"r0 and slope need {self.dim} components")
        if self.schedule == ScaleSchedule.COUPLED and not 0.0 < self.beta < MAX_BETA:
            raise ValueError(f"coupled schedule needs 0 < beta < 2/7, got {self.beta}")
        if self.fit_points is not None and self.fit_points < 3:
            raise ValueError(f"fit_points needs at least 3, got {self.fit_points}")
        if any(e <= 0 for e in self.eps):
            raise ValueError("eps values must be positive")
        return self


class ExpansionExperiment(StrEnum):
    FIG2 = "fig2"
    FIG3 = "fig3"
    FIG4 = "fig4"
    TIME_AVERAGES = "time-averages"
    FLUX_DECOMP = "flux-decomp"


class ExpansionConfig(BaseModel):
    """One expansion experiment (the [expansion] section)."""

    experiment: ExpansionExperiment = ExpansionExperiment.FIG2
    coefficient: str = "fig2-1d"
    slope: list[float] = [1.0]
    L: float | None = None  # None picks FIG4_BOX_HALF_WIDTH for fig4, 3.0 otherwise
    window: float = 1.5
    t_final: float = 1.0
    eps: list[float] = [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7]
    orders: list[int] = [0, 1, 2]
    alphas: list[float] = [2.0**-2, 2.0**-3, 2.0**-4, 2.0**-5]
    radii: list[float] = [12.0, 16.0, 20.0, 24.0]
    eta: float = 0.001  # small enough that the slow kernel moments stay under the fitted errors
    p: int = 3
    q: int = 6
    pts_per_eps: int = 32
    output: str = "expansion.csv"

    @model_validator(mode="after")
    def _check(self) -> ExpansionConfig:
        if any(m < 0 or m > 2 for m in self.orders):
            raise ValueError(f"orders must lie in 0..2, got {self.orders}")
        if any(a <= 0 or a > 1 for a in self.alphas):
            raise ValueError("alphas must lie in (0, 1]")
        if any(e <= 0 for e in self.eps):
            raise ValueError("eps values must be positive")
        return self

    @property
    def box_half_width(self) -> float:
        if self.L is not None:
            return self.L
        return FIG4_BOX_HALF_WIDTH if self.experiment == ExpansionExperiment.FIG4 else 3.0


class MacroFileConfig(BaseModel):
    """A macro run as written in a config file; expressions are in t, x (and y in 2D)."""

    coefficient: str = "constant"
    constant_value: float | None = None
    dim: int = 1
    lower: list[float] = [0.0]
    upper: list[float] = [1.0]
    H: float = 0.05
    dt: float | None = None  # None picks cfl * H / sqrt(c2)
    T: float = 1.0
    source: str = "0"
    initial: str = "0"
    velocity: str = "0"
    exact: str | None = None  # final-time solution, reported as an L2 error
    flux_mode: FluxMode = FluxMode.REFERENCE
    eps: float | None = None
    eta: float | None = None
    tau: float | None = None
    p: int = 3
    q: int = 6
    pts_per_eps: int = 32
    cell_n: int | None = None
    snapshot_times: list[float] = []
    output: str = "macro.csv"

    @model_validator(mode="after")
    def _check(self) -> MacroFileConfig:
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ValueError(f"lower and upper need {self.dim} components")
        return self
