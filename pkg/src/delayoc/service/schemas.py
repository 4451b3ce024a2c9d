"""Request/response models of the solve service.

Trajectories travel as plain ``t``/``values`` arrays; the declarative
problem description reuses :class:`delayoc.specfile.ProblemSpecModel`, the
same schema the CLI reads from disk.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..specfile import ProblemSpecModel
from ..trajectory import Trajectory


class TrajectoryModel(BaseModel):
    t: list[float]
    values: list[list[float]]

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "TrajectoryModel":
        return cls(t=[float(v) for v in traj.grid],
                   values=[[float(v) for v in row] for row in traj.values])

    def to_trajectory(self, interp: str = "cubic",
                      block: int | None = None) -> Trajectory:
        return Trajectory(grid=self.t, values=self.values, interp=interp, block=block)


class GridModel(BaseModel):
    h: float
    k: int
    l: int
    N: int
    b_tilde: float
    strict_ok: bool


class SolveRequest(BaseModel):
    problem: ProblemSpecModel
    method: Literal["sweep", "augmented", "transcription"] = "sweep"
    scheme: Literal["euler", "rk4"] = "rk4"
    quadrature: Literal["riemann", "trapezoid", "simpson"] = "simpson"
    step: float = Field(default=1e-3, gt=0)
    subintervals: int = Field(default=2000, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    max_iters: int = Field(default=200, ge=1)
    strict: bool = False


class SolveResponse(BaseModel):
    cost: float
    method: str
    converged: bool
    grid: GridModel
    state: TrajectoryModel
    control: TrajectoryModel
    adjoint: Optional[TrajectoryModel] = None
    diagnostics: dict = Field(default_factory=dict)


class VerifyRequest(BaseModel):
    problem: ProblemSpecModel
    state: TrajectoryModel
    control: TrajectoryModel
    adjoint: Optional[TrajectoryModel] = None
    samples: int = Field(default=200, ge=1)
    seed: int = 0


class VerifyResponse(BaseModel):
    convexity_pass: bool
    convexity_worst_eig: float
    maximality_pass: bool
    maximality_worst_residual: float
    adjoint_pass: bool
    adjoint_worst_residual: float
    transversality_pass: bool
    transversality_abs: float
    samples: int
    overall: bool
    report: str


class ReduceRequest(BaseModel):
    problem: ProblemSpecModel
    t_query: Optional[float] = None
    ratio_tol: float = Field(default=1e-9, gt=0)
    strict: bool = False


class ReduceResponse(BaseModel):
    grid: GridModel
    t_query: Optional[float] = None
    A_tilde: Optional[list[list[float]]] = None
    A_tilde_text: Optional[str] = None


class CompareRequest(BaseModel):
    problem: ProblemSpecModel
    scheme: Literal["euler", "rk4"] = "rk4"
    quadrature: Literal["riemann", "trapezoid", "simpson"] = "simpson"
    step: float = Field(default=1e-3, gt=0)
    subintervals: int = Field(default=2000, ge=1)
    tol: float = Field(default=1e-7, gt=0)
    max_iters: int = Field(default=3000, ge=1)


class CompareResponse(BaseModel):
    cost_sweep: float
    cost_transcription: float
    cost_gap: float
    control_sup_gap: float
    state_sup_gap: float
    points: int
    table: str  # rows t,u_sweep,x_sweep,u_transcription,x_transcription


class ExampleResponse(BaseModel):
    name: str
    spec_text: str
    reference_cost: Optional[float] = None
