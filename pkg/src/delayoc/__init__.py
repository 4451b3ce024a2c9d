"""delayoc: delayed state-linear optimal control solver and verifier."""

from .commensurable import CommensurableGrid, build_grid, grid_for, reduce_delays
from .errors import (CoverageError, DelayOCError, DimensionMismatch,
                     IndivisibleStep, MaximizerFailure, NoConvergence,
                     NonCommensurable, NonFinite, OutOfWindow, SeamMismatch,
                     SpecFormatError, StrictGridViolation)
from .integrate import (IntegratorConfig, adjoint_rhs, evaluate_cost,
                        integrate_adjoint, integrate_state)
from .library import EXAMPLE_P_COST, ReferenceSolution, example_P, lq_no_delay
from .model import (ControlRegion, DelayPair, DelayedProblem, Solution,
                    TimeHorizon, Violation, validate)
from .reduction import (AugmentedProblem, augment, augmented_cost,
                        evaluate_block_A, flatten_solution, format_block_A,
                        integrate_augmented, integrate_augmented_adjoint,
                        lift_trajectories, map_adjoint, solve_augmented)
from .synthesis import (Certificate, HamiltonianParts, SweepConfig,
                        certificate_report, certify, hamiltonian,
                        maximize_pointwise, sweep)
from .trajectory import Trajectory, read_csv, write_csv
from .transcription import (ComparisonReport, DiscreteProblem, compare,
                            discretize, gradient, solve_discrete,
                            solve_to_solution)

__version__ = "0.1.0"

__all__ = [
    "AugmentedProblem", "Certificate", "CommensurableGrid", "ComparisonReport",
    "ControlRegion", "CoverageError", "DelayOCError", "DelayPair",
    "DelayedProblem", "DimensionMismatch", "DiscreteProblem", "EXAMPLE_P_COST",
    "HamiltonianParts", "IndivisibleStep", "IntegratorConfig",
    "MaximizerFailure", "NoConvergence", "NonCommensurable", "NonFinite",
    "OutOfWindow", "ReferenceSolution", "SeamMismatch", "Solution",
    "SpecFormatError", "StrictGridViolation", "SweepConfig", "TimeHorizon",
    "Trajectory", "Violation", "adjoint_rhs", "augment", "augmented_cost",
    "build_grid", "certificate_report", "certify", "compare", "discretize",
    "evaluate_block_A", "evaluate_cost", "example_P", "flatten_solution",
    "format_block_A", "gradient", "grid_for", "hamiltonian",
    "integrate_adjoint", "integrate_augmented", "integrate_augmented_adjoint",
    "integrate_state", "lift_trajectories", "lq_no_delay", "map_adjoint",
    "maximize_pointwise", "read_csv", "reduce_delays", "solve_augmented",
    "solve_discrete", "solve_to_solution", "sweep", "validate", "write_csv",
]
