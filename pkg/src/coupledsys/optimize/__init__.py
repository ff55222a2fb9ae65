"""Collocation transcription of the isolated subsystem and a dense NLP solver."""
from .solver import NlpSolution, SolverConfig, solve
from .transcription import (
    DecisionLayout, Grid, NlpProblem, PathConstraint, QuadraticCost, Transcription,
    amplitude_bound, assemble, c1_zero, c2_dyn, c3_colloc, c5_path, c6_periodic,
    central_jacobian, clearance, decision_bounds, default_cost, equality_count,
    friction_cone, hermite_center, identity_reset, impact_reset, lambda_ceiling,
    seed_guess, solution_to_trajectory,
)

__all__ = [
    "DecisionLayout", "Grid", "NlpProblem", "NlpSolution", "PathConstraint",
    "QuadraticCost", "SolverConfig", "Transcription", "amplitude_bound", "assemble",
    "c1_zero", "c2_dyn", "c3_colloc", "c5_path", "c6_periodic", "central_jacobian",
    "clearance", "decision_bounds", "default_cost", "equality_count", "friction_cone",
    "hermite_center", "identity_reset", "impact_reset", "lambda_ceiling", "seed_guess",
    "solution_to_trajectory", "solve",
]
