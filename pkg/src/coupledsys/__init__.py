"""Coupled control systems: decomposition, isolated subsystems, simulation and orbit design."""
__version__ = "0.1.0"

from .ccs import Box, CcsModel, CcsState, CouplingGraph, SubsystemModel
from .errors import ConvergenceError, DimensionError, SingularityError
from .reduction import (
    CouplingRelation, IsolatedModel, build_relation, coupling_solve, isolated_rhs,
    zero_invariance_residual,
)
from .simulate import (
    IntegratorConfig, Trajectory, reconstruct_full, simulate_full_cds, simulate_isolated,
)

__all__ = [
    "Box", "CcsModel", "CcsState", "ConvergenceError", "CouplingGraph", "CouplingRelation",
    "DimensionError", "IntegratorConfig", "IsolatedModel", "SingularityError",
    "SubsystemModel", "Trajectory", "__version__", "build_relation", "coupling_solve",
    "isolated_rhs", "reconstruct_full", "simulate_full_cds", "simulate_isolated",
    "zero_invariance_residual",
]
