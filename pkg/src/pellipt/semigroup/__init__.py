"""Finite-element semigroups for perturbed divergence-form operators."""

from .approximation import (
    SupportViolation,
    cutoff_lower_order,
    mollify_coefficients,
    truncate_potential,
    truncation_convergence_experiment,
    truncation_threshold,
)
from .assembly import (
    CoefficientFields,
    DiscreteOperator,
    NegativePotential,
    NonAccretive,
    assemble,
    sector_angle_bound,
    sector_check,
)
from .evolution import SemigroupTrace, SolverFailure, evolve, lumped_lp_norm
from .experiments import (
    ContractionViolated,
    HorizonTooShort,
    MonotonicityViolated,
    bilinear_functional,
    complex_potential_mode,
    flow_monotonicity,
    lp_contractivity_experiment,
    quasi_contraction_shift,
)
from .mesh import BoundarySpec, GridDomain, InvalidMesh, interval_mesh, rectangle_mesh

__all__ = [
    "BoundarySpec", "CoefficientFields", "ContractionViolated", "DiscreteOperator", "GridDomain",
    "HorizonTooShort", "InvalidMesh", "MonotonicityViolated", "NegativePotential", "NonAccretive",
    "SemigroupTrace", "SolverFailure", "SupportViolation", "assemble", "bilinear_functional",
    "complex_potential_mode", "cutoff_lower_order", "evolve", "flow_monotonicity", "interval_mesh",
    "lp_contractivity_experiment", "lumped_lp_norm", "mollify_coefficients", "quasi_contraction_shift",
    "rectangle_mesh", "sector_angle_bound", "sector_check", "truncate_potential",
    "truncation_convergence_experiment", "truncation_threshold",
]
