"""Model-based scanning: reconstruct a surface from beam frequency shifts."""
from .solver import (ModelPair, MeasurementSet, SolverConfig, IterationTrace, ConditionReport, run_mbsa,
                     check_convergence_condition, ConfigurationError, ModelDomainError)
from .beam import BeamModel, StiffnessProfile, delta_omega_sq, phi_bar
from .topography import Contour, Section, GrooveSpec

__version__ = "0.1.0"
