"""Allen-Cahn and Cahn-Hilliard flows on implicit surfaces with a trace finite element method."""
from .errors import ConfigError, NonFiniteState, SolverFailure, TracePhaseError
from .fem import TraceSpace
from .geometry import ImplicitSurface
from .models import AllenCahn, CahnHilliard, ModelParams, make_stepper
from .solvers import LinearSolver, SolverConfig

__version__ = "0.1.0"

__all__ = [
    "AllenCahn", "CahnHilliard", "ConfigError", "ImplicitSurface", "LinearSolver", "ModelParams",
    "NonFiniteState", "SolverConfig", "SolverFailure", "TracePhaseError", "TraceSpace", "make_stepper",
]
