"""Three-field mixed FEM for Biot consolidation with residual a posteriori
error estimators and a manufactured-solution study harness."""

from .assembly import Coefficients, SolverError
from .elements import build_layouts, edge_rule_5, time_rule_5, triangle_rule_25
from .estimators import EstimatorOptions, IndicatorEngine, aggregate
from .manufactured import ErrorEngine, benchmark_solution
from .mesh import BoundaryTag, TriMesh, uniform_unit_square
from .stepper import BiotStepper, DiscreteState, HeatStepper, TimeGrid

__all__ = [
    "BiotStepper",
    "BoundaryTag",
    "Coefficients",
    "DiscreteState",
    "ErrorEngine",
    "EstimatorOptions",
    "HeatStepper",
    "IndicatorEngine",
    "SolverError",
    "TimeGrid",
    "TriMesh",
    "aggregate",
    "benchmark_solution",
    "build_layouts",
    "edge_rule_5",
    "time_rule_5",
    "triangle_rule_25",
    "uniform_unit_square",
]
