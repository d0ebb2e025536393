"""Size-structured population dynamics with spatial diffusion and
adjoint-based optimal fertility control."""

from .adjoint import (
    AdjointSolution,
    SensitivitySolution,
    duality_residual,
    solve_adjoint,
    solve_sensitivity,
)
from .characteristics import (
    BoundaryCurves,
    CharacteristicPoint,
    boundary_curves,
    classify_growth_case,
    decay_factor,
    entry_time,
    exit_time,
    integrate_characteristic,
)
from .forward import (
    StateSolution,
    StepContext,
    compute_renewal,
    solve_state,
    step_diffusion,
    step_transport_reaction,
    total_population,
)
from .model import (
    ControlBounds,
    CostParams,
    Field,
    Grid3,
    GrowthCase,
    NumericalError,
    Scenario,
    ScenarioValidationError,
    Tolerances,
    ValidatedScenario,
    VitalRates,
    validate_scenario,
)
from .optimizer import (
    ContractionDiagnostics,
    OptimizationReport,
    contraction_diagnostics,
    evaluate_cost,
    fixed_point_update,
    gradient_field,
    optimize,
    project_F,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
