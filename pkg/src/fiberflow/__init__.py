"""Numerical laboratory for fiberwise Kahler-Ricci flow on families of
bounded strongly pseudoconvex domains."""

from .errors import (
    FiberflowError,
    ConfigurationError,
    OutsideDomainError,
    DegenerateFamilyError,
    DegenerateMetricError,
    EmptyMaskError,
    FlowBreakdownError,
    StabilityError,
    NonconvergenceError,
    OracleDefectError,
    SnapshotMismatchError,
)
from .forms import (
    HermitianForm,
    HorizontalLift,
    fiber_inverse,
    geodesic_curvature,
    horizontal_lift,
    volume_identity_gap,
)
from .families import (
    FamilySpec,
    Jet2,
    ReferenceData,
    eval_jet,
    F_density,
    reference_form,
    jet_arrays,
    reference_arrays,
    fiber_bbox,
)
from .fiber_flow import (
    FiberGrid,
    FlowState,
    FlowResult,
    NewtonResult,
    build_grid,
    boundary_closure,
    ma_rhs,
    dt_stable,
    step,
    initial_state,
    solve_flow,
    newton_ke,
)
from .assembly import (
    BaseStencil,
    TotalFormField,
    build_stencil,
    assemble_total_form,
    fiber_metric,
    c_field,
    dbar_v_norm_sq,
    berman_residual,
    relative_flow_residual,
    ke_relative_residual,
    ni_integral,
    growth_fit,
)
from .oracles import ORACLE_KINDS, OracleCase, oracle, self_check

__version__ = "0.1.0"
