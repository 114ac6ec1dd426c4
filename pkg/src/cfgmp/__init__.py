"""Manifold-projected classifier-free guidance on analytic point-cloud worlds.

Closed-form ideal velocity fields for weighted labelled point clouds, the
CFG-MP and CFG-MP+ samplers (incremental projection operators with
optional Anderson acceleration) and the diagnostics used to study them.
"""

from .anderson import AASpec, AAState, aa_step, solve_weights, solve_weights_batch
from .diagnostics import (
    GapProfile,
    GuidanceDiagnostic,
    decomposition_check,
    energy_distance,
    gap_profile,
    optimal_w,
    relative_change_r,
    sample_quality,
)
from .errors import (
    CfgMpError,
    ConfigError,
    DiagnosticError,
    DivergenceError,
    FieldError,
    OperatorError,
    WorldError,
)
from .fields import (
    CFGField,
    DistilledField,
    IdealField,
    PerturbedField,
    cfg_velocity,
    distilled_velocity,
    eval_field,
    prediction_gap,
)
from .projection import OperatorSpec, ProjectionResult, apply_operator, project
from .samplers import BatchResult, SamplerConfig, TrajectoryRecord, generate_batch, sample
from .world import (
    LabeledPointCloud,
    ideal_velocity,
    load_world,
    make_world,
    posterior_mean,
    posterior_weights,
    potential_f,
    potential_gradient,
    smoothed_sq_distance,
)

__version__ = "0.1.0"
