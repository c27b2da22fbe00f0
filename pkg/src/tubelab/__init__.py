"""Level-set laboratory for regular tubes carried by divergence-free flows."""

from .errors import (
    ConfigurationError,
    ContourError,
    DegeneracyError,
    DomainError,
    HypothesisError,
    InputError,
    NearStationaryError,
    PreconditionError,
    StepSizeError,
    TubeLabError,
)
from .flow_fields import (
    Box3,
    SpeedEnvelope,
    VectorPotential,
    VelocityField,
    builtin_field,
    curl_of_potential,
    eval_velocity,
    speed_envelope,
    sup_speed,
)
from .tube_levelset import (
    GridSpec,
    LevelSetState,
    ValidityReport,
    advect,
    exact_levelset,
    init_levelset,
    interp_gradient,
    interp_theta,
    validate_regular_tube,
)
from .slice_geometry import (
    IdentityReport,
    SliceContour,
    SurfaceSample,
    boundary_integral,
    boundary_length,
    check_identity_14,
    slice_area,
    slice_contour,
    surface_integral_sliced,
    surface_integral_weighted,
    surface_samples,
    tube_volume,
)
from .graph_oracle import (
    GraphTube,
    check_sigma_relation,
    graph_normals,
    graph_sigma,
    graph_sigma_tilde,
    graph_to_levelset,
    graph_tube,
)
from .theorem_harness import (
    TimeSeriesRecord,
    TubeWindow,
    divergence_flux_residual,
    endpoint_speed_check,
    pick_t0,
    run_noncollapse_experiment,
    volume_balance_residual,
    window_endpoints,
)
from .config import ScenarioConfig, parse_config

__version__ = "0.1.0"
