"""Spectral toolkit for truncated periodic incompressible flow.

Builds and numerically certifies forward-invariant coefficient regions,
estimates the lattice-sum constants behind them, and validates one-sided
growth-rate and truncation-convergence bounds at desk scale.
"""

__version__ = "0.1.0"

from .errors import (
    CertificationError,
    ConsistencyError,
    GalerkinTrapError,
    HypothesisError,
    InvariantViolation,
    ParameterError,
    ResolutionError,
    StepRejectionError,
)
from .spectral_core import (
    ForceField,
    Mode,
    ModeSet,
    PhysicsParams,
    SpectralField,
    enstrophy,
    force_enstrophy_norm,
    leray_project,
    nonlinear_term,
    nonlinear_term_grid,
    pressure_coefficients,
    random_solenoidal_field,
    rhs,
)
from .lattice_bounds import (
    AdvectionBoundReport,
    ConstantEstimate,
    advection_bound_check,
    convolution_bound_scan,
    convolution_lattice_sum,
    estimate_advection_constant,
    estimate_convolution_bound,
    inverse_power_sum,
    uniform_lognorm_bound,
)
from .galerkin_flow import (
    IntegratorConfig,
    LogNormBound,
    RealCoordinates,
    Trajectory,
    enstrophy_inequality_check,
    galerkin_difference_experiment,
    integrate,
    jacobian,
    lipschitz_experiment,
    lognorm_euclidean,
    lognorm_gershgorin,
    project,
    self_convergence_order,
)
from .trapping import (
    Certificate,
    ConditionsReport,
    ExpRegion,
    PolyRegion,
    Region,
    RegionDocument,
    SmallDataRegion,
    TimeExpRegion,
    build_exp_region,
    build_poly_region,
    build_smalldata_region,
    build_time_exp_region,
    certify_inward,
    check_compactness_conditions,
    contains,
    region_conditions,
    region_from_dict,
    region_to_dict,
    trajectory_contained,
)
