"""Random Riemannian metrics on the plane.

Sampling of Gaussian-derived SPD metric fields, geodesic integration in
normalized velocity coordinates, the point-of-view flow and its density,
grid Riemannian distance, Jacobi fields and conjugate points, bump-metric
construction, and finite-grid conditional Gaussian measures.
"""

from .covariance import CovarianceModel, cov_tensor, wendland_profile
from .errors import (
    ChartFailure,
    CholeskyFailure,
    ConfigError,
    HorizonExceeded,
    LeftDomain,
    NoExit,
    NonPositiveSpectrum,
    OutOfDomain,
    OutOfRange,
    OutOfRegion,
    PreconditionZ,
    RoughPlaneError,
    SingularBlock,
)
from .field import GridSpec, TensorFieldSample, derive_seeds, load_field, sample_field, save_field
from .fluctuation import Ball, Cone, Lens, Point, c21_distance, z_fluctuation, z_point
from .geodesic import (
    UNBOUNDED,
    GeodesicPath,
    UnitTangentState,
    divergence_U,
    exit_angle,
    exit_time,
    flow_field,
    integrate,
)
from .metric import (
    ConformalMetric,
    ConstantMetric,
    FlatMetric,
    GridMetricField,
    MetricField,
    PerturbedMetricField,
    RigidMotion,
    TransformedMetricField,
    christoffel,
    constant_curvature_metric,
    gauss_curvature,
    linear_conformal_metric,
    phi_transform,
)
from .pov import (
    PovMetric,
    historical_exit_times,
    pov_transform,
    rho_density,
    verify_change_of_variables,
)
from .distance import (
    DistanceMap,
    FrontierReport,
    calibrate_bias,
    distance_map,
    frontier_scan,
    is_minimizing,
    minimizing_fraction,
    shape_constant,
)
from .jacobi import JacobiSolution, first_conjugate_point, jacobi_integrate, t_star
from .bump import (
    BumpMetricField,
    BumpSpec,
    bump_event,
    build_bump,
    cone_tests,
    curvature_profile,
    fermi_chart,
    fermi_metric,
    make_bump_spec,
)
from .conditioning import (
    GridGaussian,
    condition,
    conditional_sample,
    grid_gaussian,
    monotonicity_check,
    uniform_probability_demo,
)

__version__ = "0.1.0"
