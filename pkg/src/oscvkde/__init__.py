"""Kernel density bandwidth selection by one-sided cross-validation."""

__version__ = "0.1.0"

from .errors import (
    DegenerateCriterion,
    DegenerateJumps,
    DegenerateKernel,
    InvalidBandwidth,
    InvalidParam,
    InvalidSample,
    InvalidSpec,
    NonIntegrableTail,
    NotRobustKernel,
    OSCVError,
    ParseError,
    QuadratureFailure,
    SmoothDensity,
    UnknownKernelLabel,
)
from .functionals import (
    DEFAULT_CONFIG,
    QuadratureConfig,
    b_functional,
    partial_first_moment,
    partial_mass,
    roughness,
    second_moment,
)
from .kernels import (
    LI_CANDIDATES,
    ROBUST_LI,
    Kernel,
    LIParams,
    gaussian,
    kernel_from_label,
    make_base_kernel,
    make_LI,
    make_one_sided,
    make_polynomial_onesided,
    one_sided_gaussian,
    rescale_kernel,
)
from .rescaling import (
    ConstantsRecord,
    constant_nonsmooth,
    constant_smooth,
    constants_record,
    e_c,
    relative_bias,
    scan_robust,
)
from .selection import (
    BandwidthSelection,
    CriterionCurve,
    GridPolicy,
    Mode,
    kde,
    lscv_curve,
    oscv_curve,
    select,
)
from .simulation import (
    LaplaceMixture,
    NormalDensity,
    SimulationReport,
    h_star,
    ise,
    ise_optimal_bandwidth,
    make_density,
    monte_carlo_study,
    run_replication,
    sample_density,
)
