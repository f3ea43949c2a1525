"""General M-estimation: solve estimating equations numerically and compute
the empirical sandwich covariance with pluggable corrections."""

from .corrections import (
    CorrectionSpec,
    WeightRule,
    apply_corrections,
    fay_bias_correction,
    newey_west_correction,
    newey_west_weight,
    pairwise_weighted_meat,
)
from .data import (
    Dataset,
    GenConfig,
    design_matrix,
    gen_geexex,
    gen_lunceford,
    partition_units,
    read_csv,
    write_csv,
)
from .estimators import (
    GeeConfig,
    ModelSpec,
    delta_spec,
    doubly_robust_spec,
    gee_spec,
    linear_score_spec,
    logistic_score_spec,
    moments_spec,
    ratio_spec,
)
from .exceptions import (
    ConfigError,
    ContractViolationError,
    CorrectionError,
    DerivativeError,
    EstimationWarning,
    IngestError,
    LayoutError,
    MestimError,
    NonConvergenceError,
    SchemaError,
    SingularMatrixError,
)
from .model import (
    DataUnit,
    EstimatorSpec,
    UnitPartition,
    UnitPsi,
    build_unit_psi,
    stack,
    sum_psi,
)
from .numderiv import DerivControl, jacobian, neg_jacobian_at
from .rootfind import RootControl, RootResult, solve
from .sandwich import (
    MEstimationResult,
    SandwichComponents,
    compute_components,
    compute_sigma,
    m_estimate,
)

__all__ = [
    "CorrectionSpec", "WeightRule", "apply_corrections", "fay_bias_correction",
    "newey_west_correction", "newey_west_weight", "pairwise_weighted_meat",
    "Dataset", "GenConfig", "design_matrix", "gen_geexex", "gen_lunceford",
    "partition_units", "read_csv", "write_csv",
    "GeeConfig", "ModelSpec", "delta_spec", "doubly_robust_spec", "gee_spec",
    "linear_score_spec", "logistic_score_spec", "moments_spec", "ratio_spec",
    "ConfigError", "ContractViolationError", "CorrectionError", "DerivativeError",
    "EstimationWarning", "IngestError", "LayoutError", "MestimError",
    "NonConvergenceError", "SchemaError", "SingularMatrixError",
    "DataUnit", "EstimatorSpec", "UnitPartition", "UnitPsi", "build_unit_psi",
    "stack", "sum_psi",
    "DerivControl", "jacobian", "neg_jacobian_at",
    "RootControl", "RootResult", "solve",
    "MEstimationResult", "SandwichComponents", "compute_components",
    "compute_sigma", "m_estimate",
]
