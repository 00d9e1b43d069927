"""Conditional regularized halfspace depth for sparse functional data.

Depth values for sparsely, irregularly observed and noise-contaminated
curves, evaluated directly at the sparse observations through Gaussian
conditional distributions of projections, plus the estimation, direction
sampling, rank inference and Monte Carlo machinery around them.
"""

__version__ = "0.1.0"

from .conditioning import ConditionalMoments, ObsDesign, blup_scores, build_design, cond_moments, predict_curve
from .depth import (
    DepthRequest,
    DepthResult,
    DepthRow,
    acrhd,
    dense_rhd,
    depth_batch,
    pcrhd,
    two_stage_rhd,
    two_stage_thd,
)
from .dgp import (
    SparseCurve,
    SparseSample,
    TrueModel,
    eigenvalues_from_decay,
    fourier_basis,
    gen_true_curves,
    sample_error,
    sample_scores,
    sparsify,
)
from .directions import (
    AcceptedDirections,
    DirectionPool,
    RegularizationSpec,
    filter_pool,
    lambda_from_quantile,
    pool_from_coords,
    sample_direction_pool,
)
from .exceptions import (
    CrhdError,
    DegenerateDesignError,
    EmptyDirectionSetError,
    InsufficientPairsError,
    SchemaError,
    UndefinedCorrelationError,
)
from .inference import TestResult, depth_kw_test, kw_statistic, rank_min_ties, spearman
from .numerics import (
    DenseCurve,
    Grid,
    inner_product,
    interp_bilinear,
    interp_linear,
    std_normal_cdf,
    substream,
    trapezoid_weights,
)
from .smoothing import (
    Bandwidths,
    FittedModel,
    eigendecompose,
    estimate_noise_variance,
    fit_covariance,
    fit_mean,
    fit_model,
    local_linear_1d,
    model_from_dense,
    select_K_fve,
)
