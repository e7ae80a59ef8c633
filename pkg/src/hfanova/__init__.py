"""Functional ANOVA for Hilbert-valued fixed-effect models with correlated Gaussian errors."""

from .anova import (
    VarianceComponents,
    component_kernels,
    expected_components,
    residual_projector,
    residual_projectors,
    sum_squares,
)
from .distributions import (
    QuadFormSpec,
    cdf,
    cf,
    component_spec,
    det_cf_factor,
    det_mgf_factor,
    mgf,
    quadform_canonical,
    quantile,
)
from .errors import (
    AccuracyError,
    ConvergenceError,
    DimensionError,
    DomainError,
    HfanovaError,
    NumericError,
    RankError,
    SingularityError,
    ValidationError,
)
from .estimation import (
    GlsFit,
    check_estimability,
    estimator_covariance,
    expected_quadform,
    gls_fit,
)
from .model import (
    ModelSpec,
    SpectrumFamily,
    build_lambda,
    model_from_family,
    power_law_family,
    pseudodiff_spectrum,
    validate_a0,
)
from .simulation import SimConfig, empirical_cdf, mc_moments, sample_dataset, sample_datasets
from .spectral import (
    BasisMeta,
    CoefficientBlock,
    SpectralMatrixOperator,
    bilinear_form,
    op_apply,
    op_compose,
    op_inverse,
    op_sqrt,
    op_trace,
    project,
    reconstruct,
)
from .testing import TestResult, TestSpec, global_stat, null_distribution, perk_chisq, run_test
from .weights import WeightOperator, WeightPlan, build_weights, check_weight_conditions, eig_lambda

__version__ = "0.1.0"
