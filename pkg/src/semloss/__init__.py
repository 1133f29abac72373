"""Semantic-loss surface fitting over channel SNR and compression ratio."""

__version__ = "0.1.0"

from .dataset import (
    TABLE_NAMES,
    GridError,
    MetricGrid,
    MetricSlice,
    embedded_table,
    export_grid,
    load_grid,
    slice_at_rho,
)
from .unified import (
    TermParams,
    UnifiedGradient,
    UnifiedParams,
    analytic_gradient,
    eval_grid,
    eval_point,
    finite_diff_gradient,
    published_params,
    residuals,
    sse,
)
from .baselines import GSigmoidParams, SumExpParams, eval_gsigmoid, eval_sumexp
from .fitter import (
    FitConfig,
    FitDivergenceError,
    FitReport,
    fit_gsigmoid,
    fit_sumexp,
    fit_unified,
    gradient_check,
)
from .evaluation import (
    ComparisonReport,
    ComparisonRow,
    avg_mse_on_slice,
    compare_models,
    export_surface,
    residual_table,
)
