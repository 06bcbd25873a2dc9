"""Information-maximizing linear projections for mixture signal models.

Design measurement matrices that preserve class information: exact
Bayesian inference through the projection, Monte-Carlo and closed-form
information objectives, four projection designers, and a reproducible
benchmark harness for the standard classification datasets.
"""

__version__ = "0.1.0"

from .classify import PredictionBatch, evaluate, predict
from .datasets import Dataset, StandardizeRecord, load_dataset, standardize
from .designers import (
    DesignerConfig,
    DesignReport,
    RankDeficiencyError,
    SvdDiagnostics,
    design_ida,
    design_lda,
    design_renyi,
    design_shannon,
    kkt_residual,
    orthonormalize,
    random_baseline,
    svd_diagnostics,
    svd_realign,
)
from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    ReportRow,
    build_signal_model,
    emit_report,
    load_config,
    parse_config,
    run_experiment,
    run_experiment_on,
)
from .mixture import (
    ClassGmm,
    EmConfig,
    GaussianComponent,
    NonPositiveDefiniteError,
    SignalModel,
    fit_class_gmm,
    gaussian_logpdf,
    rng_stream,
    sample_joint,
)
from .mmse import MmseEstimate, estimate_mmse, estimate_sigma_tilde, mi_gradient
from .modelio import load_model, load_projection, save_model, save_projection
from .objectives import (
    FanoBounds,
    GaussStats,
    estimate_shannon_mi,
    fano_bounds,
    ida_gradient,
    ida_objective,
    lda_objective,
    renyi_mi_gradient,
    renyi_quadratic_mi,
)
from .posterior import (
    MeasurementModel,
    Posterior,
    ProjectedModel,
    class_log_likelihood,
    class_posterior,
    infer_posterior,
    isotropic_noise,
)

__all__ = [
    "__version__",
    "PredictionBatch",
    "evaluate",
    "predict",
    "Dataset",
    "StandardizeRecord",
    "load_dataset",
    "standardize",
    "DesignerConfig",
    "DesignReport",
    "RankDeficiencyError",
    "SvdDiagnostics",
    "design_ida",
    "design_lda",
    "design_renyi",
    "design_shannon",
    "kkt_residual",
    "orthonormalize",
    "random_baseline",
    "svd_diagnostics",
    "svd_realign",
    "ExperimentConfig",
    "ExperimentReport",
    "ReportRow",
    "build_signal_model",
    "emit_report",
    "load_config",
    "parse_config",
    "run_experiment",
    "run_experiment_on",
    "ClassGmm",
    "EmConfig",
    "GaussianComponent",
    "NonPositiveDefiniteError",
    "SignalModel",
    "fit_class_gmm",
    "gaussian_logpdf",
    "rng_stream",
    "sample_joint",
    "MmseEstimate",
    "estimate_mmse",
    "estimate_sigma_tilde",
    "mi_gradient",
    "load_model",
    "load_projection",
    "save_model",
    "save_projection",
    "FanoBounds",
    "GaussStats",
    "estimate_shannon_mi",
    "fano_bounds",
    "ida_gradient",
    "ida_objective",
    "lda_objective",
    "renyi_mi_gradient",
    "renyi_quadratic_mi",
    "MeasurementModel",
    "Posterior",
    "ProjectedModel",
    "class_log_likelihood",
    "class_posterior",
    "infer_posterior",
    "isotropic_noise",
]
