"""
etadecomp: how much of a prediction's variation is unit level, shock level
and treatment driven.

Predicted outcomes are modelled as scaled copies of the components of the
actual outcome,

    predicted = alpha + eta_mu * mu_i + eta_T * gamma * Treat + eta_eps * eps + nu,

and the package estimates the three ``eta`` coefficients from panel data,
corrects treatment effects measured on predictions, and runs the synthetic
grid used to study these quantities.
"""

from .errors import (
    BootstrapInstabilityError,
    ContaminationError,
    DegenerateRegressorError,
    DimensionError,
    DuplicateKeyError,
    EstimationError,
    EtaDecompError,
    InputError,
    InsufficientPeriodsError,
    MissingVariationError,
    NonPositiveVarianceError,
    ParseError,
    SchemaError,
    UncorrectableError,
    UnstableRatioError,
)
from .estimators import (
    CorrectedEffect,
    DiagnosticReport,
    Eta,
    EtaEstimate,
    Method,
    correct_treatment_effect,
    corrected_effect_bootstrap,
    diagnose_model,
    estimate_eta_epsilon,
    estimate_eta_mu,
    estimate_eta_T,
    rank_models,
)
from .figures import FIGURES, figure_data, write_figures
from .panel import (
    CenteredTable,
    DeltaTable,
    PanelDataset,
    PanelRecord,
    center_panel,
    export_panel,
    load_model_panels,
    load_panel,
    make_deltas,
)
from .regress import (
    BootstrapResult,
    RegressionResult,
    cluster_bootstrap,
    fe_regression,
    ols_no_intercept,
    ols_with_intercept,
    within_regression,
)
from .simulation import (
    DGPParams,
    GridSpec,
    PredictionParams,
    SimulationStats,
    calibration_report,
    compute_stats,
    run_grid,
    simulate_actual,
    simulate_predicted,
)

__version__ = "0.1.0"
