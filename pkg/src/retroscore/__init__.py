"""Score tests for case-control genetic association.

Retrospective tests exploit known disease prevalence through the
intercept anchor of the random-effect score; prospective tests anchor at
the fitted intercept instead.  The package also provides the plug-in
variance estimators, the p-value numerics (chi-square mixtures and
multivariate normal rectangle probabilities), a quota-sampling
simulation harness, and a command-line interface.
"""

__version__ = "0.1.0"

from .data_model import (
    CaseControlDataset,
    LogisticFit,
    PrevalenceSpec,
    validate_dataset,
)
from .errors import (
    DataValidationError,
    DegenerateStatisticError,
    FitError,
    NonConvergenceError,
    NumericError,
    RankDeficiencyError,
    RetroScoreError,
    SeparationError,
)
from .logistic_mle import (
    NewtonConfig,
    case_control_weights,
    fit_logistic,
    fit_null_both,
    fit_null_theta,
)
from .pvalue_numerics import MvnConfig, MvnResult, chi2_sf, mvn_cdf, rsmax_sf, ssmax_sf
from .score_engine import (
    ScoreBundle,
    d_g_d_theta,
    score_bundle,
    score_u1,
    score_u1_prospective,
    score_u2,
    score_u2_prospective,
)
from .score_tests import (
    DEFAULT_INTERVAL,
    METHOD_NAMES,
    TestResult,
    alpha_grid,
    evaluate_methods,
    fs_test,
    rs_max_test,
    rs_test,
    ss_max_test,
    ss_test,
    standardize,
)
from .simulation import (
    MethodCell,
    RejectionTable,
    SimulationScenario,
    generate_case_control,
    generate_genotypes,
    run_scenario,
    scenario_from_file,
    scenario_preset,
)
from .variance_estimation import (
    NuisanceMatrices,
    VarianceBundle,
    nuisance_matrices,
    sigma11_hat,
    sigma11_matrix,
    sigma22_hat,
    sigma_s,
    variance_bundle,
)

__all__ = [
    "__version__",
    "CaseControlDataset",
    "LogisticFit",
    "PrevalenceSpec",
    "validate_dataset",
    "RetroScoreError",
    "DataValidationError",
    "NumericError",
    "FitError",
    "NonConvergenceError",
    "SeparationError",
    "RankDeficiencyError",
    "DegenerateStatisticError",
    "NewtonConfig",
    "fit_logistic",
    "fit_null_both",
    "fit_null_theta",
    "case_control_weights",
    "ScoreBundle",
    "d_g_d_theta",
    "score_u1",
    "score_u1_prospective",
    "score_u2",
    "score_u2_prospective",
    "score_bundle",
    "NuisanceMatrices",
    "VarianceBundle",
    "nuisance_matrices",
    "sigma11_hat",
    "sigma11_matrix",
    "sigma22_hat",
    "sigma_s",
    "variance_bundle",
    "MvnConfig",
    "MvnResult",
    "chi2_sf",
    "mvn_cdf",
    "rsmax_sf",
    "ssmax_sf",
    "TestResult",
    "METHOD_NAMES",
    "DEFAULT_INTERVAL",
    "standardize",
    "alpha_grid",
    "fs_test",
    "rs_test",
    "ss_test",
    "rs_max_test",
    "ss_max_test",
    "evaluate_methods",
    "SimulationScenario",
    "MethodCell",
    "RejectionTable",
    "scenario_preset",
    "generate_genotypes",
    "generate_case_control",
    "run_scenario",
    "scenario_from_file",
]
