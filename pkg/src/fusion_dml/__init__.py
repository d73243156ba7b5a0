"""Testing and estimation with fused experimental and observational samples."""

from .core import CellCounts, Dataset, read_csv, validate_dataset, write_csv
from .crossfit import (
    CrossFitConfig,
    Estimate,
    FoldAssignment,
    NuisanceEstimates,
    assign_folds,
    crossfit_nuisances,
    estimate_nuisances,
    repeat_crossfit,
)
from .inference import (
    AteReport,
    EffectEstimate,
    ScoreVector,
    TestReport,
    ThetaReport,
    baseline_experimental_ate,
    baseline_observational_ate,
    estimate_ate,
    estimate_theta,
    lambda_scores,
    phi_scores,
    run_ate,
    run_test,
    test_assumptions,
)
from .learners import LearnerSpec, fit_classifier, fit_regressor, predict, predict_proba
from .sensitivity import SensitivityCurve, breakdown_scan, debias_outcomes
from .simulate import (
    BenchmarkReport,
    DgpConfig,
    generate_confounded_dgp,
    generate_efficiency_dgp,
    generate_fusion_dgp,
    run_benchmark,
)

__version__ = "0.1.0"
