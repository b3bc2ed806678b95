"""Budget-constrained audit selection on weighted taxpayer populations."""

from .allocation import (
    Allocation,
    CostModel,
    DollarBudget,
    RateBudget,
    build_cost_model,
    default_cost_model,
    estimate_costs,
    monotone_allocation,
    oracle_allocation,
    roi_allocation,
    topk_allocation,
)
from .errors import AuditAllocError
from .experiment import ExperimentConfig, run_experiment
from .fairness import (
    DisparityReport,
    FairnessConstraint,
    constraint_disparity,
    fit_reduction,
    postprocess_thresholds,
)
from .metrics import (
    GroupStats,
    MetricsReport,
    audit_rate_by_bucket,
    check_monotone,
    lemma1_check,
    lemma2_check,
    net_revenue,
    no_change_rate,
    oracle_overlap,
    revenue,
    total_cost,
)
from .population import (
    Population,
    PopulationConfig,
    TaxpayerRecord,
    assign_buckets,
    generate_population,
    load_population,
    misreport_flag,
    save_population,
    split,
    weighted_subsample,
    winsorize_misreports,
)
from .scoring import ModelSpec, Scorer, ScoreVector, TargetKind, fit_scorer, oracle_scorer, score
from .suites import run_suite

__version__ = "0.1.0"
