"""Group-fairness metrics for rankings under annotation budgets.

The package covers the full pipeline: test-collection ingestion
(`corpus`), exact metrics (`metrics`), budgeted annotation sampling
(`sampling`), estimation from incomplete labels (`estimators`), a
synthetic collection generator (`simulator`), and an experiment harness
with tau/RMSE scoring (`evaluation`). The `fairsample` command wires the
pieces into reproducible pipelines.
"""

from .corpus import (
    AnnotationSet,
    Qrels,
    RankedDoc,
    Ranking,
    RunSet,
    parse_annotations,
    parse_qrels,
    parse_run_file,
    write_annotations,
    write_qrels,
    write_run_file,
)
from .errors import (
    ContractError,
    DataError,
    FairsampleError,
    MissingLabelError,
    ParseError,
    UndefinedCorrelationError,
    UndefinedTargetError,
)
from .estimators import (
    EstimatorKind,
    estimated_divergence,
    ht_exposure_estimate,
    ht_proportion_estimate,
    induced_metric,
    induced_ranking,
    uniform_exposure_estimate,
    uniform_proportion_estimate,
)
from .evaluation import (
    DataPaths,
    ExperimentConfig,
    ExperimentReport,
    kendall_tau,
    rmse,
    run_experiment,
)
from .metrics import (
    MetricKind,
    MetricSpec,
    TargetKind,
    divergence,
    group_exposure,
    group_proportion,
    representation_target,
)
from .sampling import (
    BudgetSpec,
    SamplingDesign,
    pooled_distribution,
    rank_weights,
    stratified_sample,
    stratify,
    uniform_sample,
)
from .simulator import SimConfig, generate_collection, generate_systems, \
    paper_scale_config, simulate

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet", "BudgetSpec", "ContractError", "DataError", "DataPaths",
    "EstimatorKind", "ExperimentConfig", "ExperimentReport", "FairsampleError",
    "MetricKind", "MetricSpec", "MissingLabelError", "ParseError", "Qrels",
    "RankedDoc", "Ranking", "RunSet", "SamplingDesign", "SimConfig",
    "TargetKind", "UndefinedCorrelationError", "UndefinedTargetError",
    "divergence", "estimated_divergence", "generate_collection",
    "generate_systems", "group_exposure", "group_proportion",
    "ht_exposure_estimate", "ht_proportion_estimate", "induced_metric",
    "induced_ranking", "kendall_tau", "paper_scale_config",
    "parse_annotations", "parse_qrels", "parse_run_file",
    "pooled_distribution", "rank_weights", "representation_target", "rmse",
    "run_experiment", "simulate", "stratified_sample", "stratify",
    "uniform_exposure_estimate", "uniform_proportion_estimate",
    "uniform_sample", "write_annotations", "write_qrels", "write_run_file",
]
